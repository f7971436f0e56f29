#pragma once

#include <functional>

#include "beamloc/common.hpp"

namespace beamloc::opt {

struct LevMarOptions {
    int max_iters = 200;
    double ftol = 1e-12;      // absolute tolerance on the cost decrease
    double gtol = 1e-14;      // gradient-norm stop
    double lambda0 = 1e-3;
};

struct LevMarResult {
    double cost = 0.0;  // sum of squared residuals at the final state
    int iterations = 0;
    bool converged = false;
};

/// Damped Gauss-Newton over an implicit state. `residuals`/`jacobian`
/// evaluate at the current state; `apply` retracts a local increment into the
/// state and must be exactly undone by `apply(-step)` (true for additive
/// parameters and right-multiplied rotation exponentials).
LevMarResult levmar(const std::function<VectorXd()>& residuals,
                    const std::function<MatrixXd()>& jacobian,
                    const std::function<void(const VectorXd&)>& apply,
                    const LevMarOptions& opts = {});

Matrix3d rotation_exp(const Vector3d& axis_angle);
Vector3d rotation_log(const Matrix3d& r);
Matrix3d skew(const Vector3d& v);

}  // namespace beamloc::opt
