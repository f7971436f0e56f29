#pragma once

#include <functional>
#include <optional>

#include "beamloc/doa.hpp"

namespace beamloc::loc {

/// Rigid transform from a device's local frame into the global frame.
struct Pose {
    Matrix3d rotation = Matrix3d::Identity();
    Vector3d translation = Vector3d::Zero();

    void validate() const;  // orthonormal within 1e-9, det +1
};

struct Ray {
    Vector3d origin = Vector3d::Zero();
    Vector3d direction = Vector3d::UnitZ();  // unit norm
};

struct Fix {
    Vector3d position = Vector3d::Zero();
    double divergence_m = 0.0;  // mean orthogonal distance to the rays
    int device_count = 0;
    double t = 0.0;
};

Ray to_global(const Pose& pose, const doa::DoaEstimate& local_doa);

/// Least-squares intersection of L >= 2 rays. Throws NumericalError when the
/// normal system is close to singular (near-parallel rays).
Fix triangulate(std::span<const Ray> rays, double cond_limit = 1e8);

struct FilterStats {
    std::vector<Fix> kept;
    double retained_fraction = 0.0;
};

FilterStats filter_fixes(std::span<const Fix> fixes, double limit_m);

// ----------------------------------------------------------------- PnP

struct PnpObservation {
    Vector3d tag_position;   // known global position
    double azimuth = 0.0;    // measured local DoA
    double elevation = 0.0;
};

struct SolverOptions {
    int max_iters = 200;
    double ftol = 1e-12;
    int starts = 20;
    std::uint64_t seed = 7;
};

struct PnpResult {
    Pose pose;
    double residual = 0.0;  // sum of squared angular errors, rad^2
    bool converged = false;
    int iterations = 0;
};

/// Device pose from known tag positions and measured local directions:
/// nonlinear least squares over SO(3) x R^3 with multi-start. The optimized
/// residual is the chordal distance 2 sin(theta/2) per observation, which
/// agrees with the angular error to second order.
PnpResult pnp_calibrate(std::span<const PnpObservation> observations,
                        const SolverOptions& opts = {});

// ------------------------------------------------------- self-calibration

struct SelfCalObservation {
    Vector3d d1;  // unit direction measured by device 1 (global frame)
    Vector3d d2;  // unit direction measured by device 2 (its local frame)
};

struct SelfCalOptions {
    SolverOptions solver;
    double prior_weight_scale = 0.1;          // soft prior weight = scale * T
    std::optional<Vector3d> direction_prior;  // unit vector device1 -> device2
};

struct SelfCalResult {
    Pose pose2;
    VectorXd range1;  // per-sample source distance from device 1
    VectorXd range2;
    double residual = 0.0;  // E = sum ||r(t)||^2 at the solution
    bool converged = false;
    int iterations = 0;
};

/// Joint pose-and-range estimation for a second device from paired direction
/// streams of a moving source. Device 1 sits at the origin with identity
/// orientation; the known inter-device distance fixes the scale (the
/// translation is optimized on that sphere), rotations stay on SO(3) via
/// exponential-map increments, and ranges stay positive via log
/// parameterization.
SelfCalResult self_calibrate(std::span<const SelfCalObservation> observations,
                             double device_distance_m, const SelfCalOptions& opts = {});

/// Angle between two rotations, radians.
double rotation_angle(const Matrix3d& a, const Matrix3d& b);

/// The exact least-squares problems the calibrators optimize, exposed so the
/// analytic Jacobians can be checked against finite differences. The closures
/// share owned state; `apply` retracts an increment (undone by `apply(-step)`).
struct LsqProblem {
    std::function<VectorXd()> residuals;
    std::function<MatrixXd()> jacobian;
    std::function<void(const VectorXd&)> apply;
    Eigen::Index dim = 0;
};

LsqProblem pnp_problem(std::vector<PnpObservation> observations);
LsqProblem self_cal_problem(std::vector<SelfCalObservation> observations,
                            double device_distance_m, const SelfCalOptions& opts);

}  // namespace beamloc::loc
