#include "beamloc/levmar.hpp"

namespace beamloc::opt {

LevMarResult levmar(const std::function<VectorXd()>& residuals,
                    const std::function<MatrixXd()>& jacobian,
                    const std::function<void(const VectorXd&)>& apply,
                    const LevMarOptions& opts) {
    LevMarResult res;
    VectorXd r = residuals();
    double cost = r.squaredNorm();
    double lambda = opts.lambda0;

    for (int iter = 0; iter < opts.max_iters; ++iter) {
        res.iterations = iter + 1;
        const MatrixXd j = jacobian();
        const MatrixXd h = j.transpose() * j;
        const VectorXd g = j.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < opts.gtol) {
            res.converged = true;
            break;
        }

        bool accepted = false;
        while (lambda < 1e14) {
            MatrixXd damped = h;
            for (Eigen::Index i = 0; i < h.rows(); ++i)
                damped(i, i) += lambda * std::max(h(i, i), 1e-12);
            const VectorXd step = damped.ldlt().solve(-g);
            apply(step);
            const VectorXd r_try = residuals();
            const double cost_try = r_try.squaredNorm();
            if (cost_try < cost) {
                const double drop = cost - cost_try;
                r = r_try;
                cost = cost_try;
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                // A tiny drop only counts as convergence when the damping is
                // relaxed; inflated damping means the quadratic model is not
                // trusted yet and the crawl may still escape.
                if (drop < opts.ftol * std::max(1.0, cost) && lambda <= opts.lambda0)
                    res.converged = true;
                break;
            }
            apply(-step);
            lambda *= 10.0;
        }
        if (!accepted || res.converged) {
            if (!accepted) res.converged = true;  // no descent direction left
            break;
        }
    }
    res.cost = cost;
    return res;
}

Matrix3d skew(const Vector3d& v) {
    Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

Matrix3d rotation_exp(const Vector3d& axis_angle) {
    const double angle = axis_angle.norm();
    if (angle < 1e-12) return Matrix3d::Identity() + skew(axis_angle);
    const Vector3d axis = axis_angle / angle;
    const Matrix3d k = skew(axis);
    return Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

Vector3d rotation_log(const Matrix3d& r) {
    const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double angle = std::acos(c);
    if (angle < 1e-12) return {0, 0, 0};
    Vector3d axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
    if (angle > pi - 1e-6) {
        // Near pi the antisymmetric part vanishes; recover the axis from the
        // symmetric part instead.
        Eigen::SelfAdjointEigenSolver<Matrix3d> es((r + Matrix3d::Identity()) / 2.0);
        Vector3d a = es.eigenvectors().col(2);
        return angle * a.normalized();
    }
    return axis * (angle / (2.0 * std::sin(angle)));
}

}  // namespace beamloc::opt
