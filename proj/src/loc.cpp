#include "beamloc/loc.hpp"

#include <algorithm>
#include <memory>

#include "beamloc/levmar.hpp"

namespace beamloc::loc {

using opt::rotation_exp;
using opt::skew;

void Pose::validate() const {
    if ((rotation.transpose() * rotation - Matrix3d::Identity()).norm() > 1e-9)
        throw InvalidArgument("pose rotation is not orthonormal");
    if (rotation.determinant() < 0.0) throw InvalidArgument("pose rotation is reflected");
}

Ray to_global(const Pose& pose, const doa::DoaEstimate& local_doa) {
    pose.validate();
    return {pose.translation,
            pose.rotation * sim::unit_dir(local_doa.azimuth, local_doa.elevation)};
}

Fix triangulate(std::span<const Ray> rays, double cond_limit) {
    if (rays.size() < 2) throw InvalidArgument("triangulate: need at least two rays");
    Matrix3d a = Matrix3d::Zero();
    Vector3d b = Vector3d::Zero();
    for (const auto& r : rays) {
        if (std::abs(r.direction.norm() - 1.0) > 1e-9)
            throw InvalidArgument("triangulate: ray direction must be unit length");
        const Matrix3d proj = Matrix3d::Identity() - r.direction * r.direction.transpose();
        a += proj;
        b += proj * r.origin;
    }
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(a);
    const double lmin = es.eigenvalues()(0), lmax = es.eigenvalues()(2);
    if (!(lmin > 0.0) || lmax / lmin > cond_limit)
        throw NumericalError("triangulate: degenerate ray geometry");
    Fix fix;
    fix.position = es.eigenvectors() *
                   es.eigenvalues().cwiseInverse().asDiagonal() *
                   es.eigenvectors().transpose() * b;
    double acc = 0.0;
    for (const auto& r : rays) {
        const Matrix3d proj = Matrix3d::Identity() - r.direction * r.direction.transpose();
        acc += (proj * (fix.position - r.origin)).norm();
    }
    fix.divergence_m = acc / static_cast<double>(rays.size());
    fix.device_count = static_cast<int>(rays.size());
    return fix;
}

FilterStats filter_fixes(std::span<const Fix> fixes, double limit_m) {
    if (limit_m <= 0.0) throw InvalidArgument("filter_fixes: limit must be > 0");
    FilterStats out;
    for (const auto& f : fixes)
        if (f.divergence_m <= limit_m) out.kept.push_back(f);
    out.retained_fraction =
        fixes.empty() ? 0.0
                      : static_cast<double>(out.kept.size()) / static_cast<double>(fixes.size());
    return out;
}

double rotation_angle(const Matrix3d& a, const Matrix3d& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

namespace {

Matrix3d random_rotation(Rng& rng) {
    Vector3d axis{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    if (axis.norm() < 1e-12) axis = Vector3d::UnitZ();
    axis.normalize();
    return rotation_exp(axis * rng.uniform(0.0, pi));
}

}  // namespace

// ------------------------------------------------------------------- PnP

namespace {

struct PnpState {
    Matrix3d r = Matrix3d::Identity();
    Vector3d p = Vector3d::Zero();
    std::vector<Vector3d> dirs;  // measured local unit directions
};

std::pair<LsqProblem, std::shared_ptr<PnpState>> make_pnp_problem(
    std::vector<PnpObservation> observations) {
    auto state = std::make_shared<PnpState>();
    for (const auto& o : observations)
        state->dirs.push_back(sim::unit_dir(o.azimuth, o.elevation));
    auto obs = std::make_shared<std::vector<PnpObservation>>(std::move(observations));

    LsqProblem prob;
    prob.dim = 6;
    // Residual per observation: chordal distance between the rotated
    // measurement and the unit vector toward the tag, 2 sin(theta/2); equal
    // to the angular error to second order and smooth everywhere.
    prob.residuals = [state, obs]() {
        VectorXd r(3 * static_cast<Eigen::Index>(obs->size()));
        for (std::size_t i = 0; i < obs->size(); ++i) {
            const Vector3d a = state->r * state->dirs[i];
            const Vector3d b = (*obs)[i].tag_position - state->p;
            const double n = b.norm();
            if (n < 1e-9) throw NumericalError("pnp: pose coincides with a tag");
            r.segment<3>(3 * static_cast<Eigen::Index>(i)) = a - b / n;
        }
        return r;
    };
    prob.jacobian = [state, obs]() {
        MatrixXd j(3 * static_cast<Eigen::Index>(obs->size()), 6);
        for (std::size_t i = 0; i < obs->size(); ++i) {
            const Vector3d b = (*obs)[i].tag_position - state->p;
            const double n = b.norm();
            const Vector3d bh = b / n;
            const auto row = 3 * static_cast<Eigen::Index>(i);
            j.block<3, 3>(row, 0) = -state->r * skew(state->dirs[i]);
            j.block<3, 3>(row, 3) = (Matrix3d::Identity() - bh * bh.transpose()) / n;
        }
        return j;
    };
    prob.apply = [state](const VectorXd& step) {
        state->r = state->r * rotation_exp(step.head<3>());
        state->p += step.tail<3>();
    };
    return {std::move(prob), state};
}

}  // namespace

LsqProblem pnp_problem(std::vector<PnpObservation> observations) {
    return make_pnp_problem(std::move(observations)).first;
}

PnpResult pnp_calibrate(std::span<const PnpObservation> observations,
                        const SolverOptions& opts) {
    if (observations.size() < 3)
        throw InvalidArgument("pnp: need at least three observations");

    Vector3d centroid = Vector3d::Zero();
    for (const auto& o : observations) centroid += o.tag_position;
    centroid /= static_cast<double>(observations.size());
    Matrix3d scatter = Matrix3d::Zero();
    double scale = 0.0;
    for (const auto& o : observations) {
        const Vector3d d = o.tag_position - centroid;
        scatter += d * d.transpose();
        scale = std::max(scale, d.norm());
    }
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(scatter);
    if (scale <= 0.0 || es.eigenvalues()(1) < 1e-12 * es.eigenvalues()(2))
        throw InvalidArgument("pnp: tag positions are collinear");

    auto [prob, state] =
        make_pnp_problem({observations.begin(), observations.end()});

    opt::LevMarOptions lmopts;
    lmopts.max_iters = opts.max_iters;
    lmopts.ftol = opts.ftol;

    Rng rng(opts.seed);
    PnpResult best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int s = 0; s < std::max(1, opts.starts); ++s) {
        if (s == 0) {
            state->r = Matrix3d::Identity();
            state->p = centroid;
        } else {
            state->r = random_rotation(rng);
            state->p = centroid + 2.0 * scale * Vector3d{rng.gaussian(), rng.gaussian(),
                                                         rng.gaussian()};
        }
        try {
            const auto run = opt::levmar(prob.residuals, prob.jacobian, prob.apply, lmopts);
            if (run.converged && run.cost < best_cost) {
                best_cost = run.cost;
                best.pose = {state->r, state->p};
                best.converged = true;
                best.iterations = run.iterations;
            }
        } catch (const NumericalError&) {
            continue;  // start landed on a tag
        }
    }
    if (!best.converged) throw NumericalError("pnp: optimizer did not converge");

    // Report the objective in its angular form.
    double e = 0.0;
    for (const auto& o : observations) {
        const Vector3d a = best.pose.rotation * sim::unit_dir(o.azimuth, o.elevation);
        const Vector3d b = (o.tag_position - best.pose.translation).normalized();
        const double ang = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
        e += ang * ang;
    }
    best.residual = e;
    return best;
}

// --------------------------------------------------------- self-calibration

namespace {

struct SelfCalState {
    Matrix3d r2 = Matrix3d::Identity();
    double alpha = 0.0;  // direction of p2 on the distance sphere
    double beta = 0.0;
    VectorXd xi1, xi2;  // log ranges
    double d12 = 1.0;

    Vector3d p2() const {
        return d12 * Vector3d{std::cos(beta) * std::cos(alpha),
                              std::cos(beta) * std::sin(alpha), std::sin(beta)};
    }
    Vector3d dp2_dalpha() const {
        return d12 * Vector3d{-std::cos(beta) * std::sin(alpha),
                              std::cos(beta) * std::cos(alpha), 0.0};
    }
    Vector3d dp2_dbeta() const {
        return d12 * Vector3d{-std::sin(beta) * std::cos(alpha),
                              -std::sin(beta) * std::sin(alpha), std::cos(beta)};
    }

    // Per-sample ranges from the current pose by linear projection.
    void init_ranges(const std::vector<SelfCalObservation>& obs) {
        const auto t_n = static_cast<Eigen::Index>(obs.size());
        xi1.resize(t_n);
        xi2.resize(t_n);
        const Vector3d p = p2();
        for (Eigen::Index t = 0; t < t_n; ++t) {
            Eigen::Matrix<double, 3, 2> a;
            a.col(0) = obs[static_cast<std::size_t>(t)].d1;
            a.col(1) = -(r2 * obs[static_cast<std::size_t>(t)].d2);
            const Eigen::Vector2d lam = a.colPivHouseholderQr().solve(p);
            xi1[t] = std::log(std::max(lam[0], 0.05 * d12));
            xi2[t] = std::log(std::max(lam[1], 0.05 * d12));
        }
    }
};

std::pair<LsqProblem, std::shared_ptr<SelfCalState>> make_self_cal_problem(
    std::vector<SelfCalObservation> observations, double d12, const SelfCalOptions& opts) {
    auto state = std::make_shared<SelfCalState>();
    state->d12 = d12;
    auto obs =
        std::make_shared<std::vector<SelfCalObservation>>(std::move(observations));
    const auto t_n = static_cast<Eigen::Index>(obs->size());
    const double prior_w =
        opts.direction_prior ? opts.prior_weight_scale * static_cast<double>(t_n) : 0.0;
    const auto prior = opts.direction_prior;
    const Eigen::Index n_res = 3 * t_n + (prior ? 3 : 0);

    state->init_ranges(*obs);

    LsqProblem prob;
    prob.dim = 5 + 2 * t_n;
    prob.residuals = [state, obs, t_n, n_res, prior, prior_w]() {
        VectorXd r(n_res);
        const Vector3d p = state->p2();
        for (Eigen::Index t = 0; t < t_n; ++t) {
            const auto& o = (*obs)[static_cast<std::size_t>(t)];
            r.segment<3>(3 * t) = o.d1 * std::exp(state->xi1[t]) - p -
                                  state->r2 * o.d2 * std::exp(state->xi2[t]);
        }
        if (prior) r.tail<3>() = std::sqrt(prior_w) * (p / state->d12 - *prior);
        return r;
    };
    prob.jacobian = [state, obs, t_n, n_res, prior, prior_w]() {
        MatrixXd j = MatrixXd::Zero(n_res, 5 + 2 * t_n);
        const Vector3d da = state->dp2_dalpha();
        const Vector3d db = state->dp2_dbeta();
        for (Eigen::Index t = 0; t < t_n; ++t) {
            const auto& o = (*obs)[static_cast<std::size_t>(t)];
            const double l1 = std::exp(state->xi1[t]);
            const double l2 = std::exp(state->xi2[t]);
            const auto row = 3 * t;
            j.block<3, 3>(row, 0) = state->r2 * skew(o.d2) * l2;
            j.block<3, 1>(row, 3) = -da;
            j.block<3, 1>(row, 4) = -db;
            j.block<3, 1>(row, 5 + t) = o.d1 * l1;
            j.block<3, 1>(row, 5 + t_n + t) = -state->r2 * o.d2 * l2;
        }
        if (prior) {
            j.block<3, 1>(3 * t_n, 3) = std::sqrt(prior_w) * da / state->d12;
            j.block<3, 1>(3 * t_n, 4) = std::sqrt(prior_w) * db / state->d12;
        }
        return j;
    };
    prob.apply = [state, t_n](const VectorXd& step) {
        state->r2 = state->r2 * rotation_exp(step.head<3>());
        state->alpha += step[3];
        state->beta += step[4];
        state->xi1 += step.segment(5, t_n);
        state->xi2 += step.segment(5 + t_n, t_n);
    };
    return {std::move(prob), state};
}

}  // namespace

LsqProblem self_cal_problem(std::vector<SelfCalObservation> observations,
                            double device_distance_m, const SelfCalOptions& opts) {
    return make_self_cal_problem(std::move(observations), device_distance_m, opts).first;
}

SelfCalResult self_calibrate(std::span<const SelfCalObservation> observations,
                             double device_distance_m, const SelfCalOptions& opts) {
    const auto t_count = observations.size();
    if (t_count < 6) throw InvalidArgument("self_calibrate: need at least six observations");
    if (device_distance_m <= 0.0)
        throw InvalidArgument("self_calibrate: device distance must be > 0");
    for (const auto& o : observations)
        if (std::abs(o.d1.norm() - 1.0) > 1e-6 || std::abs(o.d2.norm() - 1.0) > 1e-6)
            throw InvalidArgument("self_calibrate: directions must be unit vectors");

    // A source confined to one line through device 1 leaves the geometry
    // unobservable.
    Vector3d mean = Vector3d::Zero();
    for (const auto& o : observations) mean += o.d1;
    mean /= static_cast<double>(t_count);
    Matrix3d scatter = Matrix3d::Zero();
    for (const auto& o : observations) {
        const Vector3d d = o.d1 - mean;
        scatter += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix3d> es(scatter);
    if (es.eigenvalues()(1) < 1e-10)
        throw InvalidArgument("self_calibrate: degenerate source trajectory");

    const std::vector<SelfCalObservation> obs(observations.begin(), observations.end());
    auto [prob, state] = make_self_cal_problem(obs, device_distance_m, opts);
    const auto t_n = static_cast<Eigen::Index>(obs.size());
    const double prior_w =
        opts.direction_prior ? opts.prior_weight_scale * static_cast<double>(t_n) : 0.0;

    // Stage 1: the ranges are linear given the pose, so the pose search runs
    // on the projected problem (5 parameters), which multi-start handles
    // robustly. The Jacobian of the projected residuals is taken by central
    // differences; it folds the range re-projection in exactly.
    auto projected_residuals = [&]() {
        state->init_ranges(obs);
        VectorXd r(3 * t_n + (opts.direction_prior ? 3 : 0));
        const Vector3d p = state->p2();
        for (Eigen::Index t = 0; t < t_n; ++t) {
            const auto& o = obs[static_cast<std::size_t>(t)];
            r.segment<3>(3 * t) = o.d1 * std::exp(state->xi1[t]) - p -
                                  state->r2 * o.d2 * std::exp(state->xi2[t]);
        }
        if (opts.direction_prior)
            r.tail<3>() = std::sqrt(prior_w) * (p / state->d12 - *opts.direction_prior);
        return r;
    };
    auto apply_pose = [&](const VectorXd& step) {
        state->r2 = state->r2 * opt::rotation_exp(step.head<3>());
        state->alpha += step[3];
        state->beta += step[4];
    };
    auto projected_jacobian = [&]() {
        MatrixXd j(3 * t_n + (opts.direction_prior ? 3 : 0), 5);
        const double eps = 1e-6;
        for (Eigen::Index i = 0; i < 5; ++i) {
            VectorXd step = VectorXd::Zero(5);
            step[i] = eps;
            apply_pose(step);
            const VectorXd rp = projected_residuals();
            apply_pose(-2.0 * step);
            const VectorXd rm = projected_residuals();
            apply_pose(step);
            j.col(i) = (rp - rm) / (2.0 * eps);
        }
        return j;
    };

    opt::LevMarOptions pose_opts;
    pose_opts.max_iters = opts.solver.max_iters;
    pose_opts.ftol = opts.solver.ftol;

    Rng rng(opts.solver.seed);
    double best_cost = std::numeric_limits<double>::infinity();
    SelfCalState best_state;
    bool best_converged = false;
    int best_iters = 0;
    for (int s = 0; s < std::max(1, opts.solver.starts); ++s) {
        if (s == 0) {
            state->r2 = Matrix3d::Identity();
            const Vector3d dir = opts.direction_prior.value_or(Vector3d::UnitX());
            state->alpha = std::atan2(dir.y(), dir.x());
            state->beta = std::asin(std::clamp(dir.z(), -1.0, 1.0));
        } else {
            state->r2 = random_rotation(rng);
            state->alpha = rng.uniform(-pi, pi);
            state->beta = std::asin(rng.uniform(-1.0, 1.0));
        }
        const auto run =
            opt::levmar(projected_residuals, projected_jacobian, apply_pose, pose_opts);
        if (run.converged && run.cost < best_cost) {
            best_cost = run.cost;
            state->init_ranges(obs);
            best_state = *state;
            best_converged = true;
            best_iters = run.iterations;
        }
    }
    if (!best_converged) throw NumericalError("self_calibrate: optimizer did not converge");

    // Stage 2: joint polish over pose and ranges with the analytic Jacobian.
    *state = best_state;
    opt::LevMarOptions joint_opts;
    joint_opts.max_iters = opts.solver.max_iters;
    joint_opts.ftol = opts.solver.ftol;
    const auto polish = opt::levmar(prob.residuals, prob.jacobian, prob.apply, joint_opts);
    if (polish.cost <= best_cost) {
        best_state = *state;
        best_iters += polish.iterations;
    }

    *state = best_state;
    SelfCalResult out;
    out.pose2.rotation = state->r2;
    out.pose2.translation = state->p2();
    out.range1 = state->xi1.array().exp();
    out.range2 = state->xi2.array().exp();
    out.converged = best_converged;
    out.iterations = best_iters;
    double e = 0.0;
    const Vector3d p2 = state->p2();
    for (std::size_t t = 0; t < obs.size(); ++t) {
        e += (obs[t].d1 * out.range1[static_cast<Eigen::Index>(t)] - p2 -
              state->r2 * obs[t].d2 * out.range2[static_cast<Eigen::Index>(t)])
                 .squaredNorm();
    }
    out.residual = e;
    return out;
}

}  // namespace beamloc::loc
