#include <doctest.h>

#include "beamloc/levmar.hpp"
#include "beamloc/loc.hpp"

using namespace beamloc;
using namespace beamloc::loc;

namespace {

Ray through(const Vector3d& origin, const Vector3d& point) {
    return {origin, (point - origin).normalized()};
}

Pose make_pose(const Vector3d& axis_angle, const Vector3d& p) {
    return {opt::rotation_exp(axis_angle), p};
}

std::vector<PnpObservation> pnp_scene(const Pose& truth, int count, Rng& rng,
                                      double noise_deg = 0.0) {
    std::vector<PnpObservation> obs;
    for (int i = 0; i < count; ++i) {
        const Vector3d tag{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1.5, 3.5)};
        Vector3d local = truth.rotation.transpose() * (tag - truth.translation);
        if (noise_deg > 0.0) {
            const Vector3d axis =
                Vector3d{rng.gaussian(), rng.gaussian(), rng.gaussian()}.normalized();
            local = opt::rotation_exp(axis * deg_to_rad(noise_deg) * rng.gaussian()) * local;
        }
        PnpObservation o;
        o.tag_position = tag;
        o.azimuth = std::atan2(local.y(), local.x());
        o.elevation = std::atan2(std::hypot(local.x(), local.y()), local.z());
        obs.push_back(o);
    }
    return obs;
}

std::vector<SelfCalObservation> selfcal_scene(const Pose& pose2, int count, Rng& rng,
                                              double noise_deg = 0.0) {
    std::vector<SelfCalObservation> obs;
    for (int i = 0; i < count; ++i) {
        const Vector3d src{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 3.0)};
        SelfCalObservation o;
        o.d1 = src.normalized();
        o.d2 = (pose2.rotation.transpose() * (src - pose2.translation)).normalized();
        if (noise_deg > 0.0) {
            auto jitter = [&](Vector3d v) {
                const Vector3d axis =
                    Vector3d{rng.gaussian(), rng.gaussian(), rng.gaussian()}.normalized();
                return (opt::rotation_exp(axis * deg_to_rad(noise_deg) * rng.gaussian()) * v)
                    .normalized();
            };
            o.d1 = jitter(o.d1);
            o.d2 = jitter(o.d2);
        }
        obs.push_back(o);
    }
    return obs;
}

// Central finite differences of the squared-residual objective against the
// analytic gradient 2 J^T r.
void check_gradient(const LsqProblem& prob) {
    const VectorXd r0 = prob.residuals();
    const MatrixXd j = prob.jacobian();
    const VectorXd grad = 2.0 * j.transpose() * r0;
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < prob.dim; ++i) {
        VectorXd step = VectorXd::Zero(prob.dim);
        step[i] = eps;
        prob.apply(step);
        const double ep = prob.residuals().squaredNorm();
        prob.apply(-2.0 * step);
        const double em = prob.residuals().squaredNorm();
        prob.apply(step);
        const double fd = (ep - em) / (2.0 * eps);
        const double scale = std::max({1.0, std::abs(grad[i]), std::abs(fd)});
        CHECK(std::abs(fd - grad[i]) / scale < 1e-5);
    }
}

}  // namespace

TEST_SUITE("loc") {

TEST_CASE("local directions map into the global frame") {
    doa::DoaEstimate x_axis;
    x_axis.azimuth = 0.0;
    x_axis.elevation = pi / 2 - 1e-12;  // along local +x

    const Pose identity;
    const auto r0 = to_global(identity, x_axis);
    CHECK((r0.direction - Vector3d::UnitX()).norm() < 1e-9);

    const auto rot = make_pose(Vector3d::UnitZ() * (pi / 2), {1, 2, 3});
    const auto r1 = to_global(rot, x_axis);
    CHECK((r1.direction - Vector3d::UnitY()).norm() < 1e-9);
    CHECK((r1.origin - Vector3d{1, 2, 3}).norm() == 0.0);

    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        const auto p = make_pose(Vector3d{rng.gaussian(), rng.gaussian(), rng.gaussian()},
                                 Vector3d::Zero());
        doa::DoaEstimate d;
        d.azimuth = rng.uniform(-pi, pi);
        d.elevation = rng.uniform(0.0, pi / 2);
        CHECK(to_global(p, d).direction.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }

    Pose bad;
    bad.rotation(0, 0) = 2.0;
    CHECK_THROWS_AS(to_global(bad, x_axis), InvalidArgument);
}

TEST_CASE("triangulation recovers exact intersections") {
    const Vector3d target{2, 3, 1};
    const auto fix = triangulate(std::vector<Ray>{through({0, 0, 0}, target),
                                                  through({5, 0, 0}, target)});
    CHECK((fix.position - target).norm() < 1e-9);
    CHECK(fix.divergence_m < 1e-9);
    CHECK(fix.device_count == 2);

    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector3d x{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
        std::vector<Ray> rays;
        const int n = rng.uniform_int(2, 5);
        for (int i = 0; i < n; ++i) {
            Vector3d origin{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
            if ((origin - x).norm() < 0.5) origin += Vector3d{1, 1, 1};
            rays.push_back(through(origin, x));
        }
        // Skip near-degenerate bundles; they are covered below.
        try {
            const auto f = triangulate(rays);
            CHECK((f.position - x).norm() < 1e-8);
            CHECK(f.divergence_m < 1e-9);
        } catch (const NumericalError&) {
        }
    }
}

TEST_CASE("parallel rays are rejected as degenerate") {
    const Vector3d d = Vector3d{1, 1, 0.2}.normalized();
    CHECK_THROWS_AS(triangulate(std::vector<Ray>{{{0, 0, 0}, d}, {{0, 1, 0}, d}}),
                    NumericalError);
    CHECK_THROWS_AS(triangulate(std::vector<Ray>{{{0, 0, 0}, d}}), InvalidArgument);
}

TEST_CASE("divergence is invariant to ordering and rigid motion") {
    Rng rng(5);
    std::vector<Ray> rays;
    const Vector3d x{1, -2, 3};
    for (int i = 0; i < 4; ++i) {
        const Vector3d origin{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        auto r = through(origin, x);
        // Perturb directions so the divergence is nonzero.
        r.direction = (r.direction + 0.02 * Vector3d{rng.gaussian(), rng.gaussian(),
                                                     rng.gaussian()})
                          .normalized();
        rays.push_back(r);
    }
    const auto f1 = triangulate(rays);
    std::reverse(rays.begin(), rays.end());
    const auto f2 = triangulate(rays);
    CHECK(f1.divergence_m == doctest::Approx(f2.divergence_m).epsilon(1e-12));

    const Matrix3d rot = opt::rotation_exp({0.3, -0.2, 0.9});
    const Vector3d shift{4, 5, -6};
    std::vector<Ray> moved;
    for (const auto& r : rays) moved.push_back({rot * r.origin + shift, rot * r.direction});
    const auto f3 = triangulate(moved);
    CHECK(f3.divergence_m == doctest::Approx(f1.divergence_m).epsilon(1e-9));
    CHECK((f3.position - (rot * f1.position + shift)).norm() < 1e-8);
}

TEST_CASE("divergence filtering") {
    std::vector<Fix> fixes(10);
    for (std::size_t i = 0; i < fixes.size(); ++i)
        fixes[i].divergence_m = static_cast<double>(i) * 0.01;
    const auto all = filter_fixes(fixes, 1e9);
    CHECK(all.kept.size() == 10);
    CHECK(all.retained_fraction == 1.0);
    const auto some = filter_fixes(fixes, 0.045);
    CHECK(some.kept.size() == 5);
    CHECK(some.retained_fraction == doctest::Approx(0.5));
    std::vector<Fix> zeros(4);
    CHECK(filter_fixes(zeros, 1e-9).retained_fraction == 1.0);
    CHECK_THROWS_AS(filter_fixes(fixes, 0.0), InvalidArgument);
}

TEST_CASE("pose calibration recovers exact synthetic observations") {
    Rng rng(17);
    SUBCASE("identity pose") {
        const Pose truth;
        const auto obs = pnp_scene(truth, 8, rng);
        const auto res = pnp_calibrate(obs);
        CHECK(rotation_angle(res.pose.rotation, truth.rotation) < 1e-6);
        CHECK((res.pose.translation - truth.translation).norm() < 1e-6);
        CHECK(res.residual < 1e-10);
    }
    SUBCASE("rotated and translated pose") {
        const auto truth = make_pose(Vector3d::UnitZ() * (pi / 2), {1, 2, 0});
        const auto obs = pnp_scene(truth, 8, rng);
        const auto res = pnp_calibrate(obs);
        CHECK(rotation_angle(res.pose.rotation, truth.rotation) < 1e-6);
        CHECK((res.pose.translation - truth.translation).norm() < 1e-6);
    }
}

TEST_CASE("pose calibration under angular noise") {
    Rng rng(29);
    std::vector<double> rot_err, pos_err;
    for (int seed = 0; seed < 11; ++seed) {
        const auto truth = make_pose({0.2, -0.1, 0.8}, {0.5, -1.0, 0.2});
        const auto obs = pnp_scene(truth, 8, rng, 0.5);
        SolverOptions opts;
        opts.seed = static_cast<std::uint64_t>(seed) + 1;
        const auto res = pnp_calibrate(obs, opts);
        rot_err.push_back(rad_to_deg(rotation_angle(res.pose.rotation, truth.rotation)));
        pos_err.push_back((res.pose.translation - truth.translation).norm());
    }
    std::sort(rot_err.begin(), rot_err.end());
    std::sort(pos_err.begin(), pos_err.end());
    CHECK(rot_err[5] < 1.0);    // median over seeds
    CHECK(pos_err[5] < 0.05);
}

TEST_CASE("pose calibration rejects degenerate input") {
    std::vector<PnpObservation> two(2);
    CHECK_THROWS_AS(pnp_calibrate(two), InvalidArgument);
    std::vector<PnpObservation> collinear;
    for (int i = 0; i < 4; ++i) {
        PnpObservation o;
        o.tag_position = Vector3d{static_cast<double>(i), 0, 1};
        collinear.push_back(o);
    }
    CHECK_THROWS_AS(pnp_calibrate(collinear), InvalidArgument);
}

TEST_CASE("self-calibration recovers the second pose") {
    Rng rng(41);
    const auto truth = make_pose({0.1, 0.7, -0.3}, Vector3d{2.0, 0.5, 0.3}.normalized() * 2.5);
    const auto obs = selfcal_scene(truth, 50, rng);
    const auto res = self_calibrate(obs, 2.5);
    CHECK(rad_to_deg(rotation_angle(res.pose2.rotation, truth.rotation)) < 0.1);
    CHECK((res.pose2.translation - truth.translation).norm() < 1e-3);
    CHECK(res.residual < 1e-10);
    CHECK(res.range1.minCoeff() > 0.0);
    CHECK(res.range2.minCoeff() > 0.0);

    // Identity-rotation device recovered as identity.
    const auto id_truth = make_pose(Vector3d::Zero(), Vector3d{0.0, 2.0, 0.0});
    const auto id_obs = selfcal_scene(id_truth, 40, rng);
    const auto id_res = self_calibrate(id_obs, 2.0);
    CHECK(rad_to_deg(rotation_angle(id_res.pose2.rotation, Matrix3d::Identity())) < 0.1);
}

TEST_CASE("self-calibration with a direction prior") {
    Rng rng(43);
    const auto truth = make_pose({-0.4, 0.2, 0.1}, Vector3d{1.5, -1.0, 0.5}.normalized() * 3.0);
    const auto obs = selfcal_scene(truth, 30, rng);
    SelfCalOptions opts;
    opts.direction_prior = truth.translation.normalized();
    opts.solver.starts = 6;
    const auto res = self_calibrate(obs, 3.0, opts);
    CHECK((res.pose2.translation - truth.translation).norm() < 1e-3);
}

TEST_CASE("self-calibration error shrinks with more observations") {
    std::vector<double> med_err;
    for (int count : {10, 50, 200}) {
        std::vector<double> errs;
        for (int seed = 0; seed < 5; ++seed) {
            Rng rng(100 + static_cast<std::uint64_t>(seed));
            const auto truth =
                make_pose({0.3, -0.5, 0.2}, Vector3d{1.0, 0.8, -0.2}.normalized() * 2.0);
            const auto obs = selfcal_scene(truth, count, rng, 0.5);
            SelfCalOptions opts;
            opts.solver.starts = 8;
            opts.solver.seed = static_cast<std::uint64_t>(seed) + 1;
            const auto res = self_calibrate(obs, 2.0, opts);
            errs.push_back((res.pose2.translation - truth.translation).norm() +
                           rotation_angle(res.pose2.rotation, truth.rotation));
        }
        std::sort(errs.begin(), errs.end());
        med_err.push_back(errs[2]);
    }
    CHECK(med_err[1] < med_err[0]);
    CHECK(med_err[2] < med_err[1]);
}

TEST_CASE("self-calibration rejects degenerate trajectories") {
    std::vector<SelfCalObservation> few(4);
    CHECK_THROWS_AS(self_calibrate(few, 1.0), InvalidArgument);

    // Source sliding along one line through device 1.
    std::vector<SelfCalObservation> line;
    for (int i = 0; i < 20; ++i) {
        SelfCalObservation o;
        o.d1 = Vector3d{1, 0.2, 0.1}.normalized();
        o.d2 = Vector3d{-1, 0.1 * i, 0.3}.normalized();
        line.push_back(o);
    }
    CHECK_THROWS_AS(self_calibrate(line, 1.0), InvalidArgument);
    CHECK_THROWS_AS(self_calibrate(line, -1.0), InvalidArgument);
}

TEST_CASE("calibration objectives at the optimum beat the ground truth") {
    Rng rng(59);
    const auto truth = make_pose({0.2, 0.3, -0.6}, {1.0, -0.5, 0.8});
    const auto obs = pnp_scene(truth, 10, rng);
    const auto res = pnp_calibrate(obs);

    // Ground-truth objective (zero on noiseless data) cannot be materially
    // better than the optimizer's.
    double gt = 0.0;
    for (const auto& o : obs) {
        const Vector3d a = truth.rotation * sim::unit_dir(o.azimuth, o.elevation);
        const Vector3d b = (o.tag_position - truth.translation).normalized();
        gt += std::pow(std::acos(std::clamp(a.dot(b), -1.0, 1.0)), 2);
    }
    CHECK(res.residual <= gt + 1e-9);
}

TEST_CASE("analytic gradients match finite differences") {
    Rng rng(61);
    SUBCASE("pose-from-tags problem") {
        const auto truth = make_pose({0.5, -0.2, 0.3}, {0.3, 0.4, -0.2});
        auto prob = pnp_problem(pnp_scene(truth, 6, rng, 1.0));
        VectorXd wiggle(prob.dim);
        for (Eigen::Index i = 0; i < prob.dim; ++i) wiggle[i] = 0.3 * rng.gaussian();
        prob.apply(wiggle);  // random evaluation point
        check_gradient(prob);
    }
    SUBCASE("joint pose-and-range problem") {
        const auto truth = make_pose({0.1, 0.2, 0.3}, Vector3d{1, 1, 0.3}.normalized() * 2.0);
        SelfCalOptions opts;
        opts.direction_prior = Vector3d{0.9, 0.3, 0.3}.normalized();
        auto prob = self_cal_problem(selfcal_scene(truth, 8, rng, 1.0), 2.0, opts);
        VectorXd wiggle(prob.dim);
        for (Eigen::Index i = 0; i < prob.dim; ++i) wiggle[i] = 0.1 * rng.gaussian();
        prob.apply(wiggle);
        check_gradient(prob);
    }
}

}  // TEST_SUITE
