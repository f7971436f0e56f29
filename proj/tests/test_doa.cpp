#include <doctest.h>

#include "beamloc/doa.hpp"

using namespace beamloc;
using namespace beamloc::doa;

namespace {

geometry::GridArray make(geometry::GeometryKind kind) {
    return geometry::make_geometry(kind);
}

// Noiseless model covariance for unit-power sources.
CovarianceMatrix model_cov(const geometry::GridArray& a,
                           const std::vector<std::pair<double, double>>& dirs,
                           double d_over_lambda, double noise_var = 0.0) {
    const auto m = static_cast<Eigen::Index>(a.size());
    MatrixXcd r = noise_var * MatrixXcd::Identity(m, m);
    for (const auto& [az, el] : dirs) {
        const auto v = sim::steering_vector(a, d_over_lambda * std::sin(el) * std::cos(az),
                                            d_over_lambda * std::sin(el) * std::sin(az));
        r += v * v.adjoint();
    }
    return {r, 1};
}

sim::Scenario snapshot_scene(const geometry::GridArray& a,
                             const std::vector<std::pair<double, double>>& dirs,
                             double snr_db, int n, std::uint64_t seed) {
    sim::Scenario s;
    s.array = a;
    for (const auto& [az, el] : dirs) s.sources.push_back({az, el, 1.0, {}});
    s.snr_db = snr_db;
    s.snapshots = n;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_SUITE("doa") {

TEST_CASE("sample covariance basics") {
    const auto a = make(geometry::GeometryKind::Ura);
    const auto v = sim::steering_vector(a, 0.1, -0.2);
    MatrixXcd x(v.size(), 1);
    x.col(0) = v;
    const auto r = sample_covariance(x);
    CHECK((r.data - v * v.adjoint()).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r.data, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()(es.eigenvalues().size() - 2) < 1e-10);

    // Real rows with orthogonal supports produce a diagonal covariance.
    MatrixXcd o = MatrixXcd::Zero(3, 6);
    o(0, 0) = 1;
    o(1, 1) = 2;
    o(2, 2) = 3;
    const auto ro = sample_covariance(o);
    CHECK(std::abs(ro.data(0, 1)) + std::abs(ro.data(1, 2)) + std::abs(ro.data(0, 2)) <
          1e-12);
    CHECK_THROWS_AS(sample_covariance(MatrixXcd()), InvalidArgument);
}

TEST_CASE("covariance invariants are enforced") {
    MatrixXcd b(2, 2);
    b << cplx{1, 0}, cplx{0.5, 0.2}, cplx{0.4, 0.2}, cplx{1, 0};
    CHECK_THROWS_AS((CovarianceMatrix{b, 1}.validate()), InvalidArgument);
    MatrixXcd neg(2, 2);
    neg << -1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS((CovarianceMatrix{neg, 1}.validate()), InvalidArgument);
}

TEST_CASE("source count from singular-value ratios") {
    const auto a = make(geometry::GeometryKind::Ura);
    Rng seeds(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto dirs = std::vector<std::pair<double, double>>{
            {deg_to_rad(-50), deg_to_rad(20)}, {deg_to_rad(30), deg_to_rad(45)},
            {deg_to_rad(120), deg_to_rad(60)}};
        const auto x = sim::synth_snapshots(snapshot_scene(a, dirs, 20.0, 4096, seeds.u64()));
        CHECK(estimate_source_count(x.data) == 3);
    }

    // Noise only: ratios hover near one.
    const auto noise = sim::synth_snapshots(snapshot_scene(a, {}, 0.0, 4096, 5));
    CHECK(estimate_source_count(noise.data) == 0);

    CHECK_THROWS_AS(estimate_source_count(MatrixXcd::Zero(4, 16)), InvalidArgument);
}

TEST_CASE("fourteen sources are counted on the full array") {
    const auto a = make(geometry::GeometryKind::Ura);
    Rng rng(23);
    std::vector<std::pair<double, double>> dirs;
    while (dirs.size() < 14) {
        const double az = rng.uniform(-pi, pi);
        const double el = std::acos(rng.uniform(0.5, 1.0));
        bool ok = true;
        for (const auto& d : dirs)
            if (spherical_distance(az, el, d.first, d.second) < deg_to_rad(15)) ok = false;
        if (ok) dirs.emplace_back(az, el);
    }
    const auto x = sim::synth_snapshots(snapshot_scene(a, dirs, 20.0, 4096, 99));
    CHECK(estimate_source_count(x.data) == 14);
}

TEST_CASE("single noiseless source peaks within one grid cell") {
    const auto a = make(geometry::GeometryKind::Ura);
    const double az = deg_to_rad(30), el = deg_to_rad(45);
    const auto r = model_cov(a, {{az, el}}, 0.5);
    const auto spec = music_spectrum(r, a, 1, 0.5);
    Eigen::Index jmax, imax;
    spec.values.maxCoeff(&jmax, &imax);
    CHECK(std::abs(spec.az_deg[static_cast<std::size_t>(imax)] - 30.0) <= 1.0);
    CHECK(std::abs(spec.el_deg[static_cast<std::size_t>(jmax)] - 45.0) <= 1.0);
}

TEST_CASE("isotropic covariance yields a flat spectrum") {
    const auto a = make(geometry::GeometryKind::Ura);
    const auto m = static_cast<Eigen::Index>(a.size());
    const CovarianceMatrix r{2.5 * MatrixXcd::Identity(m, m), 1};
    const auto spec = music_spectrum(r, a, 0, 0.5);
    CHECK(spec.values.maxCoeff() / spec.values.minCoeff() < 1.0 + 1e-6);
}

TEST_CASE("two well-separated sources at low SNR") {
    const auto a = make(geometry::GeometryKind::Ura);
    const std::vector<std::pair<double, double>> dirs{{deg_to_rad(-20), deg_to_rad(30)},
                                                      {deg_to_rad(60), deg_to_rad(50)}};
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto x = sim::synth_snapshots(snapshot_scene(a, dirs, 0.0, 4096, seed));
        const auto spec = music_spectrum(sample_covariance(x), a, 2, 0.5);
        const auto peaks = pick_peaks(spec, 2, 10.0);
        if (peaks.size() != 2) continue;
        bool ok = true;
        for (const auto& d : dirs) {
            double best = 1e9;
            for (const auto& p : peaks)
                best = std::min(best,
                                spherical_distance(p.azimuth, p.elevation, d.first, d.second));
            ok = ok && best < deg_to_rad(2.0);
        }
        good += ok;
    }
    CHECK(good >= 11);
}

TEST_CASE("music rejects impossible source counts") {
    const auto a = make(geometry::GeometryKind::Ura);
    const auto r = model_cov(a, {{0.3, 0.4}}, 0.5, 0.1);
    CHECK_THROWS_AS(music_spectrum(r, a, 64, 0.5), InvalidArgument);
}

TEST_CASE("eigen reconstruction of a random Hermitian PSD matrix") {
    Rng rng(31);
    MatrixXcd b(16, 16);
    for (Eigen::Index i = 0; i < b.rows(); ++i)
        for (Eigen::Index k = 0; k < b.cols(); ++k) b(i, k) = rng.cgaussian();
    const MatrixXcd r = b * b.adjoint();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r);
    const MatrixXcd rec = es.eigenvectors() * es.eigenvalues().asDiagonal() *
                          es.eigenvectors().adjoint();
    CHECK((rec - r).norm() / r.norm() < 1e-8);
}

TEST_CASE("spectrum argmax is invariant under covariance scaling") {
    const auto a = make(geometry::GeometryKind::Ura);
    const auto x = sim::synth_snapshots(
        snapshot_scene(a, {{deg_to_rad(75), deg_to_rad(33)}}, 10.0, 1024, 77));
    auto r = sample_covariance(x);
    const auto s1 = music_spectrum(r, a, 1, 0.5);
    r.data *= 1234.5;
    const auto s2 = music_spectrum(r, a, 1, 0.5);
    Eigen::Index j1, i1, j2, i2;
    s1.values.maxCoeff(&j1, &i1);
    s2.values.maxCoeff(&j2, &i2);
    CHECK(j1 == j2);
    CHECK(i1 == i2);
}

TEST_CASE("noiseless steering vectors live in the signal subspace") {
    const auto a = make(geometry::GeometryKind::Ura);
    const std::vector<std::pair<double, double>> dirs{
        {deg_to_rad(-120), deg_to_rad(15)}, {deg_to_rad(-10), deg_to_rad(40)},
        {deg_to_rad(40), deg_to_rad(55)},   {deg_to_rad(95), deg_to_rad(25)},
        {deg_to_rad(160), deg_to_rad(65)}};
    const auto r = model_cov(a, dirs, 0.5);
    for (const auto& [az, el] : dirs) {
        const double tb = 0.5 * std::sin(el) * std::cos(az);
        const double pb = 0.5 * std::sin(el) * std::sin(az);
        CHECK(noise_projection(r, a, static_cast<int>(dirs.size()), tb, pb) < 1e-6);
    }
}

TEST_CASE("smoothing the full window of a single-source co-array stays rank one") {
    geometry::GeometryParams p;
    p.nx = 4;
    p.ny = 4;
    const auto a = geometry::make_geometry(geometry::GeometryKind::Ura, p);
    const auto co = geometry::difference_coarray(a);
    const auto plan = geometry::smoothing_plan(co, co.virtual_extent_x(),
                                               co.virtual_extent_y());
    const double az = deg_to_rad(25), el = deg_to_rad(40);
    const auto r = model_cov(a, {{az, el}}, 0.5);
    const auto rss = coarray_smoothed_covariance(r, a, plan);
    REQUIRE(rss.data.rows() == 49);

    // Single offset: the smoothed matrix is the virtual-snapshot outer
    // product with steering structure on the window array.
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rss.data);
    const auto& ev = es.eigenvalues();
    CHECK(ev(ev.size() - 2) / ev(ev.size() - 1) < 1e-9);
    const auto warr = window_array(plan, a.pitch_m);
    const auto v = sim::steering_vector(warr, 0.5 * std::sin(el) * std::cos(az),
                                        0.5 * std::sin(el) * std::sin(az));
    const VectorXcd top = es.eigenvectors().col(ev.size() - 1);
    const double align = std::abs(top.dot(v)) / v.norm();
    CHECK(align == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("smoothing restores rank for more sources than sensors") {
    const auto a = make(geometry::GeometryKind::Nested);
    Rng rng(3);
    std::vector<std::pair<double, double>> dirs;
    while (dirs.size() < 18) {
        const double az = rng.uniform(-pi, pi);
        const double el = std::acos(rng.uniform(0.55, 1.0));
        bool ok = true;
        for (const auto& d : dirs)
            if (spherical_distance(az, el, d.first, d.second) < deg_to_rad(20)) ok = false;
        if (ok) dirs.emplace_back(az, el);
    }
    const auto x = sim::synth_snapshots(snapshot_scene(a, dirs, 20.0, 4096, 8));
    const auto r = sample_covariance(x);
    const auto co = geometry::difference_coarray(a);
    const auto [wx, wy] = geometry::default_window(co);
    const auto plan = geometry::smoothing_plan(co, wx, wy);
    const auto rss = coarray_smoothed_covariance(r, a, plan);
    rss.validate();

    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rss.data, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    int rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > 1e-6 * ev(ev.size() - 1)) ++rank;
    CHECK(rank >= 18);

    // 18 sources on 16 sensors resolve through the smoothed spectrum.
    const auto warr = window_array(plan, a.pitch_m);
    const auto spec = music_spectrum(rss, warr, 18, 0.5, {1.0, 1.0, 80.0});
    const auto peaks = pick_peaks(spec, 18, 8.0);
    REQUIRE(peaks.size() == 18);
    for (const auto& d : dirs) {
        double best = 1e9;
        for (const auto& p : peaks)
            best = std::min(best, spherical_distance(p.azimuth, p.elevation, d.first, d.second));
        CHECK(best < deg_to_rad(10.0));
    }

    // Plans from another layout (different virtual extents) are rejected, as
    // are covariances of the wrong dimension.
    const auto bb_plan = geometry::smoothing_plan(
        geometry::difference_coarray(make(geometry::GeometryKind::Billboard)), 8, 5);
    CHECK_THROWS_AS(coarray_smoothed_covariance(r, a, bb_plan), InvalidArgument);
    CHECK_THROWS_AS(coarray_smoothed_covariance(r, make(geometry::GeometryKind::Ura), plan),
                    InvalidArgument);
}

TEST_CASE("peak picking with suppression and refinement") {
    const auto a = make(geometry::GeometryKind::Ura);
    const double az = deg_to_rad(11.4), el = deg_to_rad(36.7);  // off-grid truth
    const auto spec = music_spectrum(model_cov(a, {{az, el}}, 0.5, 1e-6), a, 1, 0.5);
    const auto one = pick_peaks(spec, 1);
    REQUIRE(one.size() == 1);
    CHECK(spherical_distance(one[0].azimuth, one[0].elevation, az, el) < deg_to_rad(0.6));

    const std::vector<std::pair<double, double>> two{{deg_to_rad(-45), deg_to_rad(40)},
                                                     {deg_to_rad(45), deg_to_rad(40)}};
    const auto spec2 = music_spectrum(model_cov(a, two, 0.5, 1e-6), a, 2, 0.5);
    const auto peaks2 = pick_peaks(spec2, 2);
    REQUIRE(peaks2.size() == 2);

    // Fourteen noiseless sources, every one recovered within two degrees.
    Rng rng(12);
    std::vector<std::pair<double, double>> many;
    while (many.size() < 14) {
        const double paz = rng.uniform(-pi, pi);
        const double pel = std::acos(rng.uniform(0.5, 1.0));
        bool ok = true;
        for (const auto& d : many)
            if (spherical_distance(paz, pel, d.first, d.second) < deg_to_rad(18)) ok = false;
        if (ok) many.emplace_back(paz, pel);
    }
    const auto spec14 = music_spectrum(model_cov(a, many, 0.5, 1e-6), a, 14, 0.5);
    const auto peaks14 = pick_peaks(spec14, 14, 8.0);
    REQUIRE(peaks14.size() == 14);
    for (const auto& d : many) {
        double best = 1e9;
        for (const auto& p : peaks14)
            best = std::min(best, spherical_distance(p.azimuth, p.elevation, d.first, d.second));
        CHECK(best < deg_to_rad(2.0));
    }
}

TEST_CASE("local refinement tracks the grid optimum") {
    const auto a = make(geometry::GeometryKind::Ura);
    const double az = deg_to_rad(-77.3), el = deg_to_rad(52.6);
    const auto r = model_cov(a, {{az, el}}, 0.5, 1e-9);
    const auto est = refine_music(r, a, 1, 0.5, az + deg_to_rad(0.8), el - deg_to_rad(0.9));
    CHECK(spherical_distance(est.azimuth, est.elevation, az, el) < deg_to_rad(0.05));
}

}  // TEST_SUITE
