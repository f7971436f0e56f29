#include "beamloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <numeric>
#include <thread>

#include "beamloc/fft.hpp"
#include "beamloc/filters.hpp"
#include "beamloc/io.hpp"
#include "beamloc/levmar.hpp"

namespace beamloc::harness {

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgument("percentile: empty sample");
    if (q < 0.0 || q > 100.0) throw InvalidArgument("percentile: q outside [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::atomic<bool> failed{false};
    for (int w = 0; w < std::min(jobs, n); ++w) {
        workers.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                if (failed.load()) return;
                try {
                    fn(i);
                } catch (...) {
                    failed.store(true);
                    throw;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (failed.load()) throw NumericalError("parallel_for: a task failed");
}

std::vector<std::pair<double, double>> sample_directions(Rng& rng, int count,
                                                         double min_sep_deg,
                                                         double el_max_deg) {
    const double min_sep = deg_to_rad(min_sep_deg);
    const double cos_el_max = std::cos(deg_to_rad(el_max_deg));
    std::vector<std::pair<double, double>> dirs;
    for (int attempt = 0; attempt < 200 && static_cast<int>(dirs.size()) < count; ++attempt) {
        dirs.clear();
        int inner = 0;
        while (static_cast<int>(dirs.size()) < count && inner < 20000) {
            ++inner;
            const double az = rng.uniform(-pi, pi);
            const double el = std::acos(rng.uniform(cos_el_max, 1.0));  // uniform solid angle
            bool ok = true;
            for (const auto& d : dirs)
                if (doa::spherical_distance(az, el, d.first, d.second) < min_sep) {
                    ok = false;
                    break;
                }
            if (ok) dirs.emplace_back(az, el);
        }
    }
    if (static_cast<int>(dirs.size()) < count)
        throw NumericalError("sample_directions: separation constraint infeasible");
    return dirs;
}

std::vector<std::pair<double, double>> sample_directions_at_separation(Rng& rng, int count,
                                                                       double sep_deg,
                                                                       double el_max_deg) {
    const double sep = deg_to_rad(sep_deg);
    const double el_max = deg_to_rad(el_max_deg);
    std::vector<std::pair<double, double>> dirs;
    dirs.emplace_back(rng.uniform(-pi, pi), std::acos(rng.uniform(std::cos(el_max), 1.0)));
    int guard = 0;
    while (static_cast<int>(dirs.size()) < count && guard < 100000) {
        ++guard;
        // Step away from a random existing member by roughly the target
        // separation; keeps the minimum pairwise distance near `sep`.
        const auto& base = dirs[static_cast<std::size_t>(rng.uniform_int(
            0, static_cast<int>(dirs.size()) - 1))];
        const double bearing = rng.uniform(0.0, 2.0 * pi);
        const double dist = sep * rng.uniform(1.0, 1.25);
        const Vector3d u = sim::unit_dir(base.first, base.second);
        Vector3d t1 = u.cross(Vector3d::UnitX());
        if (t1.norm() < 1e-6) t1 = u.cross(Vector3d::UnitY());
        t1.normalize();
        const Vector3d t2 = u.cross(t1);
        const Vector3d v = std::cos(dist) * u +
                           std::sin(dist) * (std::cos(bearing) * t1 + std::sin(bearing) * t2);
        const double el = std::acos(std::clamp(v.z(), -1.0, 1.0));
        if (el > el_max || el < 0.0) continue;
        const double az = std::atan2(v.y(), v.x());
        bool ok = true;
        for (const auto& d : dirs)
            if (doa::spherical_distance(az, el, d.first, d.second) < sep) {
                ok = false;
                break;
            }
        if (ok) dirs.emplace_back(az, el);
    }
    if (static_cast<int>(dirs.size()) < count)
        throw NumericalError("sample_directions_at_separation: infeasible");
    return dirs;
}

std::vector<double> match_errors(const std::vector<doa::DoaEstimate>& estimates,
                                 const std::vector<std::pair<double, double>>& truths) {
    std::vector<double> errs(truths.size(), std::numeric_limits<double>::infinity());
    if (estimates.empty()) return errs;
    const auto k = static_cast<Eigen::Index>(estimates.size());
    const auto p = static_cast<Eigen::Index>(truths.size());
    if (k > p) throw InvalidArgument("match_errors: more estimates than truths");
    MatrixXd score(k, p);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index t = 0; t < p; ++t)
            score(i, t) = pi - doa::spherical_distance(
                                   estimates[static_cast<std::size_t>(i)].azimuth,
                                   estimates[static_cast<std::size_t>(i)].elevation,
                                   truths[static_cast<std::size_t>(t)].first,
                                   truths[static_cast<std::size_t>(t)].second);
    const auto a = ident::assign(score);
    for (Eigen::Index i = 0; i < k; ++i)
        errs[static_cast<std::size_t>(a.mapping[static_cast<std::size_t>(i)])] =
            pi - score(i, a.mapping[static_cast<std::size_t>(i)]);
    return errs;
}

void write_report(const MetricsReport& report, const std::filesystem::path& out_dir,
                  const std::string& format) {
    for (const auto& [stem, csv] : report.tables)
        io::write_file_atomic(out_dir / (stem + ".csv"), csv);
    if (format != "csv") {
        io::write_file_atomic(out_dir / (report.kind + "_summary.json"),
                              report.summary.dump(2) + "\n");
    }
}

json provenance(const std::string& kind, const std::string& config_text, std::uint64_t seed) {
    return {{"kind", kind},
            {"config_hash", io::content_hash(config_text)},
            {"seed", seed},
            {"version", kVersion}};
}

// ----------------------------------------------------------------- configs

void from_json(const json& j, ResolutionConfig& c) {
    c.geometries = j.value("geometries", c.geometries);
    c.source_counts = j.value("source_counts", c.source_counts);
    c.snrs_db = j.value("snrs_db", c.snrs_db);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.min_sep_deg = j.value("min_sep_deg", c.min_sep_deg);
    c.el_max_deg = j.value("el_max_deg", c.el_max_deg);
    c.snapshots = j.value("snapshots", c.snapshots);
    c.success_deg = j.value("success_deg", c.success_deg);
    c.window = j.value("window", c.window);
    c.jobs = j.value("jobs", c.jobs);
}

void from_json(const json& j, VarianceConfig& c) {
    c.families = j.value("families", c.families);
    c.snrs_db = j.value("snrs_db", c.snrs_db);
    c.elevation_deg = j.value("elevation_deg", c.elevation_deg);
    c.azimuth_deg = j.value("azimuth_deg", c.azimuth_deg);
    c.root = j.value("root", c.root);
    c.trials = j.value("trials", c.trials);
    c.chunk = j.value("chunk", c.chunk);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
}

void from_json(const json& j, IdentificationConfig& c) {
    c.family = j.value("family", c.family);
    c.sources = j.value("sources", c.sources);
    c.pool = j.value("pool", c.pool);
    c.snrs_db = j.value("snrs_db", c.snrs_db);
    c.separations_deg = j.value("separations_deg", c.separations_deg);
    c.separation_snr_db = j.value("separation_snr_db", c.separation_snr_db);
    c.wide_sep_deg = j.value("wide_sep_deg", c.wide_sep_deg);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    c.decimation = j.value("decimation", c.decimation);
    c.jobs = j.value("jobs", c.jobs);
}

void from_json(const json& j, E2eConfig& c) {
    c.geometries = j.value("geometries", c.geometries);
    if (j.contains("device_poses"))
        c.device_poses = j.at("device_poses").get<std::vector<loc::Pose>>();
    c.static_tags = j.value("static_tags", c.static_tags);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.chunk_rate_hz = j.value("chunk_rate_hz", c.chunk_rate_hz);
    c.snr_db = j.value("snr_db", c.snr_db);
    c.limits_mm = j.value("limits_mm", c.limits_mm);
    c.default_limit_mm = j.value("default_limit_mm", c.default_limit_mm);
    c.ident_every_s = j.value("ident_every_s", c.ident_every_s);
    c.chunk = j.value("chunk", c.chunk);
    c.exact_doa = j.value("exact_doa", c.exact_doa);
    c.seed = j.value("seed", c.seed);
    c.jobs = j.value("jobs", c.jobs);
}

// ------------------------------------------------------------------ shared

namespace {

geometry::GridArray experiment_geometry(const std::string& name, std::uint64_t seed) {
    const auto kind = geometry::parse_geometry_kind(name);
    geometry::GeometryParams p;
    if (kind == geometry::GeometryKind::Random) p.seed = seed;  // one mask per experiment
    return geometry::make_geometry(kind, p);
}

// MUSIC estimates for one covariance: standard for the full URA, smoothed for
// sparse layouts. Returns refined directions (possibly fewer than requested
// when the subspace cannot host them or the spectrum has fewer maxima).
std::vector<doa::DoaEstimate> music_estimates(const doa::CovarianceMatrix& r,
                                              const geometry::GridArray& array,
                                              bool smoothed, int num_sources,
                                              double d_over_lambda, int window_override,
                                              double coarse_step_deg, double picker_sep_deg) {
    const doa::CovarianceMatrix* work = &r;
    doa::CovarianceMatrix rss;
    geometry::GridArray warr;
    const geometry::GridArray* arr = &array;
    if (smoothed) {
        const auto co = geometry::difference_coarray(array);
        auto [wx, wy] = geometry::default_window(co);
        if (window_override > 0) {
            wx = std::min(window_override, co.virtual_extent_x());
            wy = std::min(window_override, co.virtual_extent_y());
        }
        const auto plan = geometry::smoothing_plan(co, wx, wy);
        if (num_sources >= wx * wy) return {};
        rss = doa::coarray_smoothed_covariance(r, array, plan);
        warr = doa::window_array(plan, array.pitch_m);
        work = &rss;
        arr = &warr;
    } else if (num_sources >= static_cast<int>(array.size())) {
        return {};
    }
    if (num_sources < 1) return {};

    doa::GridSpec grid;
    grid.az_step_deg = coarse_step_deg;
    grid.el_step_deg = coarse_step_deg;
    grid.el_max_deg = 76.0;
    const auto spec = doa::music_spectrum(*work, *arr, num_sources, d_over_lambda, grid);
    auto peaks = doa::pick_peaks(spec, num_sources, picker_sep_deg);
    for (auto& p : peaks) {
        const auto refined = doa::refine_music(*work, *arr, num_sources, d_over_lambda,
                                               p.azimuth, p.elevation);
        p.azimuth = refined.azimuth;
        p.elevation = refined.elevation;
        p.value = refined.value;
    }
    return peaks;
}

}  // namespace

// -------------------------------------------------------------- resolution

MetricsReport run_resolution_sweep(const ResolutionConfig& cfg) {
    if (cfg.trials < 1 || cfg.geometries.empty() || cfg.source_counts.empty() ||
        cfg.snrs_db.empty())
        throw InvalidArgument("resolution: empty sweep");

    io::Csv csv({"geometry", "k", "snr_db", "prob_resolution", "trials"});
    json rows = json::array();

    for (const auto& gname : cfg.geometries) {
        const auto array = experiment_geometry(gname, cfg.seed);
        const bool smoothed = geometry::parse_geometry_kind(gname) != geometry::GeometryKind::Ura;
        for (int k : cfg.source_counts) {
            for (double snr : cfg.snrs_db) {
                std::vector<int> resolved(static_cast<std::size_t>(cfg.trials), 0);
                const std::uint64_t cond_seed = Rng::derive(
                    cfg.seed, io::content_hash(gname) ^ (static_cast<std::uint64_t>(k) << 20) ^
                                  static_cast<std::uint64_t>(std::llround(snr * 16)));
                parallel_for(cfg.trials, cfg.jobs, [&](int t) {
                    Rng rng(Rng::derive(cond_seed, static_cast<std::uint64_t>(t)));
                    const auto dirs =
                        sample_directions(rng, k, cfg.min_sep_deg, cfg.el_max_deg);
                    sim::Scenario s;
                    s.array = array;
                    for (const auto& d : dirs) s.sources.push_back({d.first, d.second, 1.0, {}});
                    s.snr_db = snr;
                    s.snapshots = cfg.snapshots;
                    s.seed = rng.u64();
                    const auto x = sim::synth_snapshots(s);
                    const auto r = doa::sample_covariance(x);
                    const auto est = music_estimates(r, array, smoothed, k, s.d_over_lambda(),
                                                     cfg.window, 2.0, cfg.min_sep_deg * 0.45);
                    if (static_cast<int>(est.size()) < k) return;
                    const auto errs = match_errors(est, dirs);
                    const double lim = deg_to_rad(cfg.success_deg);
                    resolved[static_cast<std::size_t>(t)] =
                        std::all_of(errs.begin(), errs.end(),
                                    [&](double e) { return e <= lim; })
                            ? 1
                            : 0;
                });
                const double prob =
                    std::accumulate(resolved.begin(), resolved.end(), 0.0) / cfg.trials;
                csv.row(gname, k, snr, prob, cfg.trials);
                rows.push_back({{"geometry", gname},
                                {"k", k},
                                {"snr_db", snr},
                                {"prob", prob},
                                {"trials", cfg.trials}});
            }
        }
    }

    MetricsReport rep;
    rep.kind = "resolution";
    rep.summary = {{"rows", rows}};
    rep.tables.emplace_back("resolution", csv.str());
    return rep;
}

// ---------------------------------------------------------------- variance

MetricsReport run_variance_sweep(const VarianceConfig& cfg) {
    if (cfg.trials < 2) throw InvalidArgument("variance: need at least two trials");
    const auto array = geometry::make_geometry(geometry::GeometryKind::Ura);
    const double az0 = deg_to_rad(cfg.azimuth_deg);
    const double el0 = deg_to_rad(cfg.elevation_deg);

    io::Csv csv({"family", "snr_db", "elevation_deg", "variance_deg2", "bias_deg", "trials"});
    json rows = json::array();

    for (const auto& family : cfg.families) {
        for (double snr : cfg.snrs_db) {
            std::vector<Vector3d> units(static_cast<std::size_t>(cfg.trials),
                                        Vector3d::Zero());
            const std::uint64_t cond_seed =
                Rng::derive(cfg.seed, io::content_hash(family) ^
                                          static_cast<std::uint64_t>(std::llround(snr * 16)));
            parallel_for(cfg.trials, cfg.jobs, [&](int t) {
                sim::Scenario s;
                s.array = array;
                sim::WaveformSpec w;
                w.kind = family;
                if (family != "sine") {
                    w.n = waveforms::default_prime(sim::WaveformSpec{family, 0, 0}.family());
                    w.q = cfg.root;
                }
                s.sources.push_back({az0, el0, 1.0, w});
                s.snr_db = snr;
                s.seed = Rng::derive(cond_seed, static_cast<std::uint64_t>(t));
                const int block_len = cfg.chunk + 1024;
                const auto block = sim::synth_timedomain(s, block_len, 0);
                const auto chunks = sim::chunk_and_convert(
                    block, s.sample_rate, cfg.chunk, 512,
                    s.carrier_hz - s.bandwidth_hz / 2.0, s.carrier_hz + s.bandwidth_hz / 2.0);
                const auto& chunk = chunks.at(1);  // interior chunk, clean filter edges
                const double lambda = s.sound_speed / chunk.f_center;
                const auto r = doa::sample_covariance(chunk.data);
                const auto est = doa::refine_music(r, array, 1, array.pitch_m / lambda, az0,
                                                   el0);
                units[static_cast<std::size_t>(t)] = sim::unit_dir(est.azimuth, est.elevation);
            });

            Vector3d mean = Vector3d::Zero();
            for (const auto& u : units) mean += u;
            mean.normalize();
            double var = 0.0;
            for (const auto& u : units) {
                const double ang =
                    rad_to_deg(std::acos(std::clamp(u.dot(mean), -1.0, 1.0)));
                var += ang * ang;
            }
            var /= static_cast<double>(cfg.trials);
            const double bias = rad_to_deg(
                std::acos(std::clamp(mean.dot(sim::unit_dir(az0, el0)), -1.0, 1.0)));
            csv.row(family, snr, cfg.elevation_deg, var, bias, cfg.trials);
            rows.push_back({{"family", family},
                            {"snr_db", snr},
                            {"variance_deg2", var},
                            {"bias_deg", bias},
                            {"trials", cfg.trials}});
        }
    }

    MetricsReport rep;
    rep.kind = "variance";
    rep.summary = {{"rows", rows}};
    rep.tables.emplace_back("variance", csv.str());
    return rep;
}

// ---------------------------------------------------------- identification

namespace {

struct BasebandSystem {
    geometry::GridArray array;
    ident::CandidatePool pool;
    double fw = 0.0;       // working sample rate (complex baseband)
    double carrier = 0.0;  // physical carrier, enters the delay phases
    double sound_speed = 343.0;
    int ns = 0;            // samples per symbol at fw
    std::vector<std::vector<cplx>> template_fft;
};

BasebandSystem make_baseband_system(const IdentificationConfig& cfg) {
    BasebandSystem sys;
    sys.array = geometry::make_geometry(geometry::GeometryKind::Ura);
    const waveforms::PassbandConfig full{};  // deployed defaults
    sys.fw = full.sample_rate / cfg.decimation;
    sys.carrier = full.carrier_hz;
    const double ns_d = sys.fw * full.symbol_s;
    if (std::abs(ns_d - std::round(ns_d)) > 1e-6)
        throw InvalidArgument("identification: decimation must keep symbol length integer");
    sys.ns = static_cast<int>(std::lround(ns_d));

    const auto family = waveforms::parse_family(cfg.family);
    const int n = waveforms::default_prime(family);
    const auto roots = waveforms::root_pool(n, cfg.pool, family);
    waveforms::PassbandConfig wcfg;
    wcfg.sample_rate = sys.fw;
    wcfg.carrier_hz = 0.0;
    wcfg.bandwidth_hz = full.bandwidth_hz;
    wcfg.symbol_s = full.symbol_s;
    sys.pool = ident::make_pool(family, n, roots, wcfg);
    for (const auto& t : sys.pool.templates)
        sys.template_fft.push_back(dsp::fft(std::span<const cplx>{t}));
    return sys;
}

// One identification trial, synthesized directly in the complex-baseband
// domain at the working rate (delays act as linear phase plus carrier phase;
// a one-symbol circular window is exact for cyclic emissions).
bool identification_trial(const BasebandSystem& sys, int k_sources, double snr_db,
                          double sep_deg, bool clustered, double el_max_deg,
                          std::uint64_t seed) {
    Rng rng(seed);
    const auto dirs = clustered
                          ? sample_directions_at_separation(rng, k_sources, sep_deg, el_max_deg)
                          : sample_directions(rng, k_sources, sep_deg, el_max_deg);

    // Distinct candidate identities.
    std::vector<int> cand(sys.pool.size());
    std::iota(cand.begin(), cand.end(), 0);
    for (std::size_t i = cand.size() - 1; i > 0; --i)
        std::swap(cand[i], cand[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    cand.resize(static_cast<std::size_t>(k_sources));

    const auto m = static_cast<Eigen::Index>(sys.array.size());
    const auto ns = static_cast<std::size_t>(sys.ns);
    const MatrixXd pos = sys.array.positions();

    // Source spectra (templates normalized to unit mean-square, random
    // circular emission offsets).
    std::vector<std::vector<cplx>> src_fft(static_cast<std::size_t>(k_sources));
    for (int k = 0; k < k_sources; ++k) {
        const auto& tpl = sys.pool.templates[static_cast<std::size_t>(cand[static_cast<std::size_t>(k)])];
        const double amp =
            1.0 / std::sqrt(sys.pool.template_energy[static_cast<std::size_t>(
                                cand[static_cast<std::size_t>(k)])] /
                            static_cast<double>(ns));
        const auto offset = static_cast<std::size_t>(rng.uniform_int(0, sys.ns - 1));
        std::vector<cplx> shifted(ns);
        for (std::size_t t = 0; t < ns; ++t) shifted[t] = amp * tpl[(t + offset) % ns];
        src_fft[static_cast<std::size_t>(k)] = dsp::fft(std::span<const cplx>{shifted});
    }

    // Per-sensor spectra with exact delay phases plus white noise.
    const double bw = sys.pool.cfg.bandwidth_hz;
    const double sigma2 =
        static_cast<double>(k_sources) * (sys.fw / bw) / db_to_pow(snr_db);
    const double noise_bin = std::sqrt(sigma2 * static_cast<double>(ns));

    MatrixXcd sensor_fft(m, static_cast<Eigen::Index>(ns));
    std::vector<VectorXd> taus(static_cast<std::size_t>(k_sources));
    for (int k = 0; k < k_sources; ++k)
        taus[static_cast<std::size_t>(k)] = ident::delays(
            sys.array, dirs[static_cast<std::size_t>(k)].first,
            dirs[static_cast<std::size_t>(k)].second, sys.sound_speed);

    const double df = sys.fw / static_cast<double>(ns);
    for (Eigen::Index s = 0; s < m; ++s) {
        for (std::size_t b = 0; b < ns; ++b) sensor_fft(s, static_cast<Eigen::Index>(b)) =
            noise_bin * rng.cgaussian();
        for (int k = 0; k < k_sources; ++k) {
            const double tau = taus[static_cast<std::size_t>(k)][s];
            const cplx carrier_ph = std::polar(1.0, 2.0 * pi * sys.carrier * tau);
            const cplx step = std::polar(1.0, 2.0 * pi * df * tau);
            const cplx wrap = std::polar(1.0, -2.0 * pi * sys.fw * tau);
            cplx ramp = 1.0;
            const auto& sf = src_fft[static_cast<std::size_t>(k)];
            for (std::size_t b = 0; b < ns; ++b) {
                const cplx ph = 2 * b < ns ? ramp : ramp * wrap;
                sensor_fft(s, static_cast<Eigen::Index>(b)) += sf[b] * ph * carrier_ph;
                ramp *= step;
            }
        }
    }

    // Beams steered at the true source directions, then correlation and
    // assignment.
    MatrixXd confidence(k_sources, static_cast<Eigen::Index>(sys.pool.size()));
    std::vector<cplx> beam(ns);
    for (int k = 0; k < k_sources; ++k) {
        std::fill(beam.begin(), beam.end(), cplx{0.0});
        for (Eigen::Index s = 0; s < m; ++s) {
            const double tau = taus[static_cast<std::size_t>(k)][s];
            const cplx carrier_ph = std::polar(1.0, -2.0 * pi * sys.carrier * tau);
            const cplx step = std::polar(1.0, -2.0 * pi * df * tau);
            const cplx wrap = std::polar(1.0, 2.0 * pi * sys.fw * tau);
            cplx ramp = 1.0;
            for (std::size_t b = 0; b < ns; ++b) {
                const cplx ph = 2 * b < ns ? ramp : ramp * wrap;
                beam[b] += sensor_fft(s, static_cast<Eigen::Index>(b)) * ph * carrier_ph;
                ramp *= step;
            }
        }
        // beam holds the spectrum; correlate against the cached template FFTs.
        double ey = 0.0;
        for (const auto& v : beam) ey += std::norm(v);
        ey /= static_cast<double>(ns);  // Parseval
        std::vector<cplx> prod(ns);
        for (std::size_t i = 0; i < sys.pool.size(); ++i) {
            const auto& tf = sys.template_fft[i];
            for (std::size_t b = 0; b < ns; ++b) prod[b] = beam[b] * std::conj(tf[b]);
            const auto r = dsp::ifft(prod);
            double best = 0.0;
            for (const auto& v : r) best = std::max(best, std::abs(v));
            confidence(k, static_cast<Eigen::Index>(i)) =
                best / std::sqrt(ey * sys.pool.template_energy[i]);
        }
    }

    const auto a = ident::assign(confidence);
    for (int k = 0; k < k_sources; ++k)
        if (a.mapping[static_cast<std::size_t>(k)] != cand[static_cast<std::size_t>(k)])
            return false;
    return true;
}

}  // namespace

MetricsReport run_identification_sweep(const IdentificationConfig& cfg) {
    if (cfg.sources > cfg.pool)
        throw InvalidArgument("identification: sources must not exceed the pool");
    const auto sys = make_baseband_system(cfg);

    io::Csv csv({"mode", "family", "snr_db", "min_sep_deg", "prob_identification", "trials"});
    json rows = json::array();

    auto run_condition = [&](const std::string& mode, double snr, double sep,
                             bool clustered) {
        std::vector<int> ok(static_cast<std::size_t>(cfg.trials), 0);
        const std::uint64_t cond_seed = Rng::derive(
            cfg.seed, io::content_hash(mode) ^
                          static_cast<std::uint64_t>(std::llround(snr * 16)) ^
                          (static_cast<std::uint64_t>(std::llround(sep * 16)) << 24));
        parallel_for(cfg.trials, cfg.jobs, [&](int t) {
            if (cfg.sources == 0) {
                ok[static_cast<std::size_t>(t)] = 1;  // vacuously correct
                return;
            }
            ok[static_cast<std::size_t>(t)] =
                identification_trial(sys, cfg.sources, snr, sep, clustered, 60.0,
                                     Rng::derive(cond_seed, static_cast<std::uint64_t>(t)))
                    ? 1
                    : 0;
        });
        const double prob = std::accumulate(ok.begin(), ok.end(), 0.0) / cfg.trials;
        csv.row(mode, cfg.family, snr, sep, prob, cfg.trials);
        rows.push_back({{"mode", mode},
                        {"family", cfg.family},
                        {"snr_db", snr},
                        {"min_sep_deg", sep},
                        {"prob", prob},
                        {"trials", cfg.trials}});
    };

    for (double snr : cfg.snrs_db) run_condition("snr", snr, cfg.wide_sep_deg, false);
    for (double sep : cfg.separations_deg)
        run_condition("separation", cfg.separation_snr_db, sep, true);

    MetricsReport rep;
    rep.kind = "identification";
    rep.summary = {{"rows", rows}};
    rep.tables.emplace_back("identification", csv.str());
    return rep;
}

// --------------------------------------------------------------------- e2e

std::vector<Vector3d> smooth_trajectory(std::uint64_t seed, double duration_s,
                                        double rate_hz) {
    Rng rng(seed);
    const int n = std::max(2, static_cast<int>(std::lround(duration_s * rate_hz)));
    const double waypoint_s = 2.0;
    const int nw = std::max(2, static_cast<int>(std::ceil(duration_s / waypoint_s)) + 1);
    std::vector<Vector3d> wp(static_cast<std::size_t>(nw));
    for (auto& w : wp)
        w = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(1.4, 2.6)};

    std::vector<Vector3d> raw(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz / waypoint_s;
        const int seg = std::min(static_cast<int>(t), nw - 2);
        const double f = std::clamp(t - seg, 0.0, 1.0);
        raw[static_cast<std::size_t>(i)] =
            (1.0 - f) * wp[static_cast<std::size_t>(seg)] + f * wp[static_cast<std::size_t>(seg) + 1];
    }
    // Moving-average smoothing over +-0.25 s.
    const int half = std::max(1, static_cast<int>(std::lround(0.25 * rate_hz)));
    std::vector<Vector3d> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Vector3d acc = Vector3d::Zero();
        int cnt = 0;
        for (int k = std::max(0, i - half); k <= std::min(n - 1, i + half); ++k) {
            acc += raw[static_cast<std::size_t>(k)];
            ++cnt;
        }
        out[static_cast<std::size_t>(i)] = acc / cnt;
    }
    return out;
}

namespace {

struct TagTruth {
    int root = 0;                    // emitted sequence id
    std::vector<Vector3d> at_chunk;  // position per chunk (statics repeat)
};

struct DeviceLayout {
    loc::Pose pose;
};

std::vector<DeviceLayout> default_devices() {
    std::vector<DeviceLayout> devs(2);
    devs[0].pose.rotation = Matrix3d::Identity();
    devs[0].pose.translation = Vector3d::Zero();
    const double phi = std::atan2(-2.5, 2.0);  // local +z toward the scene volume
    devs[1].pose.rotation = opt::rotation_exp(Vector3d::UnitY() * phi);
    devs[1].pose.translation = Vector3d{2.5, 0.0, 0.0};
    return devs;
}

struct LocalDir {
    double az = 0.0, el = 0.0;
    bool visible = false;
};

LocalDir local_direction(const loc::Pose& pose, const Vector3d& target) {
    const Vector3d v = pose.rotation.transpose() * (target - pose.translation);
    LocalDir d;
    if (v.z() <= 1e-6) return d;
    d.az = std::atan2(v.y(), v.x());
    d.el = std::atan2(std::hypot(v.x(), v.y()), v.z());
    d.visible = d.el < deg_to_rad(80.0);
    return d;
}

}  // namespace

MetricsReport run_e2e_localization(const E2eConfig& cfg) {
    const auto devices = cfg.device_poses.empty()
                             ? default_devices()
                             : [&] {
                                   std::vector<DeviceLayout> d;
                                   for (const auto& p : cfg.device_poses) d.push_back({p});
                                   return d;
                               }();
    if (devices.size() < 2)
        throw InvalidArgument("e2e: need at least two device poses");
    const int n_chunks = std::max(2, static_cast<int>(std::lround(cfg.duration_s * cfg.chunk_rate_hz)));
    const int n_dev = static_cast<int>(devices.size());

    // Tags: one moving plus the configured statics, ids per the deployed pool.
    std::vector<TagTruth> tags;
    {
        TagTruth moving;
        moving.root = 10;
        moving.at_chunk = smooth_trajectory(Rng::derive(cfg.seed, 1), cfg.duration_s,
                                            cfg.chunk_rate_hz);
        moving.at_chunk.resize(static_cast<std::size_t>(n_chunks),
                               moving.at_chunk.empty() ? Vector3d{0, 0, 2}
                                                       : moving.at_chunk.back());
        tags.push_back(std::move(moving));
        Rng rng(Rng::derive(cfg.seed, 2));
        for (int s = 0; s < cfg.static_tags; ++s) {
            Vector3d p;
            for (int attempt = 0; attempt < 1000; ++attempt) {
                p = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(1.4, 2.6)};
                bool ok = true;
                for (const auto& t : tags)
                    if ((t.at_chunk.front() - p).norm() < 0.6) ok = false;
                for (int i = 0; ok && i < n_chunks; i += 8)
                    if ((tags[0].at_chunk[static_cast<std::size_t>(i)] - p).norm() < 0.35)
                        ok = false;
                if (ok) break;
            }
            TagTruth st;
            st.root = 12 + s;
            st.at_chunk.assign(static_cast<std::size_t>(n_chunks), p);
            tags.push_back(std::move(st));
        }
    }
    const int n_tags = static_cast<int>(tags.size());

    const auto ura = geometry::make_geometry(geometry::GeometryKind::Ura);
    const waveforms::PassbandConfig pb{};
    const auto family = waveforms::Family::ScZc;
    const int n_seq = waveforms::kDefaultZcPrime;
    const auto pool_roots = waveforms::root_pool(n_seq, 20, family);
    const auto pool = ident::make_pool(family, n_seq, pool_roots, pb);

    const double fs = pb.sample_rate;
    const double f_lo = pb.carrier_hz - pb.bandwidth_hz / 2.0;
    const double f_hi = pb.carrier_hz + pb.bandwidth_hz / 2.0;
    const int hop_samples = static_cast<int>(std::lround(fs / cfg.chunk_rate_hz));

    // Element row lookup on the full grid (geometry masks reuse the URA data).
    auto ura_row = [&](geometry::GridPoint e) {
        return static_cast<Eigen::Index>(e.x) * 8 + e.y;
    };

    struct GeoState {
        geometry::GridArray array;
        bool smoothed = false;
        std::vector<Eigen::Index> rows;
    };
    std::vector<GeoState> geos;
    for (const auto& name : cfg.geometries) {
        GeoState g;
        g.array = experiment_geometry(name, cfg.seed);
        g.smoothed = geometry::parse_geometry_kind(name) != geometry::GeometryKind::Ura;
        for (const auto& e : g.array.elements) g.rows.push_back(ura_row(e));
        geos.push_back(std::move(g));
    }

    // Per (device, chunk) scenario for the frozen tag positions.
    auto chunk_scenario = [&](int dev, int ci) {
        sim::Scenario s;
        s.array = ura;
        for (const auto& tag : tags) {
            const auto d = local_direction(devices[static_cast<std::size_t>(dev)].pose,
                                           tag.at_chunk[static_cast<std::size_t>(ci)]);
            sim::WaveformSpec w;
            w.kind = "sc";
            w.n = n_seq;
            w.q = tag.root;
            s.sources.push_back({d.az, d.el, 1.0, w});
        }
        s.snr_db = cfg.snr_db;
        s.seed = Rng::derive(cfg.seed, 0x500);  // one shared emission timeline
        s.noise_stream = static_cast<std::uint64_t>(dev);
        return s;
    };

    // Phase 1: per-chunk DoA estimates for every geometry.
    // est[geo][dev][chunk] -> local-frame estimates.
    std::vector<std::vector<std::vector<std::vector<doa::DoaEstimate>>>> est(
        geos.size());
    for (auto& per_dev : est)
        per_dev.assign(static_cast<std::size_t>(n_dev),
                       std::vector<std::vector<doa::DoaEstimate>>(
                           static_cast<std::size_t>(n_chunks)));

    if (!cfg.exact_doa) {
        parallel_for(n_chunks * n_dev, cfg.jobs, [&](int idx) {
            const int ci = idx / n_dev;
            const int dev = idx % n_dev;
            auto s = chunk_scenario(dev, ci);
            const auto t0 = static_cast<std::int64_t>(ci) * hop_samples;
            const auto block = sim::synth_timedomain(s, cfg.chunk + 1024, t0);
            const auto chunks =
                sim::chunk_and_convert(block, fs, cfg.chunk, 512, f_lo, f_hi);
            const auto& chunk = chunks.at(1);
            const double lambda = s.sound_speed / chunk.f_center;

            for (std::size_t g = 0; g < geos.size(); ++g) {
                MatrixXcd sub(static_cast<Eigen::Index>(geos[g].rows.size()),
                              chunk.data.cols());
                for (std::size_t rr = 0; rr < geos[g].rows.size(); ++rr)
                    sub.row(static_cast<Eigen::Index>(rr)) = chunk.data.row(geos[g].rows[rr]);
                int kest = 0;
                try {
                    kest = doa::estimate_source_count(sub);
                } catch (const InvalidArgument&) {
                    continue;
                }
                kest = std::min(kest, n_tags + 2);
                if (kest < 1) continue;
                const auto got = music_estimates(
                    doa::sample_covariance(sub), geos[g].array, geos[g].smoothed, kest,
                    geos[g].array.pitch_m / lambda, 0, 2.5, 6.0);
                est[g][static_cast<std::size_t>(dev)][static_cast<std::size_t>(ci)] = got;
            }
        });
    }

    // Phase 2: identification windows, association, triangulation.
    const int ident_interval =
        std::max(1, static_cast<int>(std::lround(cfg.ident_every_s * cfg.chunk_rate_hz)));
    const int sym_window = 25600;  // > one symbol, FFT-friendly
    const int corr_skip = 512;

    io::Csv limits_csv({"geometry", "limit_mm", "retained_fraction", "err_p50_mm",
                        "err_p95_mm", "samples"});
    io::Csv geos_csv({"geometry", "valid_fraction", "err_p50_mm", "err_p95_mm", "err_p100_mm",
                      "samples"});
    json geo_rows = json::array();
    json limit_rows = json::array();
    MetricsReport rep;
    rep.kind = "e2e";

    for (std::size_t g = 0; g < geos.size(); ++g) {
        // id -> last known global direction per device.
        std::vector<std::map<int, Vector3d>> id_dirs(static_cast<std::size_t>(n_dev));
        struct Sample {
            loc::Fix fix;
            double err_m = 0.0;
            bool matched_truth = false;
        };
        std::vector<Sample> samples;

        for (int ci = 0; ci < n_chunks; ++ci) {
            // Refresh identities at the symbol cadence.
            if (!cfg.exact_doa && ci % ident_interval == 0) {
                for (int dev = 0; dev < n_dev; ++dev) {
                    const auto& ests =
                        est[g][static_cast<std::size_t>(dev)][static_cast<std::size_t>(ci)];
                    if (ests.empty() || ests.size() > pool.size()) continue;
                    auto s = chunk_scenario(dev, ci);
                    const auto t0 = static_cast<std::int64_t>(ci) * hop_samples;
                    const auto block = sim::synth_timedomain(s, sym_window, t0);
                    const auto taps = dsp::bandpass_fir(f_lo, f_hi, fs);
                    MatrixXcd analytic(static_cast<Eigen::Index>(geos[g].rows.size()),
                                       sym_window);
                    for (std::size_t rr = 0; rr < geos[g].rows.size(); ++rr) {
                        std::vector<double> row(static_cast<std::size_t>(sym_window));
                        for (int t = 0; t < sym_window; ++t)
                            row[static_cast<std::size_t>(t)] =
                                block(geos[g].rows[rr], t);
                        const auto filt = dsp::filter_same(row, taps);
                        const auto a = dsp::analytic_signal(filt);
                        for (int t = 0; t < sym_window; ++t)
                            analytic(static_cast<Eigen::Index>(rr), t) =
                                a[static_cast<std::size_t>(t)];
                    }
                    std::vector<VectorXcd> beams;
                    for (const auto& e : ests) {
                        const auto tau = ident::delays(geos[g].array, e.azimuth, e.elevation,
                                                       s.sound_speed);
                        const auto y = ident::das_beamform(analytic, tau, fs, 0.0);
                        beams.push_back(y.segment(corr_skip, pool.symbol_samples()));
                    }
                    try {
                        const auto conf = ident::build_confidence(beams, pool, fs);
                        const auto a = ident::assign(conf);
                        auto& dirs = id_dirs[static_cast<std::size_t>(dev)];
                        dirs.clear();
                        for (std::size_t b = 0; b < ests.size(); ++b) {
                            const int root = pool_roots[static_cast<std::size_t>(
                                a.mapping[b])];
                            const auto ray = loc::to_global(
                                devices[static_cast<std::size_t>(dev)].pose, ests[b]);
                            dirs[root] = ray.direction;
                        }
                    } catch (const std::exception&) {
                        // window failed; keep the previous identity map
                    }
                }
            }

            // Associate this chunk's estimates with known identities.
            std::vector<std::map<int, loc::Ray>> rays(static_cast<std::size_t>(n_dev));
            for (int dev = 0; dev < n_dev; ++dev) {
                if (cfg.exact_doa) {
                    // Bypass: rays straight from the true directions.
                    for (const auto& tag : tags) {
                        const auto d =
                            local_direction(devices[static_cast<std::size_t>(dev)].pose,
                                            tag.at_chunk[static_cast<std::size_t>(ci)]);
                        if (!d.visible) continue;
                        rays[static_cast<std::size_t>(dev)][tag.root] = loc::to_global(
                            devices[static_cast<std::size_t>(dev)].pose,
                            {d.az, d.el, 1.0, {}, 0.0});
                    }
                    continue;
                }
                const auto& ests =
                    est[g][static_cast<std::size_t>(dev)][static_cast<std::size_t>(ci)];
                auto& dirs = id_dirs[static_cast<std::size_t>(dev)];
                std::vector<char> taken(ests.size(), 0);
                for (auto& [root, dir] : dirs) {
                    double best = deg_to_rad(12.0);
                    int best_b = -1;
                    for (std::size_t b = 0; b < ests.size(); ++b) {
                        if (taken[b]) continue;
                        const auto ray = loc::to_global(
                            devices[static_cast<std::size_t>(dev)].pose, ests[b]);
                        const double ang = std::acos(
                            std::clamp(ray.direction.dot(dir), -1.0, 1.0));
                        if (ang < best) {
                            best = ang;
                            best_b = static_cast<int>(b);
                        }
                    }
                    if (best_b >= 0) {
                        taken[static_cast<std::size_t>(best_b)] = 1;
                        const auto ray = loc::to_global(
                            devices[static_cast<std::size_t>(dev)].pose,
                            ests[static_cast<std::size_t>(best_b)]);
                        rays[static_cast<std::size_t>(dev)][root] = ray;
                        dir = ray.direction;  // track slow motion
                    }
                }
            }

            // Triangulate ids visible from two or more devices.
            for (const auto& tag : tags) {
                std::vector<loc::Ray> tag_rays;
                for (int dev = 0; dev < n_dev; ++dev) {
                    auto it = rays[static_cast<std::size_t>(dev)].find(tag.root);
                    if (it != rays[static_cast<std::size_t>(dev)].end())
                        tag_rays.push_back(it->second);
                }
                if (tag_rays.size() < 2) continue;
                try {
                    auto fix = loc::triangulate(tag_rays);
                    fix.t = ci / cfg.chunk_rate_hz;
                    Sample smp;
                    smp.fix = fix;
                    smp.err_m =
                        (fix.position - tag.at_chunk[static_cast<std::size_t>(ci)]).norm();
                    smp.matched_truth = true;
                    samples.push_back(smp);
                } catch (const NumericalError&) {
                }
            }
        }

        // Metrics at the default divergence limit.
        const double denom = static_cast<double>(n_chunks) * n_tags;
        std::vector<double> errs_mm;
        int valid = 0;
        for (const auto& s : samples) {
            if (s.fix.divergence_m <= cfg.default_limit_mm / 1000.0) {
                ++valid;
                errs_mm.push_back(s.err_m * 1000.0);
            }
        }
        const double vf = static_cast<double>(valid) / denom;
        const double p50 = errs_mm.empty() ? -1.0 : percentile(errs_mm, 50);
        const double p95 = errs_mm.empty() ? -1.0 : percentile(errs_mm, 95);
        const double p100 = errs_mm.empty() ? -1.0 : percentile(errs_mm, 100);
        geos_csv.row(geos[g].array.name, vf, p50, p95, p100,
                     static_cast<int>(errs_mm.size()));
        geo_rows.push_back({{"geometry", geos[g].array.name},
                            {"valid_fraction", vf},
                            {"err_p50_mm", p50},
                            {"err_p95_mm", p95},
                            {"err_p100_mm", p100},
                            {"samples", static_cast<int>(errs_mm.size())}});

        for (double lim : cfg.limits_mm) {
            std::vector<double> kept;
            for (const auto& s : samples)
                if (s.fix.divergence_m <= lim / 1000.0) kept.push_back(s.err_m * 1000.0);
            const double rf = static_cast<double>(kept.size()) / denom;
            const double l50 = kept.empty() ? -1.0 : percentile(kept, 50);
            const double l95 = kept.empty() ? -1.0 : percentile(kept, 95);
            limits_csv.row(geos[g].array.name, lim, rf, l50, l95,
                           static_cast<int>(kept.size()));
            limit_rows.push_back({{"geometry", geos[g].array.name},
                                  {"limit_mm", lim},
                                  {"retained_fraction", rf},
                                  {"err_p50_mm", l50},
                                  {"err_p95_mm", l95},
                                  {"samples", static_cast<int>(kept.size())}});
        }

        // Fix stream export for this geometry.
        io::Csv fixes_csv({"t", "x", "y", "z", "divergence_m", "device_count"});
        for (const auto& s : samples)
            fixes_csv.row(s.fix.t, s.fix.position.x(), s.fix.position.y(),
                          s.fix.position.z(), s.fix.divergence_m, s.fix.device_count);
        rep.tables.emplace_back("fixes_" + geos[g].array.name, fixes_csv.str());
    }

    rep.summary = {{"geometries", geo_rows}, {"limits", limit_rows}};
    rep.tables.emplace_back("e2e_geometries", geos_csv.str());
    rep.tables.emplace_back("e2e_limits", limits_csv.str());
    return rep;
}

}  // namespace beamloc::harness
