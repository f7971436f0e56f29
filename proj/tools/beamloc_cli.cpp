// Command-line front end: geometry/waveform inspection, scene synthesis,
// estimation, localization, calibration, and the experiment sweeps.

#include <CLI11.hpp>

#include <iostream>

#include "beamloc/fft.hpp"
#include "beamloc/filters.hpp"
#include "beamloc/harness.hpp"
#include "beamloc/levmar.hpp"
#include "beamloc/io.hpp"

namespace bl = beamloc;
using bl::json;

namespace {

struct GlobalArgs {
    std::string config;
    std::string out = "out";
    std::string format = "json";
    std::uint64_t seed = 0;  // 0 = keep config seed
    int jobs = 1;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    return json::parse(bl::io::read_file(path));
}

void emit(const GlobalArgs& g, const std::string& name, const std::string& content) {
    bl::io::write_file_atomic(std::filesystem::path(g.out) / name, content);
    std::cout << (std::filesystem::path(g.out) / name).string() << "\n";
}

void emit_json(const GlobalArgs& g, const std::string& name, const json& j) {
    emit(g, name, j.dump(2) + "\n");
}

// ----------------------------------------------------------- geometry

void cmd_geometry(const GlobalArgs& g, const std::string& action, const std::string& kind,
                  std::uint64_t seed, int count) {
    bl::geometry::GeometryParams params;
    if (seed) params.seed = seed;
    if (count) params.random_count = count;
    const auto array = bl::geometry::make_geometry(bl::geometry::parse_geometry_kind(kind),
                                                   params);
    if (action == "generate") {
        emit_json(g, "geometry_" + array.name + ".json", json(array));
        return;
    }
    const auto co = bl::geometry::difference_coarray(array);
    if (action == "inspect") {
        const auto [wx, wy] = bl::geometry::default_window(co);
        emit_json(g, "geometry_" + array.name + "_info.json",
                  {{"name", array.name},
                   {"elements", array.size()},
                   {"differences", co.differences.size()},
                   {"hole_free", co.hole_free.size()},
                   {"virtual_extent", {co.virtual_extent_x(), co.virtual_extent_y()}},
                   {"default_window", {wx, wy}}});
        return;
    }
    if (action == "coarray") {
        json diffs = json::array(), holes = json::array();
        for (const auto& d : co.differences) diffs.push_back({d.x, d.y});
        for (const auto& d : co.hole_free) holes.push_back({d.x, d.y});
        emit_json(g, "coarray_" + array.name + ".json",
                  {{"differences", diffs}, {"hole_free", holes}});
        return;
    }
    throw bl::InvalidArgument("geometry: unknown action " + action);
}

// ----------------------------------------------------------- waveform

void cmd_waveform_generate(const GlobalArgs& g, const std::string& family, int n, int q) {
    const auto fam = bl::waveforms::parse_family(family);
    const auto seq = bl::waveforms::make_sequence(fam, {n, q});
    bl::io::Csv csv({"index", "re", "im"});
    for (std::size_t i = 0; i < seq.samples.size(); ++i)
        csv.row(i, seq.samples[i].real(), seq.samples[i].imag());
    emit(g, "sequence_" + family + "_" + std::to_string(n) + "_" + std::to_string(q) + ".csv",
         csv.str());
}

void cmd_waveform_correlate(const GlobalArgs& g, const std::string& family, int n, int q1,
                            int q2) {
    const auto fam = bl::waveforms::parse_family(family);
    const auto a = bl::waveforms::make_sequence(fam, {n, q1});
    const auto b = bl::waveforms::make_sequence(fam, {n, q2});
    const auto r = bl::waveforms::normalized_cyclic_correlation(a.samples, b.samples);
    bl::io::Csv csv({"tau", "re", "im", "norm_mag"});
    for (std::size_t t = 0; t < r.size(); ++t)
        csv.row(t, r[t].real(), r[t].imag(), std::abs(r[t]));
    emit(g, "correlation.csv", csv.str());
}

void cmd_waveform_modulate(const GlobalArgs& g, const std::string& family, int n, int q,
                           const bl::waveforms::PassbandConfig& cfg) {
    const auto fam = bl::waveforms::parse_family(family);
    const auto sig = bl::waveforms::modulate(bl::waveforms::make_sequence(fam, {n, q}), cfg);
    const std::string stem = "passband_" + family + "_" + std::to_string(n);
    bl::io::write_raw_f32(std::filesystem::path(g.out) / (stem + ".f32"), sig.samples);
    std::cout << (std::filesystem::path(g.out) / (stem + ".f32")).string() << "\n";
    emit_json(g, stem + ".json",
              {{"sample_rate", cfg.sample_rate},
               {"carrier_hz", cfg.carrier_hz},
               {"bandwidth_hz", cfg.bandwidth_hz},
               {"symbol_s", cfg.symbol_s},
               {"samples", sig.samples.size()},
               {"family", family},
               {"n", n},
               {"q", q}});
}

// ----------------------------------------------------------- scenes

bl::sim::Scenario scene_from(const GlobalArgs& g) {
    if (g.config.empty()) throw bl::InvalidArgument("--config <scenario.json> is required");
    auto s = load_config(g.config).get<bl::sim::Scenario>();
    if (g.seed) s.seed = g.seed;
    return s;
}

void cmd_simulate(const GlobalArgs& g, double duration_s) {
    const auto s = scene_from(g);
    const int n = static_cast<int>(std::lround(duration_s * s.sample_rate));
    const auto block = bl::sim::synth_timedomain(s, n, 0);
    std::vector<double> interleaved(static_cast<std::size_t>(block.size()));
    for (int t = 0; t < block.cols(); ++t)
        for (int m = 0; m < block.rows(); ++m)
            interleaved[static_cast<std::size_t>(t) * block.rows() + m] = block(m, t);
    bl::io::write_raw_f32(std::filesystem::path(g.out) / "scene.f32", interleaved);
    std::cout << (std::filesystem::path(g.out) / "scene.f32").string() << "\n";
    emit_json(g, "scene.json",
              {{"channels", block.rows()},
               {"frames", block.cols()},
               {"sample_rate", s.sample_rate},
               {"layout", "interleaved"},
               {"seed", s.seed}});
}

void cmd_doa(const GlobalArgs& g, const std::string& mode, double duration_s,
             bool dump_spectrum) {
    const auto s = scene_from(g);
    json records = json::array();
    auto add_estimates = [&](const std::vector<bl::doa::DoaEstimate>& ests, double t) {
        for (const auto& e : ests)
            records.push_back({{"device", s.array.name},
                               {"t", t},
                               {"phi_deg", bl::rad_to_deg(e.azimuth)},
                               {"theta_deg", bl::rad_to_deg(e.elevation)}});
    };

    if (mode == "snapshots") {
        const auto x = bl::sim::synth_snapshots(s);
        const auto r = bl::doa::sample_covariance(x);
        const int k = std::max<std::size_t>(1, s.sources.size());
        const auto spec = bl::doa::music_spectrum(r, s.array, k, s.d_over_lambda());
        if (dump_spectrum) {
            bl::io::Csv csv({"phi_deg", "theta_deg", "value"});
            for (std::size_t j = 0; j < spec.el_deg.size(); ++j)
                for (std::size_t i = 0; i < spec.az_deg.size(); ++i)
                    csv.row(spec.az_deg[i], spec.el_deg[j],
                            spec.values(static_cast<Eigen::Index>(j),
                                        static_cast<Eigen::Index>(i)));
            emit(g, "pseudospectrum.csv", csv.str());
        }
        add_estimates(bl::doa::pick_peaks(spec, k), 0.0);
    } else {
        const int n = static_cast<int>(std::lround(duration_s * s.sample_rate));
        const auto block = bl::sim::synth_timedomain(s, n, 0);
        const int hop = static_cast<int>(std::lround(s.sample_rate / 100.0));
        const auto chunks = bl::sim::chunk_and_convert(
            block, s.sample_rate, 4096, hop, s.carrier_hz - s.bandwidth_hz / 2.0,
            s.carrier_hz + s.bandwidth_hz / 2.0);
        for (const auto& c : chunks) {
            const int k = bl::doa::estimate_source_count(c.data);
            if (k < 1) continue;
            const auto r = bl::doa::sample_covariance(c.data);
            const double dl = s.array.pitch_m * c.f_center / s.sound_speed;
            const auto spec = bl::doa::music_spectrum(r, s.array, k, dl);
            add_estimates(bl::doa::pick_peaks(spec, k), c.t0_s);
        }
    }
    emit_json(g, "estimates.json", records);
}

void cmd_identify(const GlobalArgs& g, int pool_size) {
    const auto s = scene_from(g);
    if (s.sources.empty()) throw bl::InvalidArgument("identify: scene has no sources");
    const auto family = s.sources.front().waveform.family();
    const int n = s.sources.front().waveform.n;
    const auto roots = bl::waveforms::root_pool(n, pool_size, family);
    const auto pool = bl::ident::make_pool(family, n, roots, s.passband());

    const int sym = pool.symbol_samples();
    const int window = static_cast<int>(bl::dsp::next_fast_len(
        static_cast<std::size_t>(sym) + 1024));
    const auto block = bl::sim::synth_timedomain(s, window, 0);
    const double f_lo = s.carrier_hz - s.bandwidth_hz / 2.0;
    const double f_hi = s.carrier_hz + s.bandwidth_hz / 2.0;

    // Direction estimates from one chunk, then one beam per estimate.
    const auto chunks = bl::sim::chunk_and_convert(block, s.sample_rate, 4096, 512, f_lo,
                                                   f_hi);
    const auto& chunk = chunks.at(1);
    const int k = std::max(1, bl::doa::estimate_source_count(chunk.data));
    const auto r = bl::doa::sample_covariance(chunk.data);
    const double dl = s.array.pitch_m * chunk.f_center / s.sound_speed;
    const auto spec = bl::doa::music_spectrum(r, s.array, k, dl, {2.0, 2.0, 80.0});
    auto peaks = bl::doa::pick_peaks(spec, k);

    const auto taps = bl::dsp::bandpass_fir(f_lo, f_hi, s.sample_rate);
    bl::MatrixXcd analytic(block.rows(), block.cols());
    for (Eigen::Index m = 0; m < block.rows(); ++m) {
        std::vector<double> row(static_cast<std::size_t>(block.cols()));
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            row[static_cast<std::size_t>(t)] = block(m, t);
        const auto a = bl::dsp::analytic_signal(bl::dsp::filter_same(row, taps));
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            analytic(m, t) = a[static_cast<std::size_t>(t)];
    }
    std::vector<bl::VectorXcd> beams;
    for (const auto& p : peaks) {
        const auto tau = bl::ident::delays(s.array, p.azimuth, p.elevation, s.sound_speed);
        const auto y = bl::ident::das_beamform(analytic, tau, s.sample_rate, 0.0);
        beams.push_back(y.segment(512, sym));
    }
    const auto confidence = bl::ident::build_confidence(beams, pool, s.sample_rate);
    const auto assign = bl::ident::assign(confidence);

    std::ostringstream conf_csv;
    conf_csv << "beam";
    for (int root : roots) conf_csv << ",q" << root;
    conf_csv << "\n";
    for (Eigen::Index b = 0; b < confidence.rows(); ++b) {
        conf_csv << b;
        for (Eigen::Index c = 0; c < confidence.cols(); ++c)
            conf_csv << ',' << confidence(b, c);
        conf_csv << "\n";
    }
    emit(g, "confidence.csv", conf_csv.str());

    json out = json::array();
    for (std::size_t b = 0; b < beams.size(); ++b)
        out.push_back({{"beam_index", b},
                       {"candidate_id", roots[static_cast<std::size_t>(
                                            assign.mapping[b])]},
                       {"score", confidence(static_cast<Eigen::Index>(b),
                                            assign.mapping[b])}});
    emit_json(g, "assignment.json", out);
}

// ----------------------------------------------------------- calibrate

void cmd_calibrate_pnp(const GlobalArgs& g) {
    const auto cfg = load_config(g.config);
    std::vector<bl::loc::PnpObservation> obs;
    for (const auto& o : cfg.at("observations")) {
        bl::loc::PnpObservation p;
        const auto& t = o.at("tag_position");
        p.tag_position = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
        p.azimuth = bl::deg_to_rad(o.at("phi_deg").get<double>());
        p.elevation = bl::deg_to_rad(o.at("theta_deg").get<double>());
        obs.push_back(p);
    }
    bl::loc::SolverOptions opts;
    opts.starts = cfg.value("starts", opts.starts);
    if (g.seed) opts.seed = g.seed;
    const auto res = bl::loc::pnp_calibrate(obs, opts);
    emit_json(g, "pnp_pose.json",
              {{"pose", res.pose}, {"residual", res.residual},
               {"iterations", res.iterations}});
}

void cmd_calibrate_self(const GlobalArgs& g) {
    const auto cfg = load_config(g.config);
    std::vector<bl::loc::SelfCalObservation> pairs;
    double d12 = cfg.value("distance_m", 1.0);
    if (cfg.contains("pairs")) {
        for (const auto& o : cfg.at("pairs")) {
            bl::loc::SelfCalObservation p;
            const auto& a = o.at("d1");
            const auto& b = o.at("d2");
            p.d1 = Eigen::Vector3d{a.at(0).get<double>(), a.at(1).get<double>(),
                                   a.at(2).get<double>()}
                       .normalized();
            p.d2 = Eigen::Vector3d{b.at(0).get<double>(), b.at(1).get<double>(),
                                   b.at(2).get<double>()}
                       .normalized();
            pairs.push_back(p);
        }
    } else if (cfg.contains("synthetic")) {
        // Forward-generate a scene: known pose 2, moving source, optional noise.
        const auto& syn = cfg.at("synthetic");
        bl::loc::Pose pose2 = syn.at("pose2").get<bl::loc::Pose>();
        d12 = pose2.translation.norm();
        const int count = syn.value("samples", 50);
        const double noise_deg = syn.value("noise_deg", 0.0);
        bl::Rng rng(syn.value("seed", 1));
        for (int i = 0; i < count; ++i) {
            const bl::Vector3d src{rng.uniform(-2, 2), rng.uniform(-2, 2),
                                   rng.uniform(1, 3)};
            bl::loc::SelfCalObservation p;
            p.d1 = src.normalized();
            p.d2 = (pose2.rotation.transpose() * (src - pose2.translation)).normalized();
            if (noise_deg > 0.0) {
                auto jitter = [&](const bl::Vector3d& v) {
                    const bl::Vector3d axis =
                        bl::Vector3d{rng.gaussian(), rng.gaussian(), rng.gaussian()}
                            .normalized();
                    return bl::opt::rotation_exp(axis * bl::deg_to_rad(noise_deg) *
                                                 rng.gaussian()) *
                           v;
                };
                p.d1 = jitter(p.d1).normalized();
                p.d2 = jitter(p.d2).normalized();
            }
            pairs.push_back(p);
        }
    } else {
        throw bl::InvalidArgument("calibrate self: config needs 'pairs' or 'synthetic'");
    }

    bl::loc::SelfCalOptions opts;
    if (cfg.contains("prior")) {
        const auto& pr = cfg.at("prior");
        opts.direction_prior = Eigen::Vector3d{pr.at(0).get<double>(), pr.at(1).get<double>(),
                                               pr.at(2).get<double>()}
                                   .normalized();
    }
    opts.solver.starts = cfg.value("starts", opts.solver.starts);
    if (g.seed) opts.solver.seed = g.seed;
    const auto res = bl::loc::self_calibrate(pairs, d12, opts);
    emit_json(g, "self_calibration.json",
              {{"pose", res.pose2},
               {"residual", res.residual},
               {"iterations", res.iterations}});
}

// ----------------------------------------------------------- experiments

void cmd_experiment(const GlobalArgs& g, const std::string& kind) {
    const json cfg_json = load_config(g.config);
    const std::string cfg_text = cfg_json.dump();
    bl::harness::MetricsReport rep;
    std::uint64_t seed = 0;

    auto finish = [&](auto cfg) {
        if (g.seed) cfg.seed = g.seed;
        cfg.jobs = g.jobs;
        seed = cfg.seed;
        if constexpr (std::is_same_v<decltype(cfg), bl::harness::ResolutionConfig>)
            rep = bl::harness::run_resolution_sweep(cfg);
        else if constexpr (std::is_same_v<decltype(cfg), bl::harness::VarianceConfig>)
            rep = bl::harness::run_variance_sweep(cfg);
        else if constexpr (std::is_same_v<decltype(cfg), bl::harness::IdentificationConfig>)
            rep = bl::harness::run_identification_sweep(cfg);
        else
            rep = bl::harness::run_e2e_localization(cfg);
    };

    if (kind == "resolution") finish(cfg_json.get<bl::harness::ResolutionConfig>());
    else if (kind == "variance") finish(cfg_json.get<bl::harness::VarianceConfig>());
    else if (kind == "identification")
        finish(cfg_json.get<bl::harness::IdentificationConfig>());
    else if (kind == "e2e") finish(cfg_json.get<bl::harness::E2eConfig>());
    else throw bl::InvalidArgument("experiment: unknown kind " + kind);

    rep.summary["provenance"] = bl::harness::provenance(kind, cfg_text, seed);
    bl::harness::write_report(rep, g.out, g.format);
    for (const auto& [stem, _] : rep.tables)
        std::cout << (std::filesystem::path(g.out) / (stem + ".csv")).string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse-array acoustic angular localization toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalArgs g;
    app.add_option("--config", g.config, "JSON configuration / scene file");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--format", g.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--jobs", g.jobs, "worker threads for sweeps");

    // geometry
    auto* geo = app.add_subcommand("geometry", "generate/inspect layouts and co-arrays");
    std::string geo_action = "inspect", geo_kind = "URA";
    std::uint64_t geo_seed = 0;
    int geo_count = 0;
    geo->add_option("action", geo_action, "generate|inspect|coarray");
    geo->add_option("--kind", geo_kind, "geometry name");
    geo->add_option("--geo-seed", geo_seed, "seed for the Random kind");
    geo->add_option("--count", geo_count, "element count for the Random kind");

    // waveform
    auto* wav = app.add_subcommand("waveform", "generate/correlate/modulate sequences");
    std::string wav_action = "generate", wav_family = "zc";
    int wav_n = 13, wav_q = 1, wav_q2 = 2;
    bl::waveforms::PassbandConfig wav_cfg;
    wav->add_option("action", wav_action, "generate|correlate|modulate");
    wav->add_option("--family", wav_family);
    wav->add_option("--n", wav_n);
    wav->add_option("--q,--q1", wav_q);
    wav->add_option("--q2", wav_q2);
    wav->add_option("--fs", wav_cfg.sample_rate);
    wav->add_option("--carrier", wav_cfg.carrier_hz);
    wav->add_option("--bandwidth", wav_cfg.bandwidth_hz);
    wav->add_option("--symbol", wav_cfg.symbol_s);

    // simulate / doa / identify
    auto* simc = app.add_subcommand("simulate", "synthesize a scene to raw float32");
    double sim_duration = 1.0;
    simc->add_option("--duration", sim_duration, "seconds");

    auto* doac = app.add_subcommand("doa", "estimate directions from a scene file");
    std::string doa_mode = "snapshots";
    double doa_duration = 0.5;
    bool doa_spectrum = false;
    doac->add_option("--mode", doa_mode, "snapshots|timedomain");
    doac->add_option("--duration", doa_duration);
    doac->add_flag("--spectrum", doa_spectrum, "dump the pseudospectrum CSV");

    auto* identc = app.add_subcommand("identify", "beamform and identify scene sources");
    int ident_pool = 20;
    identc->add_option("--pool", ident_pool, "candidate pool size");

    auto* localizec = app.add_subcommand("localize", "full-chain localization scene");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "pose calibration");
    std::string cal_mode = "pnp";
    cal->add_option("mode", cal_mode, "pnp|self");

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a simulation sweep");
    std::string exp_kind = "resolution";
    exp->add_option("kind", exp_kind, "resolution|variance|identification|e2e");

    CLI11_PARSE(app, argc, argv);

    try {
        if (geo->parsed()) cmd_geometry(g, geo_action, geo_kind, geo_seed, geo_count);
        if (wav->parsed()) {
            if (wav_action == "generate") cmd_waveform_generate(g, wav_family, wav_n, wav_q);
            else if (wav_action == "correlate")
                cmd_waveform_correlate(g, wav_family, wav_n, wav_q, wav_q2);
            else if (wav_action == "modulate")
                cmd_waveform_modulate(g, wav_family, wav_n, wav_q, wav_cfg);
            else throw bl::InvalidArgument("waveform: unknown action " + wav_action);
        }
        if (simc->parsed()) cmd_simulate(g, sim_duration);
        if (doac->parsed()) cmd_doa(g, doa_mode, doa_duration, doa_spectrum);
        if (identc->parsed()) cmd_identify(g, ident_pool);
        if (localizec->parsed()) cmd_experiment(g, "e2e");
        if (cal->parsed()) {
            if (cal_mode == "pnp") cmd_calibrate_pnp(g);
            else if (cal_mode == "self") cmd_calibrate_self(g);
            else throw bl::InvalidArgument("calibrate: unknown mode " + cal_mode);
        }
        if (exp->parsed()) cmd_experiment(g, exp_kind);
    } catch (const std::exception& e) {
        json err{{"error", {{"type", typeid(e).name()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
