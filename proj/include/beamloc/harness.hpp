#pragma once

#include <filesystem>
#include <functional>

#include "beamloc/ident.hpp"
#include "beamloc/serialize.hpp"

namespace beamloc::harness {

inline constexpr const char* kVersion = "0.1.0";

/// Percentile with linear interpolation between closest ranks; q in [0,100].
double percentile(std::vector<double> values, double q);

/// Run fn(0..n-1) on `jobs` worker threads. Callers index into preallocated
/// storage, so results do not depend on scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

/// Random directions with a minimum pairwise spherical separation.
std::vector<std::pair<double, double>> sample_directions(Rng& rng, int count,
                                                         double min_sep_deg,
                                                         double el_max_deg);

/// Directions clustered so the minimum pairwise separation sits close to the
/// requested value (separation sweeps).
std::vector<std::pair<double, double>> sample_directions_at_separation(Rng& rng, int count,
                                                                       double sep_deg,
                                                                       double el_max_deg);

/// Greedy-free optimal matching of estimates to ground-truth directions;
/// returns the per-truth spherical error (infinity where unmatched).
std::vector<double> match_errors(const std::vector<doa::DoaEstimate>& estimates,
                                 const std::vector<std::pair<double, double>>& truths);

struct MetricsReport {
    std::string kind;
    json summary;
    std::vector<std::pair<std::string, std::string>> tables;  // stem -> csv
};

/// Writes <stem>.csv tables and (unless format is "csv") <kind>_summary.json.
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir,
                  const std::string& format = "json");

// ------------------------------------------------------------- experiments

struct ResolutionConfig {
    std::vector<std::string> geometries{"Nested", "Billboard", "Open-Box", "Coprime",
                                        "Random"};
    std::vector<int> source_counts{20};
    std::vector<double> snrs_db{20.0};
    int trials = 200;
    std::uint64_t seed = 1;
    double min_sep_deg = 15.0;
    double el_max_deg = 60.0;
    int snapshots = 4096;
    double success_deg = 10.0;  // spherical resolution criterion
    int window = 0;             // smoothing window override (0 = default)
    int jobs = 1;
};

struct VarianceConfig {
    std::vector<std::string> families{"sine", "zc", "sc", "ms"};
    std::vector<double> snrs_db{-10.0, 0.0, 10.0, 20.0};
    double elevation_deg = 60.0;
    double azimuth_deg = 25.0;
    int root = 1;  // slow sweep: partial-symbol windows see a band slice
    int trials = 200;
    int chunk = 4096;
    std::uint64_t seed = 1;
    int jobs = 1;
};

struct IdentificationConfig {
    std::string family = "sc";
    int sources = 15;
    int pool = 20;
    std::vector<double> snrs_db{-20.0, -10.0, 0.0, 10.0};
    std::vector<double> separations_deg{2.0, 5.0, 10.0};
    double separation_snr_db = -20.0;
    double wide_sep_deg = 25.0;
    int trials = 200;
    std::uint64_t seed = 1;
    int decimation = 6;  // complex-baseband working rate = fs / decimation
    int jobs = 1;
};

struct E2eConfig {
    std::vector<std::string> geometries{"URA"};
    std::vector<loc::Pose> device_poses;  // empty = built-in two-device layout
    int static_tags = 0;
    double duration_s = 30.0;
    double chunk_rate_hz = 20.0;
    double snr_db = 10.0;
    std::vector<double> limits_mm{100.0, 50.0, 10.0, 1.0};
    double default_limit_mm = 100.0;
    double ident_every_s = 1.0;
    int chunk = 4096;
    bool exact_doa = false;  // bypass estimation: rays from true directions
    std::uint64_t seed = 1;
    int jobs = 1;
};

void from_json(const json& j, ResolutionConfig& c);
void from_json(const json& j, VarianceConfig& c);
void from_json(const json& j, IdentificationConfig& c);
void from_json(const json& j, E2eConfig& c);

/// Fraction of trials in which every source is matched within the criterion,
/// per (geometry, K, SNR). Sparse geometries run spatial-smoothing MUSIC.
MetricsReport run_resolution_sweep(const ResolutionConfig& cfg);

/// Spherical variance of single-source estimates from partial-symbol chunks,
/// per (family, SNR).
MetricsReport run_variance_sweep(const VarianceConfig& cfg);

/// Fraction of trials with a fully correct beam-to-candidate assignment over
/// an SNR sweep (wide separation) and a separation sweep (fixed SNR).
MetricsReport run_identification_sweep(const IdentificationConfig& cfg);

/// Full chain on a synthetic two-array scene: chunked DoA, identification,
/// triangulation, divergence filtering; per-geometry accuracy and the
/// divergence-limit trade-off.
MetricsReport run_e2e_localization(const E2eConfig& cfg);

/// Smoothed-waypoint trajectory (about 1 m/s median speed) sampled at `rate`.
std::vector<Vector3d> smooth_trajectory(std::uint64_t seed, double duration_s, double rate_hz);

json provenance(const std::string& kind, const std::string& config_text, std::uint64_t seed);

}  // namespace beamloc::harness
