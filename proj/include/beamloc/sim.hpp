#pragma once

#include "beamloc/geometry.hpp"
#include "beamloc/waveforms.hpp"

namespace beamloc::sim {

/// Normalized direction cosines of a plane wave, tied to the physical angles
/// and the pitch/wavelength they were computed with.
struct DirectionCosines {
    double azimuth = 0.0;    // rad, [-pi, pi)
    double elevation = 0.0;  // rad from broadside, [0, pi/2)
    double wavelength_m = 0.0;
    double pitch_m = 0.0;
    double theta_bar = 0.0;  // (d/lambda) sin(el) cos(az)
    double phi_bar = 0.0;    // (d/lambda) sin(el) sin(az)

    static DirectionCosines from_angles(double azimuth, double elevation, double pitch_m,
                                        double wavelength_m);
};

/// Unit propagation vector (from the array toward the source);
/// elevation 0 is broadside (+z).
Vector3d unit_dir(double azimuth, double elevation);

struct WaveformSpec {
    std::string kind = "sc";  // zc | ms | sc | sine
    int n = waveforms::kDefaultZcPrime;
    int q = 1;

    bool is_sine() const { return kind == "sine"; }
    waveforms::Family family() const { return waveforms::parse_family(kind); }
};

struct SourceSpec {
    double azimuth = 0.0;   // rad
    double elevation = 0.0; // rad
    double power = 1.0;     // mean-square amplitude at the sensors
    WaveformSpec waveform;
};

struct Scenario {
    geometry::GridArray array;
    std::vector<SourceSpec> sources;
    double snr_db = 20.0;
    int snapshots = 4096;
    double sound_speed = 343.0;
    double sample_rate = 48828.0;
    double carrier_hz = 18000.0;
    double bandwidth_hz = 1500.0;
    double symbol_s = 0.5;
    std::uint64_t seed = 1;
    std::uint64_t noise_stream = 0;  // receivers sharing one emission timeline
                                     // use distinct noise streams

    double wavelength() const { return sound_speed / carrier_hz; }
    double d_over_lambda() const { return array.pitch_m / wavelength(); }
    waveforms::PassbandConfig passband() const {
        return {sample_rate, carrier_hz, bandwidth_hz, symbol_s};
    }
    void validate() const;
};

struct SnapshotMatrix {
    MatrixXcd data;  // sensors x snapshots
    geometry::GridArray array;
};

/// Entry n = exp(i 2 pi (m_x theta_bar + m_y phi_bar)).
VectorXcd steering_vector(const geometry::GridArray& array, double theta_bar, double phi_bar);
VectorXcd steering_vector(const geometry::GridArray& array, const DirectionCosines& dir);

/// Narrowband snapshot model: per-snapshot circular Gaussian source
/// amplitudes plus white noise sized from the configured SNR (noise power
/// relative to the summed source powers). Deterministic per seed.
SnapshotMatrix synth_snapshots(const Scenario& s);

/// Noise variance implied by the scenario SNR in the narrowband model.
double snapshot_noise_var(const Scenario& s);

/// Sampled passband block: every source's continuously tiled emission is
/// applied to each sensor with its exact geometric delay (frequency-domain
/// fractional delay), plus white noise. `t0` offsets the emission timeline so
/// consecutive windows of one scene stay phase-consistent. Deterministic per
/// (seed, t0).
MatrixXd synth_timedomain(const Scenario& s, int nsamples, std::int64_t t0 = 0);

/// White-noise standard deviation implied by the scenario SNR under the
/// in-band convention: SNR compares summed source power against noise power
/// falling inside the occupied band.
double timedomain_noise_sigma(const Scenario& s);

struct Chunk {
    MatrixXcd data;       // sensors x chunk samples, analytic
    double f_center = 0;  // spectral-centroid estimate for the chunk
    double t0_s = 0;      // chunk start time within the block
};

/// Band-pass filter (linear-phase FIR), analytic conversion, and chunking.
std::vector<Chunk> chunk_and_convert(const MatrixXd& block, double fs, int chunk_len, int hop,
                                     double f_lo, double f_hi);

}  // namespace beamloc::sim
