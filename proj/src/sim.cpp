#include "beamloc/sim.hpp"

#include <algorithm>

#include "beamloc/fft.hpp"
#include "beamloc/filters.hpp"

namespace beamloc::sim {

DirectionCosines DirectionCosines::from_angles(double azimuth, double elevation,
                                               double pitch_m, double wavelength_m) {
    if (elevation < 0.0 || elevation >= pi / 2.0)
        throw InvalidArgument("elevation must lie in [0, pi/2)");
    if (pitch_m <= 0.0 || wavelength_m <= 0.0)
        throw InvalidArgument("pitch and wavelength must be positive");
    DirectionCosines d;
    d.azimuth = azimuth;
    d.elevation = elevation;
    d.pitch_m = pitch_m;
    d.wavelength_m = wavelength_m;
    const double r = pitch_m / wavelength_m;
    d.theta_bar = r * std::sin(elevation) * std::cos(azimuth);
    d.phi_bar = r * std::sin(elevation) * std::sin(azimuth);
    return d;
}

Vector3d unit_dir(double azimuth, double elevation) {
    return {std::sin(elevation) * std::cos(azimuth), std::sin(elevation) * std::sin(azimuth),
            std::cos(elevation)};
}

void Scenario::validate() const {
    array.validate();
    if (!std::isfinite(snr_db)) throw InvalidArgument("snr must be finite");
    if (sound_speed <= 0.0) throw InvalidArgument("sound speed must be > 0");
    if (snapshots < 1) throw InvalidArgument("snapshot count must be >= 1");
    if (sample_rate <= 0.0) throw InvalidArgument("sample rate must be > 0");
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& s = sources[i];
        if (s.elevation < 0.0 || s.elevation >= pi / 2.0)
            throw InvalidArgument("source elevation out of range");
        if (s.power <= 0.0) throw InvalidArgument("source power must be > 0");
        for (std::size_t k = i + 1; k < sources.size(); ++k) {
            const double sep = std::acos(std::clamp(
                unit_dir(s.azimuth, s.elevation)
                    .dot(unit_dir(sources[k].azimuth, sources[k].elevation)),
                -1.0, 1.0));
            if (sep < 1e-9) throw InvalidArgument("duplicate source directions");
        }
    }
}

VectorXcd steering_vector(const geometry::GridArray& array, double theta_bar, double phi_bar) {
    VectorXcd v(static_cast<Eigen::Index>(array.size()));
    for (Eigen::Index n = 0; n < v.size(); ++n) {
        const auto& e = array.elements[static_cast<std::size_t>(n)];
        v[n] = std::polar(1.0, 2.0 * pi * (e.x * theta_bar + e.y * phi_bar));
    }
    return v;
}

VectorXcd steering_vector(const geometry::GridArray& array, const DirectionCosines& dir) {
    return steering_vector(array, dir.theta_bar, dir.phi_bar);
}

double snapshot_noise_var(const Scenario& s) {
    double total = 0.0;
    for (const auto& src : s.sources) total += src.power;
    if (total == 0.0) total = 1.0;  // noise-only scenes: unit reference
    return total / db_to_pow(s.snr_db);
}

SnapshotMatrix synth_snapshots(const Scenario& s) {
    s.validate();
    const auto m = static_cast<Eigen::Index>(s.array.size());
    const Eigen::Index n = s.snapshots;
    const double r = s.d_over_lambda();

    MatrixXcd steer(m, static_cast<Eigen::Index>(s.sources.size()));
    for (std::size_t k = 0; k < s.sources.size(); ++k) {
        const auto d = DirectionCosines::from_angles(s.sources[k].azimuth,
                                                     s.sources[k].elevation, r, 1.0);
        steer.col(static_cast<Eigen::Index>(k)) = steering_vector(s.array, d);
    }

    const double sigma = std::sqrt(snapshot_noise_var(s));
    Rng rng(s.seed);
    MatrixXcd x(m, n);
    for (Eigen::Index t = 0; t < n; ++t) {
        VectorXcd col = VectorXcd::Zero(m);
        for (std::size_t k = 0; k < s.sources.size(); ++k) {
            const cplx amp = std::sqrt(s.sources[k].power) * rng.cgaussian();
            col += amp * steer.col(static_cast<Eigen::Index>(k));
        }
        for (Eigen::Index i = 0; i < m; ++i) col[i] += sigma * rng.cgaussian();
        x.col(t) = col;
    }
    return {std::move(x), s.array};
}

namespace {

// Fraction of a waveform's power inside the nominal band; rectangular chips
// leak part of theirs into the sinc skirts.
double inband_fraction(const Scenario& s, const WaveformSpec& w);

}  // namespace

double timedomain_noise_sigma(const Scenario& s) {
    // In-band convention: the configured SNR compares in-band signal power
    // against the noise power falling into the same band.
    double inband_signal = 0.0;
    for (const auto& src : s.sources) inband_signal += src.power * inband_fraction(s, src.waveform);
    if (inband_signal == 0.0) inband_signal = 1.0;
    const double inband_noise = inband_signal / db_to_pow(s.snr_db);
    return std::sqrt(inband_noise * (s.sample_rate / 2.0) / s.bandwidth_hz);
}

namespace {

// One symbol period of the emitted waveform, normalized to unit mean square
// so the scenario source powers are comparable across families.
std::vector<double> emitted_symbol(const Scenario& s, const WaveformSpec& w) {
    const auto cfg = s.passband();
    std::vector<double> sym;
    if (w.is_sine()) {
        sym.resize(static_cast<std::size_t>(cfg.symbol_samples()));
        const double omega = 2.0 * pi * cfg.carrier_hz / cfg.sample_rate;
        for (std::size_t t = 0; t < sym.size(); ++t)
            sym[t] = std::cos(omega * static_cast<double>(t));
    } else {
        const auto seq = waveforms::make_sequence(w.family(), {w.n, w.q});
        sym = waveforms::modulate(seq, cfg).samples;
    }
    double ms = 0.0;
    for (double v : sym) ms += v * v;
    ms /= static_cast<double>(sym.size());
    if (ms <= 0.0) throw InvalidArgument("waveform has zero power");
    const double g = 1.0 / std::sqrt(ms);
    for (double& v : sym) v *= g;
    return sym;
}

double inband_fraction(const Scenario& s, const WaveformSpec& w) {
    if (w.is_sine()) return 1.0;
    const auto sym = emitted_symbol(s, w);
    const auto spec = dsp::fft(std::span<const double>{sym});
    const double lo = s.carrier_hz - s.bandwidth_hz / 2.0;
    const double hi = s.carrier_hz + s.bandwidth_hz / 2.0;
    double inband = 0.0, total = 0.0;
    for (std::size_t k = 0; 2 * k <= spec.size(); ++k) {
        const double f = s.sample_rate * static_cast<double>(k) /
                         static_cast<double>(spec.size());
        const double p = std::norm(spec[k]);
        total += p;
        if (f >= lo && f <= hi) inband += p;
    }
    return total > 0.0 ? inband / total : 1.0;
}

}  // namespace

MatrixXd synth_timedomain(const Scenario& s, int nsamples, std::int64_t t0) {
    s.validate();
    if (nsamples < 1) throw InvalidArgument("synth_timedomain: nsamples must be >= 1");
    const auto m = static_cast<Eigen::Index>(s.array.size());
    const MatrixXd pos = s.array.positions();

    // Guard band for the circular fractional delay.
    double max_tau = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) max_tau = std::max(max_tau, pos.row(i).norm());
    max_tau /= s.sound_speed;
    const int pad = static_cast<int>(std::ceil(max_tau * s.sample_rate)) + 32;
    const std::size_t win = dsp::next_fast_len(static_cast<std::size_t>(nsamples) +
                                               2 * static_cast<std::size_t>(pad));

    MatrixXd block = MatrixXd::Zero(m, nsamples);
    for (std::size_t k = 0; k < s.sources.size(); ++k) {
        const auto& src = s.sources[k];
        const auto sym = emitted_symbol(s, src.waveform);
        Rng src_rng(Rng::derive(s.seed, 0x10000 + k));
        const auto offset = static_cast<std::int64_t>(
            src_rng.uniform() * static_cast<double>(sym.size()));

        waveforms::PassbandSignal sig{sym, s.passband()};
        auto base = waveforms::emission_window(sig, t0 + offset - pad, win);
        const double amp = std::sqrt(src.power);
        for (double& v : base) v *= amp;

        const Vector3d u = unit_dir(src.azimuth, src.elevation);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double tau = pos.row(i).dot(u) / s.sound_speed;
            auto delayed = dsp::fractional_advance(base, tau, s.sample_rate);
            for (int t = 0; t < nsamples; ++t)
                block(i, t) += delayed[static_cast<std::size_t>(t + pad)];
        }
    }

    const double sigma = timedomain_noise_sigma(s);
    Rng noise_rng(Rng::derive(Rng::derive(s.seed, 0x20000 + s.noise_stream),
                              static_cast<std::uint64_t>(t0)));
    for (Eigen::Index i = 0; i < m; ++i)
        for (int t = 0; t < nsamples; ++t) block(i, t) += sigma * noise_rng.gaussian();
    return block;
}

std::vector<Chunk> chunk_and_convert(const MatrixXd& block, double fs, int chunk_len, int hop,
                                     double f_lo, double f_hi) {
    if (!(0.0 <= f_lo && f_lo < f_hi && f_hi <= fs / 2.0))
        throw InvalidArgument("chunk_and_convert: empty or invalid band");
    const auto m = block.rows();
    const auto total = static_cast<int>(block.cols());
    if (chunk_len < 64 || chunk_len > total)
        throw InvalidArgument("chunk_and_convert: chunk length out of range");
    if (hop < 1) throw InvalidArgument("chunk_and_convert: hop must be >= 1");

    // Band-pass the whole block once; the analytic conversion runs per chunk
    // so every chunk spectrum is exactly one-sided.
    const auto taps = dsp::bandpass_fir(f_lo, f_hi, fs);
    MatrixXd filtered(m, total);
    for (Eigen::Index i = 0; i < m; ++i) {
        std::vector<double> row(static_cast<std::size_t>(total));
        for (int t = 0; t < total; ++t) row[static_cast<std::size_t>(t)] = block(i, t);
        const auto f = dsp::filter_same(row, taps);
        for (int t = 0; t < total; ++t) filtered(i, t) = f[static_cast<std::size_t>(t)];
    }

    std::vector<Chunk> chunks;
    std::vector<double> row(static_cast<std::size_t>(chunk_len));
    const int segments = 4;  // Welch averaging flattens within-chunk ripple
    const int seg_len = chunk_len / segments;
    for (int start = 0; start + chunk_len <= total; start += hop) {
        Chunk c;
        c.data.resize(m, chunk_len);
        c.t0_s = start / fs;
        // Centroid from Welch-averaged spectra of a few channels; enough
        // segments and bins average out both noise and waveform ripple.
        const int probes = static_cast<int>(std::min<Eigen::Index>(4, m));
        std::vector<double> mean_spec(static_cast<std::size_t>(seg_len), 0.0);
        std::vector<cplx> seg(static_cast<std::size_t>(seg_len));
        for (Eigen::Index i = 0; i < m; ++i) {
            for (int t = 0; t < chunk_len; ++t)
                row[static_cast<std::size_t>(t)] = filtered(i, start + t);
            const auto a = dsp::analytic_signal(row);
            for (int t = 0; t < chunk_len; ++t) c.data(i, t) = a[static_cast<std::size_t>(t)];
            if (i < probes) {
                for (int sidx = 0; sidx < segments; ++sidx) {
                    for (int t = 0; t < seg_len; ++t)
                        seg[static_cast<std::size_t>(t)] = a[static_cast<std::size_t>(
                            sidx * seg_len + t)];
                    const auto spec = dsp::fft(std::span<const cplx>{seg});
                    for (std::size_t k = 0; k < spec.size(); ++k)
                        mean_spec[k] += std::norm(spec[k]);
                }
            }
        }
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; 2 * k <= mean_spec.size(); ++k) {
            const double f = fs * static_cast<double>(k) / static_cast<double>(mean_spec.size());
            if (f < f_lo || f > f_hi) continue;
            num += f * mean_spec[k];
            den += mean_spec[k];
        }
        c.f_center = den > 0.0 ? num / den : 0.5 * (f_lo + f_hi);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace beamloc::sim
