#include "beamloc/waveforms.hpp"

#include <algorithm>
#include <numeric>

#include "beamloc/fft.hpp"

namespace beamloc::waveforms {

Family parse_family(const std::string& name) {
    std::string s;
    for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::erase_if(s, [](char c) { return c == '-' || c == '_'; });
    if (s == "zc") return Family::Zc;
    if (s == "mszc" || s == "ms") return Family::MsZc;
    if (s == "sczc" || s == "sc") return Family::ScZc;
    throw InvalidArgument("unknown sequence family: " + name);
}

std::string family_name(Family family) {
    switch (family) {
        case Family::Zc: return "ZC";
        case Family::MsZc: return "MS-ZC";
        case Family::ScZc: return "SC-ZC";
    }
    throw InvalidArgument("bad family");
}

bool is_prime(int n) {
    if (n < 2) return false;
    for (int d = 2; static_cast<long>(d) * d <= n; ++d)
        if (n % d == 0) return false;
    return true;
}

void ZcParams::validate() const {
    if (!is_prime(n) || n < 3) throw InvalidArgument("sequence length must be an odd prime");
    if (q < 1 || q >= n) throw InvalidArgument("root index must satisfy 1 <= q < n");
    if (std::gcd(q, n) != 1) throw InvalidArgument("root index must be coprime with n");
}

namespace {

// Phase exponent q*k*(k+1) reduced mod 2n (exp(-i pi m / n) has period 2n).
long phase_index(int n, int q, long k) {
    const long two_n = 2L * n;
    return (q % two_n) * ((k * (k + 1)) % two_n) % two_n;
}

}  // namespace

Sequence zc(ZcParams params) {
    params.validate();
    Sequence s{Family::Zc, params, {}};
    s.samples.resize(static_cast<std::size_t>(params.n));
    for (long k = 0; k < params.n; ++k) {
        const double phase = -pi * static_cast<double>(phase_index(params.n, params.q, k)) /
                             params.n;
        s.samples[static_cast<std::size_t>(k)] = std::polar(1.0, phase);
    }
    return s;
}

Sequence ms_zc(ZcParams params) {
    params.validate();
    const auto base = zc(params);
    const auto spectrum = dsp::fft(std::span<const cplx>{base.samples});
    const std::size_t n = static_cast<std::size_t>(params.n);
    const std::size_t len = 2 * n - 1;

    std::vector<cplx> mirrored(len, 0.0);
    for (std::size_t k = 1; k < n; ++k) mirrored[k] = spectrum[k];
    for (std::size_t k = n; k <= 2 * n - 2; ++k) mirrored[k] = std::conj(spectrum[len - k]);

    auto x = dsp::ifft(mirrored);
    Sequence s{Family::MsZc, params, {}};
    s.samples.resize(len);
    for (std::size_t k = 0; k < len; ++k) {
        if (std::abs(x[k].imag()) > 1e-9)
            throw NumericalError("ms_zc: spectrum mirror did not produce a real sequence");
        s.samples[k] = x[k].real();
    }
    return s;
}

Sequence sc_zc(ZcParams params) {
    params.validate();
    Sequence s{Family::ScZc, params, {}};
    s.samples.resize(static_cast<std::size_t>(params.n));
    for (long k = 0; k < params.n; ++k) {
        const double phase = pi * static_cast<double>(phase_index(params.n, params.q, k)) /
                             params.n;
        s.samples[static_cast<std::size_t>(k)] = std::cos(phase);
    }
    return s;
}

std::vector<cplx> cyclic_correlation(std::span<const cplx> a, std::span<const cplx> b) {
    if (a.size() != b.size()) throw InvalidArgument("cyclic_correlation: length mismatch");
    if (a.empty()) throw InvalidArgument("cyclic_correlation: empty input");
    const std::size_t n = a.size();
    auto fa = dsp::fft(a);
    auto fb = dsp::fft(b);
    for (std::size_t k = 0; k < n; ++k) fa[k] *= std::conj(fb[k]);
    auto r = dsp::ifft(fa);
    // r[m] = sum_k a[k] conj(b[(k-m) mod n]); requested lag convention is
    // b shifted by +tau, i.e. the cyclically reversed order.
    std::vector<cplx> out(n);
    for (std::size_t tau = 0; tau < n; ++tau) out[tau] = r[(n - tau) % n];
    return out;
}

std::vector<cplx> normalized_cyclic_correlation(std::span<const cplx> a,
                                                std::span<const cplx> b) {
    double ea = 0.0, eb = 0.0;
    for (const auto& v : a) ea += std::norm(v);
    for (const auto& v : b) eb += std::norm(v);
    if (ea == 0.0 || eb == 0.0)
        throw InvalidArgument("normalized_cyclic_correlation: zero-energy input");
    auto r = cyclic_correlation(a, b);
    const double s = 1.0 / std::sqrt(ea * eb);
    for (auto& v : r) v *= s;
    return r;
}

int PassbandConfig::symbol_samples() const {
    return static_cast<int>(std::lround(sample_rate * symbol_s));
}

void PassbandConfig::validate() const {
    if (sample_rate <= 0 || symbol_s <= 0 || bandwidth_hz <= 0 || carrier_hz < 0)
        throw InvalidArgument("passband parameters must be positive");
    if (carrier_hz + bandwidth_hz / 2.0 >= sample_rate / 2.0)
        throw InvalidArgument("passband violates Nyquist: carrier + B/2 >= fs/2");
}

std::vector<cplx> baseband_chips(const Sequence& seq, const PassbandConfig& cfg) {
    cfg.validate();
    const auto chips = static_cast<double>(seq.size());
    if (chips > cfg.bandwidth_hz * cfg.symbol_s + 1e-9)
        throw InvalidArgument("sequence does not fit: need symbol_s * bandwidth >= chips");
    const int ns = cfg.symbol_samples();
    std::vector<cplx> b(static_cast<std::size_t>(ns));
    for (int t = 0; t < ns; ++t) {
        auto c = static_cast<std::size_t>(static_cast<double>(t) * chips / ns);
        if (c >= seq.size()) c = seq.size() - 1;
        b[static_cast<std::size_t>(t)] = seq.samples[c];
    }
    return b;
}

PassbandSignal modulate(const Sequence& seq, const PassbandConfig& cfg) {
    const auto b = baseband_chips(seq, cfg);
    PassbandSignal sig;
    sig.cfg = cfg;
    sig.samples.resize(b.size());
    const double w = 2.0 * pi * cfg.carrier_hz / cfg.sample_rate;
    for (std::size_t t = 0; t < b.size(); ++t) {
        const cplx c = std::polar(1.0, w * static_cast<double>(t));
        sig.samples[t] = (b[t] * c).real();
    }
    return sig;
}

std::vector<double> emission_window(const PassbandSignal& sig, std::int64_t t0,
                                    std::size_t len) {
    if (sig.samples.empty()) throw InvalidArgument("emission_window: empty symbol");
    const auto period = static_cast<std::int64_t>(sig.samples.size());
    std::vector<double> out(len);
    for (std::size_t i = 0; i < len; ++i) {
        const std::int64_t t = ((t0 + static_cast<std::int64_t>(i)) % period + period) % period;
        out[i] = sig.samples[static_cast<std::size_t>(t)];
    }
    return out;
}

namespace {

double centroid(std::span<const cplx> spectrum, double fs,
                std::optional<std::pair<double, double>> band) {
    const std::size_t n = spectrum.size();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; 2 * k <= n; ++k) {
        const double f = fs * static_cast<double>(k) / static_cast<double>(n);
        if (band && (f < band->first || f > band->second)) continue;
        const double p = std::norm(spectrum[k]);
        num += f * p;
        den += p;
    }
    if (den <= 0.0) throw InvalidArgument("estimate_center_frequency: no in-band energy");
    return num / den;
}

}  // namespace

double estimate_center_frequency(std::span<const cplx> chunk, double fs,
                                 std::optional<std::pair<double, double>> band) {
    if (chunk.size() < 64) throw InvalidArgument("estimate_center_frequency: chunk too short");
    return centroid(dsp::fft(chunk), fs, band);
}

double estimate_center_frequency(std::span<const double> chunk, double fs,
                                 std::optional<std::pair<double, double>> band) {
    if (chunk.size() < 64) throw InvalidArgument("estimate_center_frequency: chunk too short");
    return centroid(dsp::fft(chunk), fs, band);
}

std::vector<int> root_pool(int n, int count, Family family) {
    if (!is_prime(n)) throw InvalidArgument("root_pool: n must be prime");
    const int limit = family == Family::Zc ? n - 1 : (n - 1) / 2;
    if (count < 1 || count > limit)
        throw InvalidArgument("root_pool: requested more roots than the family supports");
    std::vector<int> roots(static_cast<std::size_t>(count));
    std::iota(roots.begin(), roots.end(), 1);
    return roots;
}

Sequence make_sequence(Family family, ZcParams params) {
    switch (family) {
        case Family::Zc: return zc(params);
        case Family::MsZc: return ms_zc(params);
        case Family::ScZc: return sc_zc(params);
    }
    throw InvalidArgument("bad family");
}

int max_prime_for(Family family, const PassbandConfig& cfg) {
    const double budget = cfg.bandwidth_hz * cfg.symbol_s;
    int best = 0;
    for (int p = 3; ; p += 2) {
        const double chips = family == Family::MsZc ? 2.0 * p - 1.0 : static_cast<double>(p);
        if (chips > budget) break;
        if (is_prime(p)) best = p;
    }
    if (best == 0) throw InvalidArgument("no prime fits the bandwidth-time budget");
    return best;
}

int default_prime(Family family) {
    return family == Family::MsZc ? kDefaultMsBasePrime : kDefaultZcPrime;
}

}  // namespace beamloc::waveforms
