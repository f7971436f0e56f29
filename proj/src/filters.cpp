#include "beamloc/filters.hpp"

#include <algorithm>

#include "beamloc/fft.hpp"

namespace beamloc::dsp {

namespace {

// Zeroth-order modified Bessel function of the first kind (power series).
double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 64; ++k) {
        term *= q / (static_cast<double>(k) * static_cast<double>(k));
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return sum;
}

}  // namespace

std::vector<double> bandpass_fir(double f_lo, double f_hi, double fs,
                                 double atten_db, double trans_hz) {
    if (!(0.0 <= f_lo && f_lo < f_hi && f_hi <= fs / 2.0))
        throw InvalidArgument("bandpass_fir: band must satisfy 0 <= f_lo < f_hi <= fs/2");
    if (trans_hz <= 0.0) throw InvalidArgument("bandpass_fir: transition width must be > 0");

    // Kaiser design rules.
    const double beta = atten_db > 50.0  ? 0.1102 * (atten_db - 8.7)
                        : atten_db > 21.0 ? 0.5842 * std::pow(atten_db - 21.0, 0.4) +
                                                0.07886 * (atten_db - 21.0)
                                          : 0.0;
    const double dw = 2.0 * pi * trans_hz / fs;
    int ntaps = static_cast<int>(std::ceil((atten_db - 7.95) / (2.285 * dw))) + 1;
    if (ntaps % 2 == 0) ++ntaps;

    const int half = (ntaps - 1) / 2;
    const double w1 = 2.0 * pi * f_lo / fs;
    const double w2 = 2.0 * pi * f_hi / fs;
    const double i0b = bessel_i0(beta);

    std::vector<double> taps(static_cast<std::size_t>(ntaps));
    for (int i = 0; i < ntaps; ++i) {
        const int m = i - half;
        const double ideal =
            m == 0 ? (w2 - w1) / pi
                   : (std::sin(w2 * m) - std::sin(w1 * m)) / (pi * m);
        const double r = static_cast<double>(m) / half;
        const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
        taps[static_cast<std::size_t>(i)] = ideal * window;
    }
    return taps;
}

std::vector<double> filter_same(std::span<const double> x, std::span<const double> taps) {
    if (x.empty() || taps.empty()) throw InvalidArgument("filter_same: empty input");
    const std::size_t n = x.size(), nt = taps.size();
    const std::size_t nfft = std::bit_ceil(n + nt);
    std::vector<cplx> xa(nfft, 0.0), ha(nfft, 0.0);
    for (std::size_t i = 0; i < n; ++i) xa[i] = x[i];
    for (std::size_t i = 0; i < nt; ++i) ha[i] = taps[i];
    auto xf = fft(std::span<const cplx>{xa});
    auto hf = fft(std::span<const cplx>{ha});
    for (std::size_t k = 0; k < nfft; ++k) xf[k] *= hf[k];
    auto y = ifft(xf);
    const std::size_t delay = (nt - 1) / 2;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i + delay].real();
    return out;
}

cplx fir_response(std::span<const double> taps, double f_hz, double fs) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i)
        acc += taps[i] * std::exp(-j1i * (2.0 * pi * f_hz * static_cast<double>(i) / fs));
    return acc;
}

}  // namespace beamloc::dsp
