#pragma once

#include "beamloc/common.hpp"

namespace beamloc::dsp {

/// Forward DFT, any length (FFTW backend, plans cached internally).
std::vector<cplx> fft(std::span<const cplx> x);

/// Inverse DFT scaled by 1/N.
std::vector<cplx> ifft(std::span<const cplx> x);

std::vector<cplx> fft(std::span<const double> x);

/// One-sided analytic signal: negative-frequency bins zeroed, real part
/// equals the input.
std::vector<cplx> analytic_signal(std::span<const double> x);

/// Smallest 5-smooth length >= n (keeps FFTW away from large prime sizes).
std::size_t next_fast_len(std::size_t n);

/// Bin index -> signed frequency in Hz for an N-point DFT.
inline double bin_freq(std::size_t k, std::size_t n, double fs) {
    const auto ks = static_cast<std::ptrdiff_t>(k);
    const auto ns = static_cast<std::ptrdiff_t>(n);
    return fs * static_cast<double>(2 * ks < ns ? ks : ks - ns) / static_cast<double>(ns);
}

/// Exact fractional advance: y(t) = x(t + tau), applied as a linear phase
/// in the frequency domain (circular at the block edges).
std::vector<double> fractional_advance(std::span<const double> x, double tau_s, double fs);
std::vector<cplx> fractional_advance(std::span<const cplx> x, double tau_s, double fs,
                                     double carrier_hz = 0.0);

}  // namespace beamloc::dsp
