#pragma once

#include "beamloc/common.hpp"

namespace beamloc::dsp {

/// Linear-phase band-pass FIR (Kaiser-windowed sinc). Tap count follows
/// from the requested stopband attenuation and transition width; always odd
/// so the group delay is an integer number of samples.
std::vector<double> bandpass_fir(double f_lo, double f_hi, double fs,
                                 double atten_db = 60.0, double trans_hz = 500.0);

/// FIR filtering with group-delay compensation: output has the same length
/// and time alignment as the input (edges see zero padding).
std::vector<double> filter_same(std::span<const double> x, std::span<const double> taps);

/// Complex frequency response of a FIR at one frequency.
cplx fir_response(std::span<const double> taps, double f_hz, double fs);

}  // namespace beamloc::dsp
