#pragma once

#include <optional>

#include "beamloc/common.hpp"

namespace beamloc::waveforms {

enum class Family { Zc, MsZc, ScZc };

Family parse_family(const std::string& name);
std::string family_name(Family family);

struct ZcParams {
    int n = 0;  // prime length of the base sequence
    int q = 0;  // root index, 1 <= q < n
    void validate() const;
};

/// Finite complex sequence of one of the ZC families. The base complex ZC
/// has length n; the real-valued derived families are ScZc (length n) and
/// MsZc (length 2n-1, from the Hermitian-mirrored spectrum).
struct Sequence {
    Family family = Family::Zc;
    ZcParams params;
    std::vector<cplx> samples;

    std::size_t size() const { return samples.size(); }
};

bool is_prime(int n);

/// x[k] = exp(-i pi q k(k+1) / n); unit modulus, ideal cyclic autocorrelation.
Sequence zc(ZcParams params);

/// Real sequence of length 2n-1 whose spectrum is the base ZC spectrum with
/// a Hermitian mirror image and a zeroed DC bin.
Sequence ms_zc(ZcParams params);

/// Real sequence cos(pi q k(k+1) / n) (the base ZC plus its conjugate).
Sequence sc_zc(ZcParams params);

/// R[tau] = sum_k a[k] * conj(b[(k+tau) mod n]); lengths must match.
std::vector<cplx> cyclic_correlation(std::span<const cplx> a, std::span<const cplx> b);

/// Cyclic correlation scaled by 1/sqrt(Ea * Eb).
std::vector<cplx> normalized_cyclic_correlation(std::span<const cplx> a,
                                                std::span<const cplx> b);

/// Passband parameters. Defaults match the deployed system: 0.5 s symbols,
/// 1.5 kHz bandwidth at an 18 kHz carrier, 48828 Hz sample rate.
struct PassbandConfig {
    double sample_rate = 48828.0;
    double carrier_hz = 18000.0;
    double bandwidth_hz = 1500.0;
    double symbol_s = 0.5;

    int symbol_samples() const;
    void validate() const;  // Nyquist: carrier + bandwidth/2 < sample_rate/2
};

struct PassbandSignal {
    std::vector<double> samples;  // one symbol period
    PassbandConfig cfg;
};

/// Chip-mapped complex baseband for one symbol period: sample-and-hold chips
/// at rate len(seq)/symbol_s (which the precondition keeps at or below the
/// configured bandwidth).
std::vector<cplx> baseband_chips(const Sequence& seq, const PassbandConfig& cfg);

/// IQ upconversion of the chip-mapped sequence to the carrier. The returned
/// buffer is exactly one symbol period; continuous emission tiles it.
PassbandSignal modulate(const Sequence& seq, const PassbandConfig& cfg);

/// Window [t0, t0+len) of the infinite tiled emission of one symbol.
std::vector<double> emission_window(const PassbandSignal& sig, std::int64_t t0,
                                    std::size_t len);

/// Spectral-centroid frequency of a chunk (positive-frequency bins, optionally
/// restricted to [band_lo, band_hi]). Chunk length must be >= 64.
double estimate_center_frequency(std::span<const cplx> chunk, double fs,
                                 std::optional<std::pair<double, double>> band = {});
double estimate_center_frequency(std::span<const double> chunk, double fs,
                                 std::optional<std::pair<double, double>> band = {});

/// First `count` usable root indices for a family. Real families use
/// 1..(n-1)/2 only: roots q and n-q produce identical real sequences.
std::vector<int> root_pool(int n, int count, Family family);

Sequence make_sequence(Family family, ZcParams params);

/// Largest base prime whose emitted symbol fits bandwidth * symbol_s chips.
int max_prime_for(Family family, const PassbandConfig& cfg);

/// Deployed defaults: sequence lengths pinned so every family emits
/// 733 chips per symbol under the default passband parameters.
inline constexpr int kDefaultZcPrime = 733;
inline constexpr int kDefaultMsBasePrime = 367;  // emits 2*367-1 = 733 chips

int default_prime(Family family);

}  // namespace beamloc::waveforms
