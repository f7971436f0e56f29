#pragma once

#include "beamloc/doa.hpp"

namespace beamloc::ident {

/// Per-sensor plane-wave time shifts tau_m = p_m . u / c (seconds). Positive
/// values mean the wavefront reaches that sensor earlier.
VectorXd delays(const geometry::GridArray& array, double azimuth, double elevation,
                double sound_speed);

/// Delay-and-sum beamformer: every channel is phase-compensated by its exact
/// fractional delay in the frequency domain and the channels are summed.
/// A focused source gains a factor M over a single channel. For complex
/// blocks whose spectrum was shifted to baseband, pass the removed carrier so
/// the compensation stays exact.
VectorXd das_beamform(const MatrixXd& block, const VectorXd& tau, double fs);
VectorXcd das_beamform(const MatrixXcd& block, const VectorXd& tau, double fs,
                       double carrier_hz = 0.0);

/// Candidate sequences prepared for correlation: chip-shaped baseband
/// templates of one symbol period each.
struct CandidatePool {
    std::vector<waveforms::Sequence> sequences;
    waveforms::PassbandConfig cfg;
    std::vector<std::vector<cplx>> templates;
    std::vector<double> template_energy;

    int symbol_samples() const { return cfg.symbol_samples(); }
    std::size_t size() const { return sequences.size(); }
};

CandidatePool make_pool(waveforms::Family family, int n, std::span<const int> roots,
                        const waveforms::PassbandConfig& cfg);

/// Per-candidate peak of the normalized cyclic correlation magnitude over one
/// symbol period. `y` is complex baseband (one symbol is used; it must hold at
/// least one full symbol). The optional lag window restricts the search.
VectorXd correlate_candidates(std::span<const cplx> y, const CandidatePool& pool,
                              std::optional<std::pair<int, int>> lag_range = {});

/// Correlation confidence for K beamformed windows: row k holds the candidate
/// scores of beam k. Beams are analytic passband windows; each is downmixed by
/// its own spectral-centroid estimate before correlation.
MatrixXd build_confidence(const std::vector<VectorXcd>& beams, const CandidatePool& pool,
                          double fs);

struct Assignment {
    std::vector<int> mapping;  // beam row -> candidate column, injective
    double score = 0.0;        // sum of assigned confidences
};

/// Maximum-score injective assignment (shortest augmenting path solver,
/// O(n^3)); among equal-score optima the lexicographically smallest column
/// choice per row is returned.
Assignment assign(const MatrixXd& confidence);

}  // namespace beamloc::ident
