#include "beamloc/ident.hpp"

#include <algorithm>
#include <limits>

#include "beamloc/fft.hpp"

namespace beamloc::ident {

VectorXd delays(const geometry::GridArray& array, double azimuth, double elevation,
                double sound_speed) {
    if (sound_speed <= 0.0) throw InvalidArgument("delays: sound speed must be > 0");
    const MatrixXd pos = array.positions();
    const Vector3d u = sim::unit_dir(azimuth, elevation);
    return pos * u / sound_speed;
}

VectorXd das_beamform(const MatrixXd& block, const VectorXd& tau, double fs) {
    if (block.rows() != tau.size()) throw InvalidArgument("das: one delay per channel");
    const double span = static_cast<double>(block.cols()) / fs;
    if (tau.cwiseAbs().maxCoeff() >= span)
        throw InvalidArgument("das: delay exceeds the block length");
    std::vector<double> ch(static_cast<std::size_t>(block.cols()));
    VectorXd y = VectorXd::Zero(block.cols());
    for (Eigen::Index m = 0; m < block.rows(); ++m) {
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            ch[static_cast<std::size_t>(t)] = block(m, t);
        const auto aligned = dsp::fractional_advance(ch, -tau[m], fs);
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            y[t] += aligned[static_cast<std::size_t>(t)];
    }
    return y;
}

VectorXcd das_beamform(const MatrixXcd& block, const VectorXd& tau, double fs,
                       double carrier_hz) {
    if (block.rows() != tau.size()) throw InvalidArgument("das: one delay per channel");
    const double span = static_cast<double>(block.cols()) / fs;
    if (tau.cwiseAbs().maxCoeff() >= span)
        throw InvalidArgument("das: delay exceeds the block length");
    std::vector<cplx> ch(static_cast<std::size_t>(block.cols()));
    VectorXcd y = VectorXcd::Zero(block.cols());
    for (Eigen::Index m = 0; m < block.rows(); ++m) {
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            ch[static_cast<std::size_t>(t)] = block(m, t);
        const auto aligned = dsp::fractional_advance(ch, -tau[m], fs, carrier_hz);
        for (Eigen::Index t = 0; t < block.cols(); ++t)
            y[t] += aligned[static_cast<std::size_t>(t)];
    }
    return y;
}

CandidatePool make_pool(waveforms::Family family, int n, std::span<const int> roots,
                        const waveforms::PassbandConfig& cfg) {
    if (roots.empty()) throw InvalidArgument("make_pool: empty root list");
    CandidatePool pool;
    pool.cfg = cfg;
    for (int q : roots) {
        auto seq = waveforms::make_sequence(family, {n, q});
        pool.templates.push_back(waveforms::baseband_chips(seq, cfg));
        double e = 0.0;
        for (const auto& v : pool.templates.back()) e += std::norm(v);
        pool.template_energy.push_back(e);
        pool.sequences.push_back(std::move(seq));
    }
    return pool;
}

VectorXd correlate_candidates(std::span<const cplx> y, const CandidatePool& pool,
                              std::optional<std::pair<int, int>> lag_range) {
    if (pool.size() == 0) throw InvalidArgument("correlate_candidates: empty pool");
    const auto ns = static_cast<std::size_t>(pool.symbol_samples());
    if (y.size() < ns)
        throw InvalidArgument("correlate_candidates: window shorter than one symbol");

    // One symbol period, cyclic lag search.
    std::vector<cplx> w(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(ns));
    double ey = 0.0;
    for (const auto& v : w) ey += std::norm(v);
    if (ey <= 0.0) throw InvalidArgument("correlate_candidates: zero-energy window");

    auto wf = dsp::fft(std::span<const cplx>{w});
    VectorXd scores(static_cast<Eigen::Index>(pool.size()));
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto sf = dsp::fft(std::span<const cplx>{pool.templates[i]});
        for (std::size_t k = 0; k < ns; ++k) sf[k] = wf[k] * std::conj(sf[k]);
        const auto r = dsp::ifft(sf);  // r[d] = sum_t y[t] conj(s[(t-d) mod ns])
        double best = 0.0;
        for (std::size_t d = 0; d < ns; ++d) {
            if (lag_range) {
                const int lag = static_cast<int>(d);
                const int wrapped = lag > static_cast<int>(ns) / 2 ? lag - static_cast<int>(ns)
                                                                   : lag;
                if (wrapped < lag_range->first || wrapped > lag_range->second) continue;
            }
            best = std::max(best, std::abs(r[d]));
        }
        scores[static_cast<Eigen::Index>(i)] =
            best / std::sqrt(ey * pool.template_energy[i]);
    }
    return scores;
}

MatrixXd build_confidence(const std::vector<VectorXcd>& beams, const CandidatePool& pool,
                          double fs) {
    if (beams.size() > pool.size())
        throw InvalidArgument("build_confidence: more beams than candidates");
    MatrixXd c(static_cast<Eigen::Index>(beams.size()), static_cast<Eigen::Index>(pool.size()));
    const double f_lo = pool.cfg.carrier_hz - pool.cfg.bandwidth_hz / 2.0;
    const double f_hi = pool.cfg.carrier_hz + pool.cfg.bandwidth_hz / 2.0;
    for (std::size_t k = 0; k < beams.size(); ++k) {
        const auto& b = beams[k];
        std::vector<cplx> y(static_cast<std::size_t>(b.size()));
        for (Eigen::Index t = 0; t < b.size(); ++t) y[static_cast<std::size_t>(t)] = b[t];
        const double fc =
            waveforms::estimate_center_frequency(std::span<const cplx>{y}, fs,
                                                 std::pair{f_lo, f_hi});
        for (std::size_t t = 0; t < y.size(); ++t)
            y[t] *= std::polar(1.0, -2.0 * pi * fc * static_cast<double>(t) / fs);
        c.row(static_cast<Eigen::Index>(k)) = correlate_candidates(y, pool);
    }
    return c;
}

namespace {

// Shortest-augmenting-path assignment on a square cost matrix (minimizing).
// Returns row -> column.
std::vector<int> solve_square_min(const MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> rowsol(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<std::size_t>(j)])
            rowsol[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
    return rowsol;
}

// Optimal max-score for a K x P rectangle (rows all assigned, K <= P).
double optimal_score(const MatrixXd& c) {
    const auto k = c.rows();
    const auto p = c.cols();
    if (k == 0) return 0.0;
    const double cmax = c.maxCoeff();
    MatrixXd cost = MatrixXd::Zero(p, p);
    cost.topRows(k) = (cmax - c.array()).matrix();
    const auto rowsol = solve_square_min(cost);
    double score = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) score += c(i, rowsol[static_cast<std::size_t>(i)]);
    return score;
}

}  // namespace

Assignment assign(const MatrixXd& confidence) {
    const auto k = confidence.rows();
    const auto p = confidence.cols();
    if (k < 1 || p < 1) throw InvalidArgument("assign: empty confidence matrix");
    if (k > p) throw InvalidArgument("assign: more beams than candidates");
    if (!confidence.allFinite() || confidence.minCoeff() < 0.0)
        throw InvalidArgument("assign: confidences must be finite and nonnegative");

    const double total = optimal_score(confidence);
    const double tol = 1e-12 * std::max(1.0, std::abs(total));

    // Fix rows in order, preferring the lowest column index that still
    // permits an optimal completion; deterministic under score ties.
    Assignment out;
    out.mapping.assign(static_cast<std::size_t>(k), -1);
    std::vector<char> used(static_cast<std::size_t>(p), 0);
    double fixed = 0.0;
    for (Eigen::Index row = 0; row < k; ++row) {
        const Eigen::Index rows_left = k - row - 1;
        const Eigen::Index cols_left = p - row - 1;
        bool placed = false;
        for (Eigen::Index col = 0; col < p && !placed; ++col) {
            if (used[static_cast<std::size_t>(col)]) continue;
            // Remaining subproblem without this row and column.
            MatrixXd sub(rows_left, cols_left);
            Eigen::Index cc = 0;
            for (Eigen::Index jc = 0; jc < p; ++jc) {
                if (used[static_cast<std::size_t>(jc)] || jc == col) continue;
                for (Eigen::Index ir = 0; ir < rows_left; ++ir)
                    sub(ir, cc) = confidence(row + 1 + ir, jc);
                ++cc;
            }
            const double rest = optimal_score(sub);
            if (fixed + confidence(row, col) + rest >= total - tol) {
                out.mapping[static_cast<std::size_t>(row)] = static_cast<int>(col);
                used[static_cast<std::size_t>(col)] = 1;
                fixed += confidence(row, col);
                placed = true;
            }
        }
        if (!placed) throw NumericalError("assign: internal inconsistency");
    }
    out.score = fixed;
    return out;
}

}  // namespace beamloc::ident
