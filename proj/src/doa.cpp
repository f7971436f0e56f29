#include "beamloc/doa.hpp"

#include <algorithm>
#include <map>

namespace beamloc::doa {

void CovarianceMatrix::validate() const {
    if (data.rows() != data.cols() || data.rows() < 1)
        throw InvalidArgument("covariance must be square");
    const double scale = std::max(1.0, data.norm());
    if ((data - data.adjoint()).norm() > 1e-10 * scale)
        throw InvalidArgument("covariance is not Hermitian");
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(data, Eigen::EigenvaluesOnly);
    const double tr = std::max(1e-300, data.real().trace());
    if (es.eigenvalues().minCoeff() < -1e-8 * tr)
        throw InvalidArgument("covariance is not positive semidefinite");
}

CovarianceMatrix sample_covariance(const MatrixXcd& snapshots) {
    if (snapshots.size() == 0) throw InvalidArgument("sample_covariance: empty matrix");
    const auto n = static_cast<double>(snapshots.cols());
    MatrixXcd r = snapshots * snapshots.adjoint() / n;
    r = ((r + r.adjoint()) / 2.0).eval();
    return {std::move(r), static_cast<int>(snapshots.cols())};
}

CovarianceMatrix sample_covariance(const sim::SnapshotMatrix& x) {
    return sample_covariance(x.data);
}

int estimate_source_count(const MatrixXcd& snapshots, double threshold) {
    if (snapshots.size() == 0 || snapshots.norm() == 0.0)
        throw InvalidArgument("estimate_source_count: degenerate all-zero input");
    const auto r = sample_covariance(snapshots);
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r.data, Eigen::EigenvaluesOnly);
    const auto m = es.eigenvalues().size();
    std::vector<double> sv(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i)
        sv[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, es.eigenvalues()[m - 1 - i]));

    int best_k = 0;
    double best_ratio = 0.0;
    for (std::size_t k = 0; k + 1 < sv.size(); ++k) {
        const double denom = std::max(sv[k + 1], 1e-300);
        const double ratio = sv[k] / denom;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_k = static_cast<int>(k) + 1;
        }
    }
    return best_ratio > threshold ? best_k : 0;
}

namespace {

// Signal-subspace basis (largest `k` eigenvectors). MUSIC denominators are
// evaluated as ||v||^2 - ||Es^H v||^2, which is cheaper than the noise basis
// whenever k < m.
MatrixXcd signal_basis(const CovarianceMatrix& r, int k) {
    r.validate();
    const auto m = r.data.rows();
    if (k < 0 || k >= m) throw InvalidArgument("music: source count must satisfy K < M");
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(r.data);
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    return es.eigenvectors().rightCols(k);
}

// Steering vector via per-axis phase tables (extent is small).
struct SteeringTable {
    explicit SteeringTable(const geometry::GridArray& array) : arr(array) {
        int mx = 0, my = 0;
        for (const auto& e : array.elements) {
            mx = std::max(mx, e.x);
            my = std::max(my, e.y);
        }
        ax.resize(static_cast<std::size_t>(mx) + 1);
        ay.resize(static_cast<std::size_t>(my) + 1);
    }

    void fill(double theta_bar, double phi_bar, VectorXcd& v) const {
        const cplx wx = std::polar(1.0, 2.0 * pi * theta_bar);
        const cplx wy = std::polar(1.0, 2.0 * pi * phi_bar);
        ax[0] = 1.0;
        for (std::size_t i = 1; i < ax.size(); ++i) ax[i] = ax[i - 1] * wx;
        ay[0] = 1.0;
        for (std::size_t i = 1; i < ay.size(); ++i) ay[i] = ay[i - 1] * wy;
        for (Eigen::Index n = 0; n < v.size(); ++n) {
            const auto& e = arr.elements[static_cast<std::size_t>(n)];
            v[n] = ax[static_cast<std::size_t>(e.x)] * ay[static_cast<std::size_t>(e.y)];
        }
    }

    const geometry::GridArray& arr;
    mutable std::vector<cplx> ax, ay;
};

double music_value(const SteeringTable& table, const MatrixXcd& es_basis, double m,
                   double theta_bar, double phi_bar, VectorXcd& v) {
    table.fill(theta_bar, phi_bar, v);
    const double sig = (es_basis.adjoint() * v).squaredNorm();
    return 1.0 / std::max(m - sig, 1e-12);
}

}  // namespace

Pseudospectrum music_spectrum(const CovarianceMatrix& r, const geometry::GridArray& array,
                              int num_sources, double d_over_lambda, const GridSpec& grid) {
    if (static_cast<Eigen::Index>(array.size()) != r.data.rows())
        throw InvalidArgument("music: covariance size does not match the array");
    const MatrixXcd es_basis = signal_basis(r, num_sources);

    Pseudospectrum out;
    const int naz = static_cast<int>(std::lround(360.0 / grid.az_step_deg));
    const int nel = static_cast<int>(std::floor(grid.el_max_deg / grid.el_step_deg)) + 1;
    out.az_deg.resize(static_cast<std::size_t>(naz));
    for (int i = 0; i < naz; ++i) out.az_deg[static_cast<std::size_t>(i)] = -180.0 + i * grid.az_step_deg;
    out.el_deg.resize(static_cast<std::size_t>(nel));
    for (int j = 0; j < nel; ++j) out.el_deg[static_cast<std::size_t>(j)] = j * grid.el_step_deg;

    SteeringTable table(array);
    VectorXcd v(static_cast<Eigen::Index>(array.size()));
    const double m = static_cast<double>(array.size());
    out.values.resize(nel, naz);
    for (int jdx = 0; jdx < nel; ++jdx) {
        const double el = deg_to_rad(out.el_deg[static_cast<std::size_t>(jdx)]);
        const double s = d_over_lambda * std::sin(el);
        for (int idx = 0; idx < naz; ++idx) {
            const double az = deg_to_rad(out.az_deg[static_cast<std::size_t>(idx)]);
            out.values(jdx, idx) =
                music_value(table, es_basis, m, s * std::cos(az), s * std::sin(az), v);
        }
    }
    return out;
}

double noise_projection(const CovarianceMatrix& r, const geometry::GridArray& array,
                        int num_sources, double theta_bar, double phi_bar) {
    const MatrixXcd es_basis = signal_basis(r, num_sources);
    const VectorXcd v = sim::steering_vector(array, theta_bar, phi_bar);
    const double m = v.squaredNorm();
    return std::max(0.0, m - (es_basis.adjoint() * v).squaredNorm()) / m;
}

DoaEstimate refine_music(const CovarianceMatrix& r, const geometry::GridArray& array,
                         int num_sources, double d_over_lambda, double az0_rad,
                         double el0_rad) {
    const MatrixXcd es_basis = signal_basis(r, num_sources);
    SteeringTable table(array);
    VectorXcd v(static_cast<Eigen::Index>(array.size()));
    const double m = static_cast<double>(array.size());

    double az = az0_rad, el = el0_rad, best = -1.0;
    for (double step = deg_to_rad(1.0); step > deg_to_rad(0.005); step /= 4.0) {
        double naz = az, nel = el;
        for (int dj = -2; dj <= 2; ++dj) {
            for (int di = -2; di <= 2; ++di) {
                const double cel = std::clamp(el + dj * step, 0.0, deg_to_rad(89.9));
                const double caz = az + di * step;
                const double s = d_over_lambda * std::sin(cel);
                const double val =
                    music_value(table, es_basis, m, s * std::cos(caz), s * std::sin(caz), v);
                if (val > best) {
                    best = val;
                    naz = caz;
                    nel = cel;
                }
            }
        }
        az = naz;
        el = nel;
    }
    if (az >= pi) az -= 2.0 * pi;
    if (az < -pi) az += 2.0 * pi;
    return {az, el, best, {}, 0.0};
}

geometry::GridArray window_array(const geometry::SmoothingPlan& plan, double pitch_m) {
    geometry::GridArray w;
    w.name = "virtual-window";
    w.pitch_m = pitch_m;
    w.master_extent = std::max(plan.window_x, plan.window_y);
    for (int x = 0; x < plan.window_x; ++x)
        for (int y = 0; y < plan.window_y; ++y) w.elements.push_back({x, y});
    std::sort(w.elements.begin(), w.elements.end());
    return w;
}

CovarianceMatrix coarray_smoothed_covariance(const CovarianceMatrix& r,
                                             const geometry::GridArray& array,
                                             const geometry::SmoothingPlan& plan) {
    if (static_cast<Eigen::Index>(array.size()) != r.data.rows())
        throw InvalidArgument("smoothing: covariance size does not match the array");
    const auto co = geometry::difference_coarray(array);
    if (co.virtual_extent_x() != plan.virtual_x || co.virtual_extent_y() != plan.virtual_y)
        throw InvalidArgument("smoothing: plan does not match the array co-array");
    r.validate();

    // Redundancy averaging: one virtual sample per difference vector.
    std::map<geometry::GridPoint, cplx> z;
    std::map<geometry::GridPoint, int> hits;
    const auto m = static_cast<Eigen::Index>(array.size());
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index k = 0; k < m; ++k) {
            const auto d = array.elements[static_cast<std::size_t>(i)] -
                           array.elements[static_cast<std::size_t>(k)];
            z[d] += r.data(i, k);
            hits[d] += 1;
        }
    for (auto& [d, val] : z) val /= static_cast<double>(hits[d]);

    const auto win = window_array(plan, array.pitch_m);
    const auto dim = static_cast<Eigen::Index>(win.size());
    MatrixXcd rss = MatrixXcd::Zero(dim, dim);
    VectorXcd snap(dim);
    for (const auto& off : plan.offsets) {
        for (Eigen::Index idx = 0; idx < dim; ++idx) {
            const auto& e = win.elements[static_cast<std::size_t>(idx)];
            const geometry::GridPoint g{e.x + off.x - co.half_x, e.y + off.y - co.half_y};
            snap[idx] = z.at(g);
        }
        rss += snap * snap.adjoint();
    }
    rss /= static_cast<double>(plan.offsets.size());
    rss = ((rss + rss.adjoint()) / 2.0).eval();
    return {std::move(rss), r.snapshots};
}

double spherical_distance(double az1, double el1, double az2, double el2) {
    const double d = sim::unit_dir(az1, el1).dot(sim::unit_dir(az2, el2));
    return std::acos(std::clamp(d, -1.0, 1.0));
}

std::vector<DoaEstimate> pick_peaks(const Pseudospectrum& spec, int count,
                                    double min_separation_deg) {
    if (count < 1) throw InvalidArgument("pick_peaks: count must be >= 1");
    const auto nel = static_cast<int>(spec.el_deg.size());
    const auto naz = static_cast<int>(spec.az_deg.size());

    struct Peak {
        double val;
        int iel, iaz;
    };
    std::vector<Peak> peaks;
    for (int jdx = 0; jdx < nel; ++jdx) {
        for (int idx = 0; idx < naz; ++idx) {
            const double v = spec.values(jdx, idx);
            bool is_max = true;
            for (int dj = -1; dj <= 1 && is_max; ++dj) {
                const int cj = jdx + dj;
                if (cj < 0 || cj >= nel) continue;  // elevation edge
                for (int di = -1; di <= 1; ++di) {
                    if (dj == 0 && di == 0) continue;
                    const int ci = (idx + di + naz) % naz;  // azimuth wraps
                    if (spec.values(cj, ci) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) peaks.push_back({v, jdx, idx});
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        return a.val > b.val;
    });

    const double min_sep = deg_to_rad(min_separation_deg);
    std::vector<DoaEstimate> out;
    for (const auto& p : peaks) {
        if (static_cast<int>(out.size()) >= count) break;
        const double az = deg_to_rad(spec.az_deg[static_cast<std::size_t>(p.iaz)]);
        const double el = deg_to_rad(spec.el_deg[static_cast<std::size_t>(p.iel)]);
        bool keep = true;
        for (const auto& sel : out) {
            if (spherical_distance(az, el, sel.azimuth, sel.elevation) < min_sep) {
                keep = false;
                break;
            }
        }
        if (!keep) continue;

        // Per-axis parabolic refinement on log values.
        auto logv = [&](int jj, int ii) {
            return std::log(std::max(spec.values(jj, (ii + naz) % naz), 1e-300));
        };
        double daz = 0.0, del = 0.0;
        {
            const double l = logv(p.iel, p.iaz - 1), c = logv(p.iel, p.iaz),
                         rr = logv(p.iel, p.iaz + 1);
            const double denom = l - 2.0 * c + rr;
            if (denom < -1e-12) daz = std::clamp(0.5 * (l - rr) / denom, -0.5, 0.5);
        }
        if (p.iel > 0 && p.iel + 1 < nel) {
            const double l = logv(p.iel - 1, p.iaz), c = logv(p.iel, p.iaz),
                         rr = logv(p.iel + 1, p.iaz);
            const double denom = l - 2.0 * c + rr;
            if (denom < -1e-12) del = std::clamp(0.5 * (l - rr) / denom, -0.5, 0.5);
        }
        const double step_az = spec.az_deg.size() > 1 ? spec.az_deg[1] - spec.az_deg[0] : 1.0;
        const double step_el = spec.el_deg.size() > 1 ? spec.el_deg[1] - spec.el_deg[0] : 1.0;
        DoaEstimate e;
        e.azimuth = az + deg_to_rad(daz * step_az);
        e.elevation = std::clamp(el + deg_to_rad(del * step_el), 0.0, pi / 2 - 1e-9);
        if (e.azimuth >= pi) e.azimuth -= 2.0 * pi;
        e.value = p.val;
        out.push_back(e);
    }
    return out;
}

}  // namespace beamloc::doa
