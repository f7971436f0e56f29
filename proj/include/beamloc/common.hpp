#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace beamloc {

using cplx = std::complex<double>;
using Eigen::Matrix3d;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXcd;
using Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx j1i{0.0, 1.0};

/// Thrown on violated preconditions and invalid configuration.
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical routine cannot produce a meaningful result
/// (singular systems, non-convergence, degenerate geometry).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double db_to_pow(double db) { return std::pow(10.0, db / 10.0); }
inline double pow_to_db(double p) { return 10.0 * std::log10(p); }
inline double deg_to_rad(double d) { return d * pi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / pi; }

/// Deterministic random stream. The engine is the standard-specified
/// mt19937_64; uniform/gaussian draws are derived here explicitly so the
/// sample sequence does not depend on the C++ library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t u64() { return eng_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (pairs cached).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * pi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * pi * u2);
    }

    /// Circular complex normal with E|z|^2 = 1.
    cplx cgaussian() {
        const double s = std::numbers::sqrt2;
        return {gaussian() / s, gaussian() / s};
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

    /// Derive an independent child seed (SplitMix64 finalizer over the pair).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace beamloc
