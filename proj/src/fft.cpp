#include "beamloc/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace beamloc::dsp {

namespace {

// Plan creation is not thread safe in FFTW; execution on fresh arrays is.
// Plans are created once per (size, direction) with FFTW_UNALIGNED so they
// can be re-executed on arbitrary caller buffers.
class PlanCache {
  public:
    static fftw_plan get(int n, int sign) {
        static PlanCache cache;
        std::scoped_lock lk(cache.mu_);
        auto key = std::pair{n, sign};
        auto it = cache.plans_.find(key);
        if (it != cache.plans_.end()) return it->second;
        std::vector<cplx> tmp(static_cast<std::size_t>(n));
        auto* p = reinterpret_cast<fftw_complex*>(tmp.data());
        fftw_plan plan =
            fftw_plan_dft_1d(n, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        cache.plans_.emplace(key, plan);
        return plan;
    }

  private:
    std::mutex mu_;
    std::map<std::pair<int, int>, fftw_plan> plans_;
};

std::vector<cplx> run(std::span<const cplx> x, int sign) {
    if (x.empty()) throw InvalidArgument("fft: empty input");
    std::vector<cplx> out(x.begin(), x.end());
    fftw_plan plan = PlanCache::get(static_cast<int>(x.size()), sign);
    auto* p = reinterpret_cast<fftw_complex*>(out.data());
    fftw_execute_dft(plan, p, p);
    return out;
}

}  // namespace

std::size_t next_fast_len(std::size_t n) {
    if (n < 2) return 2;
    for (std::size_t len = n;; ++len) {
        std::size_t m = len;
        for (std::size_t f : {2, 3, 5})
            while (m % f == 0) m /= f;
        if (m == 1) return len;
    }
}

std::vector<cplx> fft(std::span<const cplx> x) { return run(x, FFTW_FORWARD); }

std::vector<cplx> ifft(std::span<const cplx> x) {
    auto out = run(x, FFTW_BACKWARD);
    const double s = 1.0 / static_cast<double>(out.size());
    for (auto& v : out) v *= s;
    return out;
}

std::vector<cplx> fft(std::span<const double> x) {
    std::vector<cplx> cx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
    return fft(std::span<const cplx>{cx});
}

std::vector<cplx> analytic_signal(std::span<const double> x) {
    if (x.empty()) throw InvalidArgument("analytic_signal: empty input");
    auto spec = fft(x);
    const std::size_t n = spec.size();
    for (std::size_t k = 1; k < n; ++k) {
        if (2 * k < n) {
            spec[k] *= 2.0;
        } else if (2 * k > n) {
            spec[k] = 0.0;
        }
        // k == n/2 (even n): Nyquist bin kept as is.
    }
    return ifft(spec);
}

std::vector<double> fractional_advance(std::span<const double> x, double tau_s, double fs) {
    auto spec = fft(x);
    const std::size_t n = spec.size();
    for (std::size_t k = 0; k < n; ++k) {
        if (2 * k == n) {
            // Real input: the Nyquist bin must stay real to keep the
            // output real; its phase factor is cos only.
            spec[k] *= std::cos(2.0 * pi * bin_freq(k, n, fs) * tau_s);
        } else {
            spec[k] *= std::exp(j1i * (2.0 * pi * bin_freq(k, n, fs) * tau_s));
        }
    }
    auto y = ifft(spec);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = y[i].real();
    return out;
}

std::vector<cplx> fractional_advance(std::span<const cplx> x, double tau_s, double fs,
                                     double carrier_hz) {
    auto spec = fft(x);
    const std::size_t n = spec.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double f = bin_freq(k, n, fs) + carrier_hz;
        spec[k] *= std::exp(j1i * (2.0 * pi * f * tau_s));
    }
    return ifft(spec);
}

}  // namespace beamloc::dsp
