#ifndef OMSQZ_SPECTRAL_HPP
#define OMSQZ_SPECTRAL_HPP

// FFTW wrappers and a Welch-averaged auto/cross spectral estimator.
//
// Segment sums are reduced in fixed blocks of consecutive segments, then the
// block sums are added in block order. The partition does not depend on the
// thread count, so results are bit-identical for any number of workers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "omsqz/constants.hpp"
#include "omsqz/error.hpp"

namespace omsqz {

namespace detail {

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

inline FftwBuffer<double> alloc_real(std::size_t n) {
    return FftwBuffer<double>(fftw_alloc_real(n));
}

inline FftwBuffer<fftw_complex> alloc_complex(std::size_t n) {
    return FftwBuffer<fftw_complex>(fftw_alloc_complex(n));
}

class Plan {
public:
    Plan() = default;
    explicit Plan(fftw_plan p) : p_(p) {
        if (!p_) throw std::runtime_error("FFTW planning failed");
    }
    Plan(Plan&& o) noexcept : p_(std::exchange(o.p_, nullptr)) {}
    Plan& operator=(Plan&& o) noexcept {
        if (this != &o) {
            reset();
            p_ = std::exchange(o.p_, nullptr);
        }
        return *this;
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() { reset(); }

    fftw_plan get() const noexcept { return p_; }

private:
    void reset() noexcept {
        if (p_) fftw_destroy_plan(p_);
        p_ = nullptr;
    }
    fftw_plan p_ = nullptr;
};

}  // namespace detail

/// Real-to-complex forward transform of fixed length (unnormalized).
class RealFft {
public:
    explicit RealFft(std::size_t n)
        : n_(n), in_(detail::alloc_real(n)), out_(detail::alloc_complex(n / 2 + 1)) {
        plan_ = detail::Plan(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(),
                                                  FFTW_ESTIMATE));
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    /// Thread-safe execution on caller-owned, FFTW-allocated buffers.
    void execute(double* in, fftw_complex* out) const {
        fftw_execute_dft_r2c(plan_.get(), in, out);
    }

private:
    std::size_t n_;
    detail::FftwBuffer<double> in_;
    detail::FftwBuffer<fftw_complex> out_;
    detail::Plan plan_;
};

/// Complex-to-real inverse transform of fixed length, normalized by 1/n.
/// `spectrum` has n/2 + 1 bins and is overwritten.
inline std::vector<double> inverse_real_fft(std::vector<std::complex<double>>& spectrum,
                                            std::size_t n) {
    if (spectrum.size() != n / 2 + 1) throw StructuralError("inverse_real_fft: bin count mismatch");
    auto in = detail::alloc_complex(n / 2 + 1);
    auto out = detail::alloc_real(n);
    detail::Plan plan(fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(),
                                           FFTW_ESTIMATE));
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        in[k][0] = spectrum[k].real();
        in[k][1] = spectrum[k].imag();
    }
    fftw_execute(plan.get());
    std::vector<double> x(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = out[i] * scale;
    return x;
}

enum class Window { rectangular, hann };

inline std::vector<double> make_window(Window w, std::size_t n) {
    std::vector<double> v(n, 1.0);
    if (w == Window::hann) {
        for (std::size_t i = 0; i < n; ++i)
            v[i] = 0.5 * (1.0 - std::cos(constants::two_pi * double(i) / double(n)));
    }
    return v;
}

struct WelchConfig {
    std::size_t segment_length = 4096;
    double overlap = 0.5;
    Window window = Window::hann;
    unsigned threads = 1;

    std::size_t step() const {
        const auto s = static_cast<std::size_t>(std::llround(double(segment_length) * (1.0 - overlap)));
        return std::max<std::size_t>(1, s);
    }

    std::size_t segments(std::size_t n_samples) const {
        if (n_samples < segment_length) return 0;
        return (n_samples - segment_length) / step() + 1;
    }
};

/// Single-sided Welch spectra. Units: input units^2 / Hz.
struct CrossSpectra {
    std::vector<double> freq;
    std::vector<double> s_a;
    std::vector<double> s_b;
    std::vector<std::complex<double>> s_ab;  // average of conj(A) B
    std::size_t n_averages = 0;
    double n_effective = 0.0;  // independent-equivalent count given the overlap
};

/// Equivalent number of independent averages for overlapped segments.
inline double effective_averages(Window w, std::size_t segment_length, std::size_t step,
                                 std::size_t k) {
    if (k == 0) return 0.0;
    const auto win = make_window(w, segment_length);
    double norm = 0.0;
    for (double x : win) norm += x * x;
    double sum = 0.0;
    for (std::size_t lag = 1; lag < k && lag * step < segment_length; ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag * step < segment_length; ++i)
            c += win[i] * win[i + lag * step];
        const double rho = c / norm;
        sum += (1.0 - double(lag) / double(k)) * rho * rho;
    }
    return double(k) / (1.0 + 2.0 * sum);
}

namespace detail {

struct BlockSum {
    std::vector<double> aa, bb;
    std::vector<std::complex<double>> ab;
};

}  // namespace detail

inline CrossSpectra welch_cross(std::span<const double> a, std::span<const double> b, double fs,
                                const WelchConfig& cfg) {
    if (a.size() != b.size()) throw StructuralError("welch_cross: channel lengths differ");
    if (!(fs > 0)) throw DomainError("welch_cross: sample rate must be positive");
    if (cfg.segment_length < 2) throw DomainError("welch_cross: segment too short");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) throw DomainError("welch_cross: bad overlap");
    const std::size_t k_segments = cfg.segments(a.size());
    if (k_segments == 0) throw DataError("welch_cross: series shorter than one segment");

    const std::size_t len = cfg.segment_length;
    const std::size_t step = cfg.step();
    const std::size_t nb = len / 2 + 1;
    const auto win = make_window(cfg.window, len);
    double wnorm = 0.0;
    for (double x : win) wnorm += x * x;

    const RealFft fft(len);
    constexpr std::size_t kBlock = 16;
    const std::size_t n_blocks = (k_segments + kBlock - 1) / kBlock;
    std::vector<detail::BlockSum> blocks(n_blocks);

    auto work = [&](unsigned tid, unsigned nthreads) {
        auto in = detail::alloc_real(len);
        auto fa = detail::alloc_complex(nb);
        auto fb = detail::alloc_complex(nb);
        for (std::size_t bi = tid; bi < n_blocks; bi += nthreads) {
            auto& blk = blocks[bi];
            blk.aa.assign(nb, 0.0);
            blk.bb.assign(nb, 0.0);
            blk.ab.assign(nb, {0.0, 0.0});
            const std::size_t s_end = std::min(k_segments, (bi + 1) * kBlock);
            for (std::size_t s = bi * kBlock; s < s_end; ++s) {
                const std::size_t off = s * step;
                for (std::size_t i = 0; i < len; ++i) in[i] = a[off + i] * win[i];
                fft.execute(in.get(), fa.get());
                for (std::size_t i = 0; i < len; ++i) in[i] = b[off + i] * win[i];
                fft.execute(in.get(), fb.get());
                for (std::size_t k = 0; k < nb; ++k) {
                    const std::complex<double> xa(fa[k][0], fa[k][1]);
                    const std::complex<double> xb(fb[k][0], fb[k][1]);
                    blk.aa[k] += std::norm(xa);
                    blk.bb[k] += std::norm(xb);
                    blk.ab[k] += std::conj(xa) * xb;
                }
            }
        }
    };

    const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.threads, unsigned(n_blocks)));
    if (nthreads == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t, nthreads);
    }

    CrossSpectra out;
    out.freq.resize(nb);
    out.s_a.assign(nb, 0.0);
    out.s_b.assign(nb, 0.0);
    out.s_ab.assign(nb, {0.0, 0.0});
    for (const auto& blk : blocks) {
        for (std::size_t k = 0; k < nb; ++k) {
            out.s_a[k] += blk.aa[k];
            out.s_b[k] += blk.bb[k];
            out.s_ab[k] += blk.ab[k];
        }
    }
    const double base = 1.0 / (fs * wnorm * double(k_segments));
    for (std::size_t k = 0; k < nb; ++k) {
        const bool edge = (k == 0) || (len % 2 == 0 && k == nb - 1);
        const double scale = edge ? base : 2.0 * base;
        out.freq[k] = double(k) * fs / double(len);
        out.s_a[k] *= scale;
        out.s_b[k] *= scale;
        out.s_ab[k] *= scale;
    }
    out.n_averages = k_segments;
    out.n_effective = effective_averages(cfg.window, len, step, k_segments);
    return out;
}

/// Welch auto spectrum of one channel.
inline CrossSpectra welch_auto(std::span<const double> a, double fs, const WelchConfig& cfg) {
    return welch_cross(a, a, fs, cfg);
}

}  // namespace omsqz

#endif  // OMSQZ_SPECTRAL_HPP
