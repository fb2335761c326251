#ifndef OMSQZ_CORRLAB_HPP
#define OMSQZ_CORRLAB_HPP

// Calibration-free squeezing detection from two-detector photocurrent
// correlations.
//
// A beam with noise R (relative to its shot noise) is split 50/50. The two
// photocurrents have cross-spectral matrix, per unit shot level,
//
//     [ (R+1)/2   (R-1)/2 ]
//     [ (R-1)/2   (R+1)/2 ]
//
// scaled by the detector gains, plus independent dark noise S_d/2 per channel.
// The sign of the averaged real cross spectrum tells squeezing (negative)
// from classical excess (positive) without knowing the shot level.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "omsqz/error.hpp"
#include "omsqz/format.hpp"
#include "omsqz/qspace.hpp"
#include "omsqz/spectral.hpp"

namespace omsqz {

struct TimeSeriesPair {
    double fs = 0.0;  // Hz
    std::vector<double> a;
    std::vector<double> b;
    double alpha = 1.0;
    double beta = 1.0;

    void validate() const {
        if (!(fs > 0)) throw DomainError("sample rate must be positive");
        if (a.size() != b.size()) throw StructuralError("channel lengths differ");
    }
};

struct EstimatorConfig {
    std::size_t segment_length = 4096;
    double overlap = 0.5;
    Window window = Window::hann;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    void validate() const {
        if (segment_length < 64 || (segment_length & (segment_length - 1)) != 0)
            throw DomainError("segment_length must be a power of two >= 64");
        if (!(overlap >= 0.0 && overlap <= 0.9)) throw DomainError("overlap must lie in [0, 0.9]");
        if (threads == 0) throw DomainError("threads must be >= 1");
    }

    friend bool operator==(const EstimatorConfig&, const EstimatorConfig&) = default;

    WelchConfig welch() const { return {segment_length, overlap, window, threads}; }
};

/// Relative noise spectrum R(f) of the beam, in units of its shot noise.
using RelativeNoise = std::function<double(double)>;

/// One output unit of PSD: a channel at R = 1, gain 1, no dark noise has unit variance.
inline double shot_unit_psd(double fs) { return 2.0 / fs; }

/// Stationary Gaussian record pair with the two-detector cross-spectral matrix of R(f).
///
/// Synthesized by coloring independent complex Gaussian spectra with the
/// symmetric square root of the target matrix (eigenvalues R and 1), then
/// inverse transforming. Deterministic given the seed.
inline TimeSeriesPair synthesize_pair(const RelativeNoise& r_spectrum, double fs,
                                      std::size_t n_samples, double alpha, double beta,
                                      double dark_a, double dark_b, std::uint64_t seed) {
    if (!(fs > 0)) throw DomainError("sample rate must be positive");
    if (n_samples < 2 || n_samples % 2 != 0) throw DomainError("n_samples must be even and >= 2");
    if (!(dark_a >= 0) || !(dark_b >= 0)) throw DomainError("dark noise must be non-negative");

    const std::size_t nb = n_samples / 2 + 1;
    std::vector<double> r(nb, 1.0);
    for (std::size_t k = 1; k < nb; ++k) {
        r[k] = r_spectrum(double(k) * fs / double(n_samples));
        if (!(r[k] >= 0) || !std::isfinite(r[k]))
            throw DomainError("relative noise spectrum must be finite and >= 0");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double scale = std::sqrt(double(n_samples));
    const double da = std::sqrt(0.5 * dark_a);
    const double db = std::sqrt(0.5 * dark_b);

    std::vector<std::complex<double>> xa(nb), xb(nb);
    for (std::size_t k = 1; k < nb; ++k) {
        const bool real_bin = (k == nb - 1);
        auto draw = [&] {
            if (real_bin) return std::complex<double>(gauss(rng), 0.0);
            const double re = gauss(rng);
            const double im = gauss(rng);
            return std::complex<double>(re, im) * std::sqrt(0.5);
        };
        const auto z1 = draw(), z2 = draw(), z3 = draw(), z4 = draw();
        const double p = std::sqrt(r[k]);
        const double diag = 0.5 * (p + 1.0);
        const double off = 0.5 * (p - 1.0);
        xa[k] = alpha * scale * (diag * z1 + off * z2 + da * z3);
        xb[k] = beta * scale * (off * z1 + diag * z2 + db * z4);
    }
    xa[0] = xb[0] = 0.0;

    TimeSeriesPair out;
    out.fs = fs;
    out.alpha = alpha;
    out.beta = beta;
    out.a = inverse_real_fft(xa, n_samples);
    out.b = inverse_real_fft(xb, n_samples);
    return out;
}

/// Dark-only records: independent white noise of PSD dark/2 shot units per channel.
inline TimeSeriesPair synthesize_dark(double fs, std::size_t n_samples, double alpha, double beta,
                                      double dark_a, double dark_b, std::uint64_t seed) {
    if (!(fs > 0)) throw DomainError("sample rate must be positive");
    if (!(dark_a >= 0) || !(dark_b >= 0)) throw DomainError("dark noise must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sa = alpha * std::sqrt(0.5 * dark_a);
    const double sb = beta * std::sqrt(0.5 * dark_b);
    TimeSeriesPair out;
    out.fs = fs;
    out.alpha = alpha;
    out.beta = beta;
    out.a.resize(n_samples);
    out.b.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        out.a[i] = sa * gauss(rng);
        out.b[i] = sb * gauss(rng);
    }
    return out;
}

struct CrossSpectrumResult {
    std::vector<double> freq;
    std::vector<double> s_a;
    std::vector<double> s_b;
    std::vector<std::complex<double>> s_ab;
    std::size_t n_averages = 0;
    double n_effective = 0.0;
};

inline CrossSpectrumResult cross_spectrum(const TimeSeriesPair& p, const EstimatorConfig& cfg) {
    p.validate();
    cfg.validate();
    if (p.a.size() < cfg.segment_length) throw DataError("series shorter than one segment");
    auto cs = welch_cross(p.a, p.b, p.fs, cfg.welch());
    return {std::move(cs.freq), std::move(cs.s_a), std::move(cs.s_b), std::move(cs.s_ab),
            cs.n_averages, cs.n_effective};
}

/// C = Re<S_ab> / sqrt(S_a S_b).
inline double normalized_correlation(double s_a, double s_b, std::complex<double> s_ab) {
    if (!(s_a > 0) || !(s_b > 0)) throw DomainError("auto spectra must be positive");
    return s_ab.real() / std::sqrt(s_a * s_b);
}

/// R = (1 + C) / (1 - C).
inline double infer_relative_noise(double c) {
    if (!std::isfinite(c)) throw DataError("correlation is not finite");
    if (c >= 1.0) throw DomainError("C >= 1: relative noise diverges");
    if (c < -1.0) throw DataError("C < -1: beyond the physical bound (estimator noise)");
    return (1.0 + c) / (1.0 - c);
}

/// C = (R - 1) / (R + 1).
inline double correlation_from_relative_noise(double r) { return (r - 1.0) / (r + 1.0); }

/// eta = [(1 + S_da/(1+R)) (1 + S_db/(1+R))]^(-1/2).
inline double efficiency(double s_da, double s_db, double r) {
    if (!(s_da >= 0) || !(s_db >= 0)) throw DomainError("dark PSDs must be non-negative");
    if (std::isinf(s_da) || std::isinf(s_db)) return 0.0;
    const double x = 1.0 + s_da / (1.0 + r);
    const double y = 1.0 + s_db / (1.0 + r);
    return 1.0 / std::sqrt(x * y);
}

/// (1 - C^2) / sqrt(N).
inline double statistical_error(double c, double n_averages) {
    if (!(n_averages >= 2)) throw DomainError("statistical_error needs at least 2 averages");
    return (1.0 - c * c) / std::sqrt(n_averages);
}

/// How dark noise is known when correcting C.
struct DarkNoise {
    /// Dark PSDs relative to the beam's shot level (same convention as synthesize_pair).
    double rel_a = 0.0;
    double rel_b = 0.0;
    /// Optionally, measured dark-only auto spectra in output units (one value per bin).
    std::optional<std::vector<double>> measured_a;
    std::optional<std::vector<double>> measured_b;
};

struct CorrelationBin {
    double freq = 0.0;
    double s_a = 0.0;
    double s_b = 0.0;
    std::complex<double> s_ab;
    double c = 0.0;
    double stat_err = 0.0;
    double eta = 1.0;
    double r_inferred = 1.0;   // from C / eta; NaN when flagged
    bool flagged = false;      // |C / eta| >= 1
};

struct CorrelationResult {
    std::vector<CorrelationBin> bins;
    std::size_t n_averages = 0;
    double n_effective = 0.0;
};

namespace detail {

/// Solve C = eta(R) (R-1)/(R+1) for R with eta from relative dark levels.
inline double corrected_correlation(double c, double s_da, double s_db, double& eta_out) {
    double eta = efficiency(s_da, s_db, 1.0);
    for (int it = 0; it < 50; ++it) {
        const double cc = c / eta;
        if (!(cc < 1.0) || !(cc > -1.0)) break;
        const double r = (1.0 + cc) / (1.0 - cc);
        const double next = efficiency(s_da, s_db, r);
        if (std::abs(next - eta) < 1e-15) {
            eta = next;
            break;
        }
        eta = next;
    }
    eta_out = eta;
    return c / eta;
}

}  // namespace detail

/// Full estimator: Welch spectra, C per bin, efficiency correction, inferred R.
inline CorrelationResult correlate(const TimeSeriesPair& p, const EstimatorConfig& cfg,
                                   const DarkNoise& dark = {}) {
    const CrossSpectrumResult cs = cross_spectrum(p, cfg);
    CorrelationResult out;
    out.n_averages = cs.n_averages;
    out.n_effective = cs.n_effective;
    const std::size_t nb = cs.freq.size();
    if (dark.measured_a && dark.measured_a->size() != nb)
        throw StructuralError("measured dark spectrum a has wrong bin count");
    if (dark.measured_b && dark.measured_b->size() != nb)
        throw StructuralError("measured dark spectrum b has wrong bin count");
    out.bins.reserve(nb);
    for (std::size_t k = 1; k < nb; ++k) {
        CorrelationBin b;
        b.freq = cs.freq[k];
        b.s_a = cs.s_a[k];
        b.s_b = cs.s_b[k];
        b.s_ab = cs.s_ab[k];
        b.c = normalized_correlation(b.s_a, b.s_b, b.s_ab);
        b.stat_err = statistical_error(b.c, cs.n_effective);
        double cc = b.c;
        if (dark.measured_a && dark.measured_b) {
            const double la = std::max(0.0, 1.0 - (*dark.measured_a)[k] / b.s_a);
            const double lb = std::max(0.0, 1.0 - (*dark.measured_b)[k] / b.s_b);
            b.eta = std::sqrt(la * lb);
            cc = b.eta > 0 ? b.c / b.eta : std::numeric_limits<double>::infinity();
        } else {
            cc = detail::corrected_correlation(b.c, dark.rel_a, dark.rel_b, b.eta);
        }
        if (cc < 1.0 && cc > -1.0) {
            b.r_inferred = (1.0 + cc) / (1.0 - cc);
        } else {
            b.flagged = true;
            b.r_inferred = std::numeric_limits<double>::quiet_NaN();
        }
        out.bins.push_back(b);
    }
    return out;
}

struct SqueezingPoint {
    double freq = 0.0;
    double r = 1.0;
    double r_db = 0.0;
    double r_err = 0.0;      // 1-sigma on R
    double db_err = 0.0;     // 1-sigma on R in dB
    bool flagged = false;
};

/// R = (1 + C/eta) / (1 - C/eta) per bin, in dB, with errors propagated from stat_err.
inline std::vector<SqueezingPoint> squeezing_spectrum_from_correlation(const CorrelationResult& res) {
    std::vector<SqueezingPoint> out;
    out.reserve(res.bins.size());
    for (const auto& b : res.bins) {
        SqueezingPoint p;
        p.freq = b.freq;
        const double cc = b.eta > 0 ? b.c / b.eta : std::numeric_limits<double>::infinity();
        if (!(cc < 1.0 && cc > -1.0)) {
            p.flagged = true;
            p.r = p.r_db = p.r_err = p.db_err = std::numeric_limits<double>::quiet_NaN();
        } else {
            p.r = (1.0 + cc) / (1.0 - cc);
            p.r_db = psd_to_db(p.r);
            const double sc = b.stat_err / b.eta;
            p.r_err = 2.0 * sc / ((1.0 - cc) * (1.0 - cc));
            p.db_err = 10.0 / std::log(10.0) * p.r_err / p.r;
        }
        out.push_back(p);
    }
    return out;
}

struct FrequencyBand {
    double lo = 0.0;
    double hi = 0.0;
};

/// Widest run of consecutive bins whose C lies more than `sigmas` stat_err below zero.
inline std::optional<FrequencyBand> significant_negative_band(const CorrelationResult& res,
                                                              double sigmas = 3.0) {
    std::optional<FrequencyBand> best;
    std::size_t best_len = 0;
    std::size_t i = 0;
    const auto& bins = res.bins;
    while (i < bins.size()) {
        if (bins[i].c + sigmas * bins[i].stat_err < 0.0) {
            std::size_t j = i;
            while (j + 1 < bins.size() && bins[j + 1].c + sigmas * bins[j + 1].stat_err < 0.0) ++j;
            if (j - i + 1 > best_len) {
                best_len = j - i + 1;
                best = FrequencyBand{bins[i].freq, bins[j].freq};
            }
            i = j + 1;
        } else {
            ++i;
        }
    }
    return best;
}

// Time-series files. Binary: one text line "fs n_samples alpha beta" then
// little-endian float64 samples interleaved a, b. Text: two columns a b.

inline void write_binary(std::ostream& os, const TimeSeriesPair& p) {
    p.validate();
    os << fmt::exact(p.fs) << ' ' << p.a.size() << ' ' << fmt::exact(p.alpha) << ' '
       << fmt::exact(p.beta) << '\n';
    std::vector<unsigned char> buf(16 * p.a.size());
    auto put = [&](std::size_t at, double v) {
        std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        for (int k = 0; k < 8; ++k) buf[at + k] = static_cast<unsigned char>(u >> (8 * k));
    };
    for (std::size_t i = 0; i < p.a.size(); ++i) {
        put(16 * i, p.a[i]);
        put(16 * i + 8, p.b[i]);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
}

inline TimeSeriesPair read_binary(std::istream& in, const std::string& name = "input") {
    std::string header;
    if (!std::getline(in, header)) throw DataError(name + ": missing header line");
    std::istringstream hs(header);
    std::string f_s, n_s, a_s, b_s, extra;
    TimeSeriesPair p;
    std::size_t n = 0;
    if (!(hs >> f_s >> n_s >> a_s >> b_s) || (hs >> extra) || !fmt::parse_double(f_s, p.fs) ||
        !fmt::parse_double(a_s, p.alpha) || !fmt::parse_double(b_s, p.beta))
        throw DataError(name + ": header must be 'fs n_samples alpha beta'");
    const auto r = std::from_chars(n_s.data(), n_s.data() + n_s.size(), n);
    if (r.ec != std::errc() || r.ptr != n_s.data() + n_s.size())
        throw DataError(name + ": bad sample count '" + n_s + "'");
    const std::streamoff data_start = in.tellg();
    std::vector<unsigned char> buf(16 * n);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != buf.size())
        throw DataError(name + ": truncated at byte offset " + std::to_string(data_start + std::streamoff(got)) +
                        "; expected " + std::to_string(buf.size()) + " data bytes");
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError(name + ": trailing data after byte offset " +
                        std::to_string(data_start + std::streamoff(buf.size())));
    auto get = [&](std::size_t at) {
        std::uint64_t u = 0;
        for (int k = 0; k < 8; ++k) u |= std::uint64_t(buf[at + k]) << (8 * k);
        return std::bit_cast<double>(u);
    };
    p.a.resize(n);
    p.b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        p.a[i] = get(16 * i);
        p.b[i] = get(16 * i + 8);
        if (!std::isfinite(p.a[i]) || !std::isfinite(p.b[i]))
            throw DataError(name + ": non-finite sample at byte offset " +
                            std::to_string(data_start + std::streamoff(16 * i)));
    }
    p.validate();
    return p;
}

inline void write_text(std::ostream& os, const TimeSeriesPair& p) {
    p.validate();
    for (std::size_t i = 0; i < p.a.size(); ++i)
        os << fmt::exact(p.a[i]) << ' ' << fmt::exact(p.b[i]) << '\n';
}

/// Two whitespace-separated columns; '#' starts a comment. Gains default to 1.
inline TimeSeriesPair read_text(std::istream& in, double fs, const std::string& name = "input") {
    TimeSeriesPair p;
    p.fs = fs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::string a, b, extra;
        if (!(ls >> a)) continue;
        double x = 0, y = 0;
        if (!(ls >> b) || (ls >> extra) || !fmt::parse_double(a, x) || !fmt::parse_double(b, y))
            throw DataError(name + ":" + std::to_string(lineno) + ": expected two numbers");
        p.a.push_back(x);
        p.b.push_back(y);
    }
    p.validate();
    return p;
}

inline void write_result_csv(std::ostream& os, const CorrelationResult& res) {
    os << "freq_hz,s_a,s_b,re_s_ab,im_s_ab,c,stat_err,r_db\n";
    const auto spec = squeezing_spectrum_from_correlation(res);
    for (std::size_t k = 0; k < res.bins.size(); ++k) {
        const auto& b = res.bins[k];
        os << fmt::num(b.freq) << ',' << fmt::num(b.s_a) << ',' << fmt::num(b.s_b) << ','
           << fmt::num(b.s_ab.real()) << ',' << fmt::num(b.s_ab.imag()) << ',' << fmt::num(b.c) << ','
           << fmt::num(b.stat_err) << ',' << fmt::num(spec[k].r_db) << '\n';
    }
}

inline void write_squeezing_csv(std::ostream& os, const std::vector<SqueezingPoint>& s) {
    os << "freq_hz,r,r_db,r_db_err,flagged\n";
    for (const auto& p : s)
        os << fmt::num(p.freq) << ',' << fmt::num(p.r) << ',' << fmt::num(p.r_db) << ','
           << fmt::num(p.db_err) << ',' << (p.flagged ? 1 : 0) << '\n';
}

}  // namespace omsqz

#endif  // OMSQZ_CORRLAB_HPP
