#ifndef OMSQZ_BUDGET_HPP
#define OMSQZ_BUDGET_HPP

// Noise budget over (quadrature, frequency) at the squeezing photodiode.
//
// Every term is a PSD relative to shot noise. The quantum term carries the
// shot floor; all other terms are excess above zero and simply add.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "omsqz/constants.hpp"
#include "omsqz/error.hpp"
#include "omsqz/format.hpp"
#include "omsqz/homodyne.hpp"
#include "omsqz/omcavity.hpp"
#include "omsqz/qspace.hpp"

namespace omsqz {

/// Labeled PSD grid. values[i * freqs.size() + j] is quadrature i, frequency j.
struct NoiseTerm {
    std::string label;
    std::vector<double> angles;  // rad, strictly increasing
    FrequencyGrid freqs;
    std::vector<double> values;

    NoiseTerm() = default;
    NoiseTerm(std::string l, std::vector<double> a, FrequencyGrid f, double fill = 0.0)
        : label(std::move(l)), angles(std::move(a)), freqs(std::move(f)),
          values(angles.size() * freqs.size(), fill) {}

    std::size_t rows() const noexcept { return angles.size(); }
    std::size_t cols() const noexcept { return freqs.size(); }
    double& at(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

    bool same_grid(const NoiseTerm& o) const { return angles == o.angles && freqs == o.freqs; }
};

/// PSD versus frequency: a power law a (f / f_ref)^k or a tabulated two-column spectrum.
class ReferenceSpectrum {
public:
    ReferenceSpectrum() = default;

    static ReferenceSpectrum power_law(double amplitude, double f_ref, double exponent) {
        if (!(amplitude >= 0) || !std::isfinite(amplitude))
            throw DomainError("reference amplitude must be finite and >= 0");
        if (!(f_ref > 0)) throw DomainError("reference frequency must be positive");
        ReferenceSpectrum s;
        s.amp_ = amplitude;
        s.f_ref_ = f_ref;
        s.exponent_ = exponent;
        return s;
    }

    static ReferenceSpectrum table(std::vector<double> f, std::vector<double> v) {
        if (f.size() != v.size() || f.empty()) throw StructuralError("reference table is empty or ragged");
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (!(v[i] >= 0) || !std::isfinite(v[i]))
                throw DataError("reference table values must be finite and >= 0");
            if (i > 0 && !(f[i] > f[i - 1]))
                throw DataError("reference table frequencies must increase");
        }
        ReferenceSpectrum s;
        s.tab_f_ = std::move(f);
        s.tab_v_ = std::move(v);
        return s;
    }

    /// Two whitespace-separated columns (Hz, PSD); '#' starts a comment.
    static ReferenceSpectrum read(std::istream& in, const std::string& name = "reference") {
        std::vector<double> f, v;
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
            f.push_back(x);
            v.push_back(y);
        }
        try {
            return table(std::move(f), std::move(v));
        } catch (const std::exception& e) {
            throw DataError(name + ": " + e.what());
        }
    }

    static ReferenceSpectrum read_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open " + path);
        return read(in, path);
    }

    bool tabulated() const noexcept { return !tab_f_.empty(); }

    /// Linear interpolation inside a table, end values held outside it.
    double operator()(double f) const {
        if (!tabulated()) return amp_ * std::pow(f / f_ref_, exponent_);
        if (f <= tab_f_.front()) return tab_v_.front();
        if (f >= tab_f_.back()) return tab_v_.back();
        const auto it = std::upper_bound(tab_f_.begin(), tab_f_.end(), f);
        const std::size_t k = std::size_t(it - tab_f_.begin());
        const double t = (f - tab_f_[k - 1]) / (tab_f_[k] - tab_f_[k - 1]);
        return tab_v_[k - 1] + t * (tab_v_[k] - tab_v_[k - 1]);
    }

    double amplitude() const noexcept { return amp_; }
    double f_ref() const noexcept { return f_ref_; }
    double exponent() const noexcept { return exponent_; }

private:
    double amp_ = 0.0;
    double f_ref_ = 1.0;
    double exponent_ = 0.0;
    std::vector<double> tab_f_, tab_v_;
};

/// Optical path from the cavity output to the squeezing photodiode.
struct DetectionParams {
    double bs1_transmission = 0.85;   // fraction of the cavity output sent to the homodyne
    BeamSplitter bs2;                 // LO combiner
    double visibility = 0.93;
    double signal_power = 58e-6;      // W at the combiner input
    double detected_power = 49e-6;    // W
    double max_lo_power = 30e-6;      // W

    void validate() const {
        if (!(bs1_transmission >= 0 && bs1_transmission <= 1))
            throw DomainError("bs1_transmission must lie in [0, 1]");
        bs2.validate();
        if (!(visibility >= 0 && visibility <= 1)) throw DomainError("visibility must lie in [0, 1]");
        if (!(signal_power >= 0)) throw DomainError("signal_power must be >= 0");
        if (!(detected_power > 0)) throw DomainError("detected_power must be positive");
        if (!(max_lo_power >= 0)) throw DomainError("max_lo_power must be >= 0");
    }

    friend bool operator==(const DetectionParams&, const DetectionParams&) = default;

    /// Power efficiency applied to the signal field before excess loss.
    double efficiency() const {
        return bs1_transmission * visibility * visibility * bs2.t() * bs2.t();
    }
};

struct ExperimentParams {
    CavityParams cavity;
    std::vector<MechanicalMode> modes = default_modes();
    EnvironmentParams env;
    DetectionParams detection;
    double wavelength() const { return cavity.wavelength; }

    friend bool operator==(const ExperimentParams&, const ExperimentParams&) = default;

    void validate() const {
        cavity.validate();
        if (modes.empty()) throw DomainError("at least one mechanical mode is required");
        for (const auto& m : modes) m.validate();
        env.validate();
        detection.validate();
    }
};

struct BudgetConfig {
    std::vector<double> angles;  // rad
    FrequencyGrid freqs;
    double excess_loss = 0.22;
    double phase_noise_ref_angle = 17.0 * constants::deg_to_rad;
    ReferenceSpectrum phase_noise = ReferenceSpectrum::power_law(0.02, 30e3, -2.0);
    ReferenceSpectrum feedback_displacement = ReferenceSpectrum::power_law(1e-37, 1.0, 0.0);  // m^2/Hz
    double rin_amplitude = 8e-9;   // 1/sqrt(Hz)
    double rin_coupling = 0.1;     // amplitude coupling of laser RIN into the photocurrent
    double dark_noise_db = -12.0;  // relative to shot
    bool technical = true;         // phase, feedback, RIN and dark terms
    unsigned threads = 1;

    static BudgetConfig with_default_grid() {
        BudgetConfig c;
        c.angles = degree_sweep(0.0, 0.5, 90);
        c.freqs = FrequencyGrid::logarithmic(10e3, 150e3, 400);
        return c;
    }

    static std::vector<double> degree_sweep(double start_deg, double step_deg, std::size_t n) {
        std::vector<double> a(n);
        for (std::size_t i = 0; i < n; ++i)
            a[i] = (start_deg + step_deg * double(i)) * constants::deg_to_rad;
        return a;
    }

    void validate() const {
        if (angles.empty() || freqs.size() == 0) throw ConfigError("budget grid is empty");
        for (std::size_t i = 0; i < angles.size(); ++i) {
            if (!std::isfinite(angles[i]) || std::abs(angles[i]) > constants::pi / 2 + 1e-12)
                throw ConfigError("quadrature sweep must lie within [-90, 90] deg");
            if (i > 0 && !(angles[i] > angles[i - 1]))
                throw ConfigError("quadrature sweep must be strictly increasing");
        }
        if (!(excess_loss >= 0 && excess_loss < 1)) throw ConfigError("excess_loss must lie in [0, 1)");
        if (!(phase_noise_ref_angle > 0 && phase_noise_ref_angle <= constants::pi / 2))
            throw ConfigError("phase-noise reference quadrature must lie in (0, 90] deg");
        if (!(rin_amplitude >= 0) || !(rin_coupling >= 0)) throw ConfigError("RIN terms must be >= 0");
        if (!std::isfinite(dark_noise_db)) throw ConfigError("dark_noise_db must be finite");
        if (threads == 0) throw ConfigError("threads must be >= 1");
    }
};

/// (1 - eps) s + eps.
inline double apply_excess_loss(double s, double eps) {
    if (!(eps >= 0 && eps < 1)) throw DomainError("excess loss must lie in [0, 1)");
    return (1.0 - eps) * s + eps;
}

inline NoiseTerm apply_excess_loss(const NoiseTerm& t, double eps) {
    NoiseTerm out = t;
    for (double& v : out.values) v = apply_excess_loss(v, eps);
    return out;
}

/// N_ref(f) sin^2(phi) / sin^2(phi_ref) at each frequency of the grid.
inline std::vector<double> phase_noise_term(const BudgetConfig& cfg, double phi) {
    const double s_ref = std::sin(cfg.phase_noise_ref_angle);
    if (!(std::abs(s_ref) > 0)) throw ConfigError("phase-noise reference quadrature must not be 0");
    const double w = std::sin(phi) * std::sin(phi) / (s_ref * s_ref);
    std::vector<double> out;
    out.reserve(cfg.freqs.size());
    for (double f : cfg.freqs) out.push_back(cfg.phase_noise(f) * w);
    return out;
}

/// Displacement PSD (m^2/Hz) seen at quadrature phi of the transmitted field, relative to shot.
inline double displacement_noise_term(double displacement_psd, const OutputResponse& r, double phi) {
    if (!(displacement_psd >= 0)) throw DomainError("displacement PSD must be >= 0");
    const Complex u = std::cos(phi) * r.per_displacement(0) + std::sin(phi) * r.per_displacement(1);
    return displacement_psd * std::norm(u);
}

inline double dark_noise_rel_shot(const BudgetConfig& cfg) { return db_to_psd(cfg.dark_noise_db); }

/// (coupling * rin / sqrt(2 h nu / P))^2.
inline double rin_rel_shot(const BudgetConfig& cfg, double detected_power, double wavelength) {
    if (!(detected_power > 0)) throw DomainError("detected power must be positive");
    const double shot_rin = std::sqrt(2.0 * photon_energy(wavelength) / detected_power);
    const double x = cfg.rin_coupling * cfg.rin_amplitude / shot_rin;
    return x * x;
}

struct FlatTerms {
    NoiseTerm rin;
    NoiseTerm dark;
};

inline FlatTerms rin_and_dark_terms(const BudgetConfig& cfg, const ExperimentParams& p) {
    return {NoiseTerm("rin", cfg.angles, cfg.freqs,
                      rin_rel_shot(cfg, p.detection.detected_power, p.wavelength())),
            NoiseTerm("dark", cfg.angles, cfg.freqs, dark_noise_rel_shot(cfg))};
}

/// Pointwise sum of independent terms.
inline NoiseTerm assemble(const std::vector<NoiseTerm>& terms) {
    if (terms.empty()) throw StructuralError("assemble: no terms");
    NoiseTerm out("total", terms.front().angles, terms.front().freqs);
    for (const auto& t : terms) {
        if (!t.same_grid(out) || t.values.size() != out.values.size())
            throw StructuralError("assemble: grid mismatch for term '" + t.label + "'");
        for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += t.values[k];
    }
    return out;
}

struct Budget {
    std::vector<NoiseTerm> terms;  // quantum, thermal, feedback, phase, rin, dark
    NoiseTerm total;
    double excess_loss = 0.0;

    const NoiseTerm& term(const std::string& label) const {
        for (const auto& t : terms)
            if (t.label == label) return t;
        throw StructuralError("no budget term '" + label + "'");
    }
};

/// Evaluate every term on the configured grid.
inline Budget build_budget(const ExperimentParams& p, const BudgetConfig& cfg) {
    p.validate();
    cfg.validate();
    const double eta = p.detection.efficiency();
    const double eps = cfg.excess_loss;
    const double keep = 1.0 - eps;

    NoiseTerm quantum("quantum", cfg.angles, cfg.freqs);
    NoiseTerm thermal("thermal", cfg.angles, cfg.freqs);
    NoiseTerm feedback("feedback", cfg.angles, cfg.freqs);
    NoiseTerm phase("phase", cfg.angles, cfg.freqs);

    auto column = [&](std::size_t j) {
        const double f = cfg.freqs[j];
        const SpectralMatrix sq = output_spectral_matrix(p.cavity, p.modes, p.env, f,
                                                         {true, false, true});
        const SpectralMatrix st = output_spectral_matrix(p.cavity, p.modes, p.env, f,
                                                         {false, true, false});
        const OutputResponse resp = output_response(p.cavity, p.modes, f);
        const double sx = cfg.technical ? cfg.feedback_displacement(f) : 0.0;
        for (std::size_t i = 0; i < cfg.angles.size(); ++i) {
            const double phi = cfg.angles[i];
            quantum.at(i, j) = apply_excess_loss(eta * project(sq, phi) + (1.0 - eta), eps);
            thermal.at(i, j) = keep * eta * std::max(0.0, project(st, phi));
            feedback.at(i, j) = keep * eta * displacement_noise_term(sx, resp, phi);
        }
    };

    const std::size_t nf = cfg.freqs.size();
    const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.threads, unsigned(nf)));
    if (nthreads == 1) {
        for (std::size_t j = 0; j < nf; ++j) column(j);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t j = t; j < nf; j += nthreads) column(j);
            });
    }

    if (cfg.technical) {
        for (std::size_t i = 0; i < cfg.angles.size(); ++i) {
            const auto row = phase_noise_term(cfg, cfg.angles[i]);
            for (std::size_t j = 0; j < nf; ++j) phase.at(i, j) = row[j];
        }
    }
    FlatTerms flat = cfg.technical
                         ? rin_and_dark_terms(cfg, p)
                         : FlatTerms{NoiseTerm("rin", cfg.angles, cfg.freqs),
                                     NoiseTerm("dark", cfg.angles, cfg.freqs)};

    Budget b;
    b.excess_loss = eps;
    b.terms = {std::move(quantum), std::move(thermal), std::move(feedback),
               std::move(phase), std::move(flat.rin), std::move(flat.dark)};
    b.total = assemble(b.terms);
    return b;
}

/// Technical terms off and excess loss reduced to `eps`.
inline Budget scenario_expected(const ExperimentParams& p, BudgetConfig cfg, double eps = 0.0) {
    cfg.technical = false;
    cfg.excess_loss = eps;
    return build_budget(p, cfg);
}

/// Sum of squared dB residuals between (1 - eps) budget + eps and measured.
inline double excess_loss_cost(const NoiseTerm& measured, const NoiseTerm& budget, double eps) {
    double sum = 0.0;
    for (std::size_t k = 0; k < measured.values.size(); ++k) {
        const double r = std::log10(apply_excess_loss(budget.values[k], eps)) -
                         std::log10(measured.values[k]);
        sum += r * r;
    }
    return 100.0 * sum;
}

/// Scalar excess loss minimizing the dB misfit, searched over [0, 0.9].
inline double fit_excess_loss(const NoiseTerm& measured, const NoiseTerm& budget_without_loss) {
    if (!measured.same_grid(budget_without_loss) ||
        measured.values.size() != budget_without_loss.values.size())
        throw StructuralError("fit_excess_loss: grid mismatch");
    if (measured.values.empty()) throw DataError("fit_excess_loss: empty grid");
    for (std::size_t k = 0; k < measured.values.size(); ++k) {
        const double m = measured.values[k], b = budget_without_loss.values[k];
        if (!std::isfinite(m) || !std::isfinite(b)) throw DataError("fit_excess_loss: non-finite input");
        if (!(m > 0) || !(b > 0)) throw DataError("fit_excess_loss: values must be positive");
    }
    constexpr double hi = 0.9;
    constexpr int n_scan = 901;
    auto cost = [&](double e) { return excess_loss_cost(measured, budget_without_loss, e); };
    int best = 0;
    double best_cost = cost(0.0);
    for (int k = 1; k < n_scan; ++k) {
        const double c = cost(hi * k / (n_scan - 1));
        if (c < best_cost) {
            best_cost = c;
            best = k;
        }
    }
    const double step = hi / (n_scan - 1);
    double a = std::max(0.0, (best - 1) * step);
    double b = std::min(hi, (best + 1) * step);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - g * (b - a), x2 = a + g * (b - a);
    double c1 = cost(x1), c2 = cost(x2);
    while (b - a > 1e-7) {
        if (c1 < c2) {
            b = x2;
            x2 = x1;
            c2 = c1;
            x1 = b - g * (b - a);
            c1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            c1 = c2;
            x2 = a + g * (b - a);
            c2 = cost(x2);
        }
    }
    double x = 0.5 * (a + b);
    // The bracket never contains a lower scan point, but an endpoint may win.
    if (cost(best * step) < cost(x)) x = best * step;
    return x;
}

struct ContourPoint {
    double freq = 0.0;
    std::optional<double> lower;  // rad
    std::optional<double> upper;  // rad
};

using ContourResult = std::vector<ContourPoint>;

/// Per frequency, the quadratures where the squeezed region around the minimum meets total = 1.
inline ContourResult shot_noise_contour(const NoiseTerm& total) {
    ContourResult out;
    out.reserve(total.cols());
    const std::size_t n = total.rows();
    for (std::size_t j = 0; j < total.cols(); ++j) {
        ContourPoint p;
        p.freq = total.freqs[j];
        std::size_t imin = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (total.at(i, j) < total.at(imin, j)) imin = i;
        if (n > 0 && total.at(imin, j) < 1.0) {
            auto cross = [&](std::size_t in, std::size_t outside) {
                const double a = total.at(in, j) - 1.0;
                const double b = total.at(outside, j) - 1.0;
                const double t = a / (a - b);
                return total.angles[in] + t * (total.angles[outside] - total.angles[in]);
            };
            std::size_t lo = imin;
            while (lo > 0 && total.at(lo - 1, j) < 1.0) --lo;
            if (lo > 0) p.lower = cross(lo, lo - 1);
            std::size_t hi = imin;
            while (hi + 1 < n && total.at(hi + 1, j) < 1.0) ++hi;
            if (hi + 1 < n) p.upper = cross(hi, hi + 1);
        }
        out.push_back(p);
    }
    return out;
}

struct Extremum {
    double db = 0.0;      // total at the minimum, dB rel. shot
    double angle = 0.0;   // rad
    double freq = 0.0;    // Hz
};

inline Extremum minimum_of(const NoiseTerm& t) {
    if (t.values.empty()) throw StructuralError("minimum_of: empty grid");
    const auto it = std::min_element(t.values.begin(), t.values.end());
    const std::size_t k = std::size_t(it - t.values.begin());
    return {psd_to_db(*it), t.angles[k / t.cols()], t.freqs[k % t.cols()]};
}

/// Lowest and highest frequency where row i lies below shot noise, if any.
inline std::optional<std::pair<double, double>> squeezed_span(const NoiseTerm& t, std::size_t i) {
    std::optional<std::pair<double, double>> span;
    for (std::size_t j = 0; j < t.cols(); ++j) {
        if (t.at(i, j) < 1.0) {
            if (!span) span = std::pair{t.freqs[j], t.freqs[j]};
            span->second = t.freqs[j];
        }
    }
    return span;
}

/// Cells below this are written at the floor so every output stays finite.
inline constexpr double kDbFloor = -300.0;

inline void write_grid_csv(std::ostream& os, const NoiseTerm& t) {
    os << "quadrature_deg";
    for (double f : t.freqs) os << ',' << fmt::num(f);
    os << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
        os << fmt::num(t.angles[i] * constants::rad_to_deg);
        for (std::size_t j = 0; j < t.cols(); ++j) {
            const double v = t.at(i, j);
            os << ',' << fmt::num(v > 0 ? std::max(kDbFloor, psd_to_db(v)) : kDbFloor);
        }
        os << '\n';
    }
}

inline void write_contour_csv(std::ostream& os, const ContourResult& c) {
    os << "freq_hz,lower_deg,upper_deg\n";
    for (const auto& p : c) {
        os << fmt::num(p.freq) << ',';
        if (p.lower) os << fmt::num(*p.lower * constants::rad_to_deg);
        os << ',';
        if (p.upper) os << fmt::num(*p.upper * constants::rad_to_deg);
        os << '\n';
    }
}

/// Inverse of write_grid_csv (values back in linear PSD).
inline NoiseTerm read_grid_csv(std::istream& in, const std::string& label = "measured") {
    std::string line;
    std::size_t lineno = 0;
    auto split = [&](const std::string& s) {
        std::vector<double> v;
        std::stringstream ss(s);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first && lineno == 1) {
                first = false;
                continue;
            }
            first = false;
            double x = 0;
            if (!fmt::parse_double(cell, x))
                throw DataError(label + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            v.push_back(x);
        }
        return v;
    };
    if (!std::getline(in, line)) throw DataError(label + ": empty grid file");
    ++lineno;
    const auto freqs = split(line);
    std::vector<double> angles, values;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split(line);
        if (row.size() != freqs.size() + 1)
            throw DataError(label + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(freqs.size() + 1) + " cells");
        angles.push_back(row[0] * constants::deg_to_rad);
        for (std::size_t j = 1; j < row.size(); ++j) values.push_back(db_to_psd(row[j]));
    }
    NoiseTerm t;
    t.label = label;
    t.angles = std::move(angles);
    try {
        t.freqs = FrequencyGrid(freqs);
    } catch (const std::exception& e) {
        throw DataError(label + ": " + e.what());
    }
    t.values = std::move(values);
    return t;
}

/// Copy of `t` with independent multiplicative Gaussian noise of relative size `rms`.
inline NoiseTerm with_multiplicative_noise(const NoiseTerm& t, double rms, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, rms);
    NoiseTerm out = t;
    for (double& v : out.values) v *= std::max(1e-6, 1.0 + g(rng));
    return out;
}

}  // namespace omsqz

#endif  // OMSQZ_BUDGET_HPP
