#ifndef OMSQZ_COMMANDS_HPP
#define OMSQZ_COMMANDS_HPP

// Command implementations behind the omsqz executable. Each returns the
// process exit code; diagnostics go to the supplied streams.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "omsqz/budget.hpp"
#include "omsqz/config.hpp"
#include "omsqz/corrlab.hpp"
#include "omsqz/homodyne.hpp"
#include "omsqz/omcavity.hpp"
#include "omsqz/qspace.hpp"

namespace omsqz {

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot write " + p.string());
    return os;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
    auto os = open_out(p);
    os << j.dump(2) << '\n';
    if (!os) throw DataError("write failed: " + p.string());
}

inline bool all_finite(const NoiseTerm& t) {
    for (double v : t.values)
        if (!std::isfinite(v)) return false;
    return true;
}

inline double r9(double v) { return fmt::round9(v); }

}  // namespace detail

struct BudgetRun {
    Budget budget;
    ContourResult contour;
    Extremum best;
    std::optional<double> fitted_loss;
};

/// Budget for the configured scenario; no files written.
inline BudgetRun run_budget(const RunConfig& cfg) {
    validate(cfg);
    BudgetConfig bc = make_budget_config(cfg);
    BudgetRun r;
    if (cfg.run.scenario == "expected")
        r.budget = scenario_expected(cfg.experiment, bc, cfg.budget.expected_excess_loss);
    else
        r.budget = build_budget(cfg.experiment, bc);
    r.contour = shot_noise_contour(r.budget.total);
    r.best = minimum_of(r.budget.total);
    if (!cfg.budget.measured_grid.empty()) {
        std::ifstream in(cfg.budget.measured_grid);
        if (!in) throw DataError("cannot open " + cfg.budget.measured_grid);
        const NoiseTerm measured = read_grid_csv(in, cfg.budget.measured_grid);
        BudgetConfig mc = bc;
        mc.angles = measured.angles;
        mc.freqs = measured.freqs;
        mc.excess_loss = 0.0;
        NoiseTerm model = build_budget(cfg.experiment, mc).total;
        r.fitted_loss = fit_excess_loss(measured, model);
    }
    return r;
}

inline int cmd_budget(const RunConfig& cfg, std::ostream& log, bool quiet) {
    const BudgetRun r = run_budget(cfg);
    const std::filesystem::path out(cfg.run.out);
    std::filesystem::create_directories(out);
    bool finite = detail::all_finite(r.budget.total);
    for (const auto& t : r.budget.terms) {
        finite = finite && detail::all_finite(t);
        auto os = detail::open_out(out / ("budget_" + t.label + ".csv"));
        write_grid_csv(os, t);
    }
    {
        auto os = detail::open_out(out / "budget_total.csv");
        write_grid_csv(os, r.budget.total);
    }
    {
        auto os = detail::open_out(out / "contour.csv");
        write_contour_csv(os, r.contour);
    }

    const auto& p = cfg.experiment;
    nlohmann::ordered_json j;
    j["scenario"] = cfg.run.scenario;
    j["max_squeezing_db"] = detail::r9(-r.best.db);
    j["quadrature_deg"] = detail::r9(r.best.angle * constants::rad_to_deg);
    j["frequency_hz"] = detail::r9(r.best.freq);
    j["excess_loss"] = detail::r9(r.budget.excess_loss);
    if (r.fitted_loss) j["fitted_excess_loss"] = detail::r9(*r.fitted_loss);
    j["finesse"] = detail::r9(finesse(p.cavity));
    j["linewidth_hwhm_hz"] = detail::r9(linewidth_hwhm(p.cavity));
    j["escape_efficiency"] = detail::r9(escape_efficiency(p.cavity));
    j["spring_resonance_hz"] = detail::r9(spring_resonance(p.cavity, p.modes.front()));
    j["displacement_null_deg"] = detail::r9(displacement_null(p.cavity, p.modes, r.best.freq).degrees());
    const std::size_t row = std::size_t(
        std::find(r.budget.total.angles.begin(), r.budget.total.angles.end(), r.best.angle) -
        r.budget.total.angles.begin());
    if (auto span = squeezed_span(r.budget.total, row)) {
        j["squeezed_band_hz"] = {detail::r9(span->first), detail::r9(span->second)};
    } else {
        j["squeezed_band_hz"] = nullptr;
    }
    finite = finite && std::isfinite(r.best.db);
    detail::write_json(out / "summary.json", j);

    if (!quiet) {
        log << "scenario " << cfg.run.scenario << ": max squeezing " << fmt::num(-r.best.db)
            << " dB at " << fmt::num(r.best.angle * constants::rad_to_deg) << " deg, "
            << fmt::num(r.best.freq) << " Hz\n";
        if (r.fitted_loss) log << "fitted excess loss " << fmt::num(*r.fitted_loss) << '\n';
        log << "wrote " << out.string() << '\n';
    }
    return finite ? 0 : 1;
}

/// Relative noise of the detected beam at one quadrature, excluding detector dark noise.
inline RelativeNoise budget_relative_noise(const RunConfig& cfg, double quadrature_deg) {
    BudgetConfig bc = make_budget_config(cfg);
    bc.angles = {quadrature_deg * constants::deg_to_rad};
    Budget b = cfg.run.scenario == "expected"
                   ? scenario_expected(cfg.experiment, bc, cfg.budget.expected_excess_loss)
                   : build_budget(cfg.experiment, bc);
    const NoiseTerm& dark = b.term("dark");
    std::vector<double> f(b.total.freqs.points()), v(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) v[j] = b.total.at(0, j) - dark.at(0, j);
    const ReferenceSpectrum table = ReferenceSpectrum::table(std::move(f), std::move(v));
    return [table](double hz) { return table(hz); };
}

struct CorrRun {
    CorrelationResult result;
    std::vector<SqueezingPoint> spectrum;
    std::optional<FrequencyBand> band;
};

inline CorrRun run_corr(const RunConfig& cfg) {
    validate(cfg);
    const auto& k = cfg.corr;
    const double dark = db_to_psd(k.dark_db);
    TimeSeriesPair pair;
    DarkNoise dn{dark, dark, std::nullopt, std::nullopt};
    if (k.mode == "synthesize") {
        const RelativeNoise r = budget_relative_noise(cfg, k.quadrature_deg);
        pair = synthesize_pair(r, k.fs, k.n_samples, k.alpha, k.beta, dark, dark, cfg.run.seed);
        if (k.measure_dark) {
            const TimeSeriesPair d =
                synthesize_dark(k.fs, k.n_samples, k.alpha, k.beta, dark, dark, ~cfg.run.seed);
            const auto ds = cross_spectrum(d, k.estimator);
            dn.measured_a = ds.s_a;
            dn.measured_b = ds.s_b;
        }
    } else {
        if (k.input_format == "binary") {
            std::ifstream in(k.input, std::ios::binary);
            if (!in) throw DataError("cannot open " + k.input);
            pair = read_binary(in, k.input);
        } else {
            std::ifstream in(k.input);
            if (!in) throw DataError("cannot open " + k.input);
            pair = read_text(in, k.fs, k.input);
        }
    }
    CorrRun r;
    r.result = correlate(pair, k.estimator, dn);
    r.spectrum = squeezing_spectrum_from_correlation(r.result);
    r.band = significant_negative_band(r.result, k.sigmas);
    return r;
}

inline int cmd_corr(const RunConfig& cfg, std::ostream& log, bool quiet) {
    const CorrRun r = run_corr(cfg);
    const std::filesystem::path out(cfg.run.out);
    std::filesystem::create_directories(out);
    {
        auto os = detail::open_out(out / "correlation.csv");
        write_result_csv(os, r.result);
    }
    {
        auto os = detail::open_out(out / "squeezing_spectrum.csv");
        write_squeezing_csv(os, r.spectrum);
    }
    bool finite = true;
    double eta_sum = 0.0;
    for (const auto& b : r.result.bins) {
        finite = finite && std::isfinite(b.c) && std::isfinite(b.s_a) && std::isfinite(b.s_b);
        eta_sum += b.eta;
    }
    nlohmann::ordered_json j;
    j["mode"] = cfg.corr.mode;
    j["seed"] = cfg.run.seed;
    j["n_averages"] = r.result.n_averages;
    j["n_effective"] = detail::r9(r.result.n_effective);
    j["mean_efficiency"] =
        detail::r9(r.result.bins.empty() ? 0.0 : eta_sum / double(r.result.bins.size()));
    if (r.band)
        j["negative_band_hz"] = {detail::r9(r.band->lo), detail::r9(r.band->hi)};
    else
        j["negative_band_hz"] = nullptr;
    detail::write_json(out / "corr_summary.json", j);
    if (!quiet) {
        if (r.band)
            log << "significant negative correlation from " << fmt::num(r.band->lo) << " Hz to "
                << fmt::num(r.band->hi) << " Hz\n";
        else
            log << "significant negative correlation: none\n";
        log << "wrote " << out.string() << '\n';
    }
    return finite ? 0 : 1;
}

struct SelfCheck {
    std::string name;
    std::function<bool(double)> run;  // argument: perturbation added to the checked quantity
};

inline std::vector<SelfCheck> self_checks() {
    using constants::pi;
    std::vector<SelfCheck> v;
    v.push_back({"qspace.rotation_preserves_eigenvalues", [](double d) {
                     const SpectralMatrix s = rotate(SpectralMatrix::diagonal(0.3, 2.5), 0.4);
                     const auto e0 = extremal_quadratures(SpectralMatrix::diagonal(0.3, 2.5));
                     for (double th : {0.1, 0.7, 1.3, 2.9}) {
                         const auto e = extremal_quadratures(rotate(s, th));
                         if (std::abs(e.psd_min + d - e0.psd_min) > 1e-10) return false;
                         if (std::abs(e.psd_max - e0.psd_max) > 1e-10) return false;
                     }
                     return true;
                 }});
    v.push_back({"qspace.projection_covariance", [](double d) {
                     const SpectralMatrix s = rotate(SpectralMatrix::diagonal(0.5, 2.0), 0.3);
                     for (double th : {0.2, 1.1})
                         for (double phi : {0.0, 0.4, 2.0})
                             if (std::abs(project(rotate(s, th), phi) + d - project(s, phi - th)) > 1e-10)
                                 return false;
                     return true;
                 }});
    v.push_back({"qspace.extremal_recovers_angle", [](double d) {
                     for (double th : {0.2146, 1.0, 2.5}) {
                         const auto e = extremal_quadratures(rotate(SpectralMatrix::diagonal(0.5, 2.0), th));
                         const double diff = std::remainder(e.phi_min.radians() + d - th, pi);
                         if (std::abs(diff) > 1e-9) return false;
                     }
                     return true;
                 }});
    v.push_back({"omcavity.purity", [](double d) {
                     CavityParams c;
                     c.t_in_ppm = 0;
                     c.loss_ppm = 0;
                     std::vector<MechanicalMode> modes{{50e-9, 876.0, 1e15, DampingModel::structural}};
                     EnvironmentParams env{0.0};
                     for (double f : {1e3, 45e3, 300e3}) {
                         const auto e = extremal_quadratures(output_spectral_matrix(c, modes, env, f));
                         if (std::abs(e.psd_min * e.psd_max + d - 1.0) > 1e-9) return false;
                     }
                     return true;
                 }});
    v.push_back({"omcavity.heisenberg_with_loss", [](double d) {
                     const CavityParams c;
                     EnvironmentParams env{0.0};
                     // far above the linewidth the output is vacuum and the bound is tight
                     for (double f : {1e3, 45e3, 300e3, 50e6}) {
                         const auto e = extremal_quadratures(output_spectral_matrix(c, default_modes(), env, f));
                         if (e.psd_min * e.psd_max - d < 1.0 - 1e-9) return false;
                     }
                     return true;
                 }});
    v.push_back({"homodyne.shot_in_shot_out", [](double d) {
                     const BeamSplitter bs;
                     for (double phi : {0.0, 0.3, 1.2})
                         for (double vis : {1.0, 0.93, 0.5})
                             if (std::abs(detected_psd(SpectralMatrix::identity(), phi, bs, vis) + d - 1.0) > 1e-12)
                                 return false;
                     return true;
                 }});
    v.push_back({"homodyne.lo_round_trip", [](double d) {
                     const BeamSplitter bs;
                     const double es = std::sqrt(58e-6);
                     for (double deg : {5.0, 12.3, 17.0, 30.0}) {
                         const auto s = lo_power_for_quadrature(QuadratureAngle::from_degrees(deg), 49e-6, es, bs);
                         const auto r = resultant({es, std::sqrt(s.lo_power / bs.power_reflectivity), s.theta, 1.0}, bs);
                         if (std::abs(r.phi_s.degrees() + d - deg) > 1e-7) return false;
                         if (std::abs(r.detected_power / 49e-6 - 1.0) > 1e-9) return false;
                     }
                     return true;
                 }});
    v.push_back({"budget.excess_loss_contraction", [](double d) {
                     for (double s : {0.3, 0.9, 1.0, 2.5})
                         for (double eps : {0.0, 0.22, 0.7})
                             if (std::abs(std::abs(apply_excess_loss(s, eps) + d - 1.0) -
                                          (1.0 - eps) * std::abs(s - 1.0)) > 1e-12)
                                 return false;
                     return true;
                 }});
    v.push_back({"budget.phase_noise_sin2", [](double d) {
                     BudgetConfig c;
                     c.freqs = FrequencyGrid::linear(1e4, 1e5, 5);
                     const auto n90 = phase_noise_term(c, pi / 2);
                     for (double phi : {0.1, 0.5, 1.0}) {
                         const auto n = phase_noise_term(c, phi);
                         for (std::size_t j = 0; j < n.size(); ++j)
                             if (std::abs(n[j] / n90[j] + d - std::sin(phi) * std::sin(phi)) > 1e-12)
                                 return false;
                     }
                     return true;
                 }});
    v.push_back({"budget.loss_fit_self_consistent", [](double d) {
                     NoiseTerm b("model", BudgetConfig::degree_sweep(0, 5, 10), FrequencyGrid::linear(1e4, 1e5, 8));
                     for (std::size_t k = 0; k < b.values.size(); ++k) b.values[k] = 0.5 + 0.25 * double(k % 7);
                     for (double eps : {0.0, 0.22, 0.8}) {
                         const double fit = fit_excess_loss(apply_excess_loss(b, eps), b);
                         if (std::abs(fit + d - eps) > 1e-4) return false;
                     }
                     return true;
                 }});
    v.push_back({"corrlab.c_r_round_trip", [](double d) {
                     for (double r = 1e-6; r <= 1e6; r *= 3.7) {
                         const double back = infer_relative_noise(correlation_from_relative_noise(r));
                         if (std::abs(back / r + d - 1.0) > 1e-9) return false;
                     }
                     return true;
                 }});
    v.push_back({"corrlab.efficiency_bounds", [](double d) {
                     if (efficiency(0, 0, 0.5) + d != 1.0) return false;
                     for (double sd : {1e-3, 0.0631, 1.0})
                         if (!(efficiency(sd, sd, 1.0) + d < 1.0)) return false;
                     return true;
                 }});
    v.push_back({"corrlab.gain_independence", [](double d) {
                     auto p = synthesize_pair([](double) { return 0.6; }, 65536, 1 << 16, 1.0, 1.0, 0.0, 0.0, 7);
                     EstimatorConfig e;
                     e.segment_length = 512;
                     const auto r1 = correlate(p, e);
                     for (double& x : p.a) x *= 3.0;
                     for (double& x : p.b) x *= 0.2;
                     const auto r2 = correlate(p, e);
                     for (std::size_t k = 0; k < r1.bins.size(); ++k)
                         if (std::abs(r1.bins[k].c + d - r2.bins[k].c) > 1e-12) return false;
                     return true;
                 }});
    v.push_back({"corrlab.sign_test", [](double d) {
                     auto p = synthesize_pair([](double f) { return f > 8e3 && f < 16e3 ? 0.5 : 2.0; }, 65536,
                                              1 << 19, 1.0, 1.0, 0.0631, 0.0631, 3);
                     EstimatorConfig e;
                     e.segment_length = 512;
                     const auto r = correlate(p, e);
                     for (const auto& b : r.bins) {
                         const bool inside = b.freq > 8.5e3 && b.freq < 15.5e3;
                         const bool outside = b.freq < 7.5e3 || b.freq > 16.5e3;
                         if (inside && !(b.s_ab.real() + d < 0)) return false;
                         if (outside && !(b.s_ab.real() - d > 0)) return false;
                     }
                     return true;
                 }});
    v.push_back({"corrlab.thread_independence", [](double d) {
                     const auto p = synthesize_pair([](double) { return 0.8; }, 65536, 1 << 17, 1.0, 1.0, 0.0, 0.0, 11);
                     EstimatorConfig e;
                     e.segment_length = 256;
                     const auto a = cross_spectrum(p, e);
                     e.threads = 3;
                     const auto b = cross_spectrum(p, e);
                     for (std::size_t k = 0; k < a.s_ab.size(); ++k)
                         if (a.s_ab[k] != b.s_ab[k] + d || a.s_a[k] != b.s_a[k]) return false;
                     return true;
                 }});
    v.push_back({"cli.config_round_trip", [](double d) {
                     RunConfig c;
                     c.experiment.cavity.detuning = 0.1 + 0.2;
                     c.budget.excess_loss = 1.0 / 3.0;
                     std::istringstream in(serialize_config(c));
                     RunConfig back = parse_config(in);
                     back.budget.excess_loss += d;
                     return back == c;
                 }});
    return v;
}

/// Runs every named invariant; `perturb` offsets the checked quantity of the matching check.
inline int cmd_selftest(std::ostream& log, bool quiet, const std::string& perturb = {}) {
    const auto start = std::chrono::steady_clock::now();
    int failures = 0;
    bool matched = perturb.empty();
    for (const auto& c : self_checks()) {
        const bool hit = c.name == perturb;
        matched = matched || hit;
        bool ok = false;
        std::string err;
        try {
            ok = c.run(hit ? 1e-3 : 0.0);
        } catch (const std::exception& e) {
            err = e.what();
        }
        if (!ok) ++failures;
        if (!quiet || !ok)
            log << (ok ? "PASS " : "FAIL ") << c.name << (err.empty() ? "" : " (" + err + ")") << '\n';
    }
    if (!matched) {
        log << "unknown check for --perturb: " << perturb << '\n';
        return 2;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!quiet) log << failures << " failed, " << fmt::num(secs) << " s\n";
    return failures == 0 ? 0 : 1;
}

}  // namespace omsqz

#endif  // OMSQZ_COMMANDS_HPP
