// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "omsqz/commands.hpp"

using namespace omsqz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool ok = o.ok && in_time;
    if (!ok) ++failures;
    char t[64];
    std::snprintf(t, sizeof t, "%.3f s", secs);
    std::cout << (ok ? "PASS " : "FAIL ") << id << " " << name << ": " << o.detail << " [" << t
              << (in_time ? "" : " over limit") << "]" << std::endl;
}

std::string f(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double deg(double rad) { return rad * constants::rad_to_deg; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

bool same_outputs(const fs::path& a, const fs::path& b, const std::string& ext, std::string& why) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().extension() != ext) continue;
        ++n;
        if (slurp(e.path()) != slurp(b / e.path().filename())) {
            why = e.path().filename().string() + " differs";
            return false;
        }
    }
    why = std::to_string(n) + " " + ext + " files identical";
    return n > 0;
}

const std::vector<MechanicalMode> kFundamental{MechanicalMode{}};

}  // namespace

int main() {
    const RunConfig defaults;
    const CavityParams cavity = defaults.experiment.cavity;

    criterion(1, "cavity consistency", 1.0, [&] {
        const double fin = finesse(cavity);
        const double gamma = linewidth_hwhm(cavity);
        const bool ok = std::abs(round_trip_loss(cavity) - 550e-6) < 1e-15 && cavity.length == 0.01 && fin >= 11000 &&
                        fin <= 12000 && gamma >= 620e3 && gamma <= 680e3;
        return Outcome{ok, "finesse " + f(fin, 6) + ", HWHM " + f(gamma / 1e3, 5) + " kHz"};
    });

    criterion(2, "optical spring", 1.0, [&] {
        const double fs = spring_resonance(cavity, kFundamental.front());
        CavityParams milli = cavity;
        milli.p_circ = 0.26;
        const double fm = spring_resonance(milli, kFundamental.front());
        return Outcome{std::abs(fs / 145e3 - 1.0) <= 0.3,
                       f(fs / 1e3, 4) + " kHz at 260 W (" + f(fm / 1e3, 3) + " kHz at 260 mW)"};
    });

    criterion(3, "purity", 1.0, [&] {
        CavityParams lossless = cavity;
        lossless.t_in_ppm = 0;
        lossless.loss_ppm = 0;
        const std::vector<MechanicalMode> ideal{{50e-9, 876.0, 1e15, DampingModel::structural}};
        const auto grid = FrequencyGrid::logarithmic(1e3, 5e5, 200);
        double worst_pure = 0.0, lowest_lossy = 1e300;
        for (double hz : grid) {
            const auto e = extremal_quadratures(output_spectral_matrix(lossless, ideal, EnvironmentParams{0.0}, hz));
            worst_pure = std::max(worst_pure, std::abs(e.psd_min * e.psd_max - 1.0));
            for (double temp : {0.0, 295.0}) {
                const auto l = extremal_quadratures(
                    output_spectral_matrix(cavity, defaults.experiment.modes, EnvironmentParams{temp}, hz));
                lowest_lossy = std::min(lowest_lossy, l.psd_min * l.psd_max);
            }
        }
        return Outcome{worst_pure <= 1e-9 && lowest_lossy >= 1.0 - 1e-9,
                       "lossless |min*max - 1| <= " + f(worst_pure, 3) + ", lossy min*max >= " + f(lowest_lossy, 6)};
    });

    BudgetRun def;
    criterion(4, "budget reproduction", 30.0, [&] {
        def = run_budget(defaults);
        const NoiseTerm& t = def.budget.total;
        const double sqz = -def.best.db;
        const double ang = deg(def.best.angle);
        bool region = false;
        double region_deg = 0;
        for (std::size_t i = 0; i < t.rows() && !region; ++i) {
            const double a = deg(t.angles[i]);
            if (a < 10.0 - 1e-9 || a > 17.0 + 1e-9) continue;
            bool all = true;
            for (std::size_t j = 0; j < t.cols(); ++j)
                if (t.freqs[j] >= 30e3 && t.freqs[j] <= 60e3 && !(t.at(i, j) < 1.0)) all = false;
            if (all) {
                region = true;
                region_deg = a;
            }
        }
        const bool ok = t.rows() == 90 && t.cols() == 400 && std::abs(sqz - 0.7) <= 0.3 &&
                        std::abs(ang - 12.3) <= 5.0 && def.best.freq >= 35e3 && def.best.freq <= 55e3 && region;
        return Outcome{ok, f(sqz, 3) + " dB at " + f(ang, 3) + " deg, " + f(def.best.freq / 1e3, 3) +
                               " kHz; 30-60 kHz squeezed " +
                               (region ? "at " + f(region_deg, 3) + " deg" : std::string("nowhere in 10-17 deg"))};
    });

    criterion(5, "contour flatness", 30.0, [&] {
        std::vector<double> up;
        std::size_t missing = 0;
        for (const auto& p : def.contour) {
            if (p.freq < 20e3 || p.freq > 100e3) continue;
            if (p.upper)
                up.push_back(deg(*p.upper));
            else
                ++missing;
        }
        double mean = 0, var = 0;
        for (double v : up) mean += v;
        mean /= double(up.size());
        for (double v : up) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / double(up.size()));
        // no crossing where nothing is squeezed (27 kHz mode, above ~98 kHz)
        return Outcome{up.size() > 10 && sd < 1.0,
                       "upper crossing " + f(mean, 4) + " deg, std " + f(sd, 3) + " deg over " +
                           std::to_string(up.size()) + " frequencies, " + std::to_string(missing) +
                           " without squeezing"};
    });

    criterion(6, "displacement null", 5.0, [&] {
        BudgetConfig bc = make_budget_config(defaults);
        bc.angles = BudgetConfig::degree_sweep(10.0, 0.01, 1501);
        bc.freqs = FrequencyGrid::logarithmic(10e3, 70e3, 25);
        const Budget b = build_budget(defaults.experiment, bc);
        const NoiseTerm& th = b.term("thermal");
        const NoiseTerm& fb = b.term("feedback");
        const NoiseTerm& q = b.term("quantum");
        double lo = 1e9, hi = -1e9, worst_q = 0, worst_split = 0;
        for (std::size_t j = 0; j < th.cols(); ++j) {
            std::size_t it = 0, ifb = 0;
            for (std::size_t i = 1; i < th.rows(); ++i) {
                if (th.at(i, j) < th.at(it, j)) it = i;
                if (fb.at(i, j) < fb.at(ifb, j)) ifb = i;
            }
            worst_split = std::max(worst_split, std::abs(deg(bc.angles[it] - bc.angles[ifb])));
            lo = std::min(lo, deg(bc.angles[it]));
            hi = std::max(hi, deg(bc.angles[it]));
            worst_q = std::max(worst_q, std::abs(q.at(it, j) - 1.0));
        }
        // beyond the band, approaching the spring, for the record
        BudgetConfig hc = bc;
        hc.freqs = FrequencyGrid::linear(100e3, 150e3, 2);
        hc.angles = {displacement_null(cavity, defaults.experiment.modes, 150e3).radians(),
                     displacement_null(cavity, defaults.experiment.modes, 100e3).radians()};
        const Budget hb = build_budget(defaults.experiment, hc);
        const NoiseTerm& hq = hb.term("quantum");
        const bool ok = worst_split <= 0.011 && lo >= 14.0 && hi <= 20.0 && worst_q <= 0.02;
        return Outcome{ok, "thermal/feedback null " + f(lo, 4) + "-" + f(hi, 4) + " deg (max split " +
                               f(worst_split, 2) + "), quantum at null within " + f(worst_q, 3) +
                               " of shot over 10-70 kHz (" + f(hq.at(1, 0), 3) + " at 100 kHz, " +
                               f(hq.at(0, 1), 3) + " at 150 kHz)"};
    });

    criterion(7, "expected-squeezing scenario", 30.0, [&] {
        RunConfig c = defaults;
        c.run.scenario = "expected";
        const BudgetRun r = run_budget(c);
        const double sqz = -r.best.db;
        return Outcome{std::abs(sqz - 1.5) <= 0.5, f(sqz, 3) + " dB at " + f(deg(r.best.angle), 3) + " deg, " +
                                                       f(r.best.freq / 1e3, 4) + " kHz"};
    });

    criterion(8, "loss-fit oracle", 10.0, [&] {
        RunConfig c = defaults;
        c.budget.excess_loss = 0.0;
        const NoiseTerm model = run_budget(c).budget.total;
        bool ok = true;
        std::string d;
        std::uint64_t seed = 1;
        for (double eps : {0.05, 0.22, 0.5}) {
            const NoiseTerm clean = apply_excess_loss(model, eps);
            const double e_clean = fit_excess_loss(clean, model);
            const double e_noisy = fit_excess_loss(with_multiplicative_noise(clean, 0.05, seed++), model);
            ok = ok && std::abs(e_clean - eps) <= 1e-3 && std::abs(e_noisy - eps) <= 0.02;
            d += (d.empty() ? "" : "; ") + f(eps, 2) + " -> " + f(e_clean, 6) + " clean, " + f(e_noisy, 4) + " noisy";
        }
        return Outcome{ok, d};
    });

    criterion(9, "correlation math", 1.0, [&] {
        double worst_c = 0, worst_r = 0;
        for (int k = 0; k <= 12000; ++k) {
            const double r = std::pow(10.0, -6.0 + 1e-3 * k);
            const double c = correlation_from_relative_noise(r);
            const double back = infer_relative_noise(c);
            worst_c = std::max(worst_c, std::abs(correlation_from_relative_noise(back) - c));
            worst_r = std::max(worst_r, std::abs(back / r - 1.0));
        }
        const bool anchors = correlation_from_relative_noise(std::numeric_limits<double>::infinity()) != 0 &&
                             normalized_correlation(1, 1, {1, 0}) == 1.0 && infer_relative_noise(0.0) == 1.0 &&
                             correlation_from_relative_noise(1.0) == 0.0 &&
                             correlation_from_relative_noise(0.0) == -1.0 && infer_relative_noise(-1.0) == 0.0 &&
                             normalized_correlation(1, 1, {-1, 0}) == -1.0 &&
                             correlation_from_relative_noise(1e300) == 1.0;
        return Outcome{anchors && worst_c <= 1e-12,
                       "C round trip " + f(worst_c, 3) + " over R in [1e-6, 1e6] (R relative " + f(worst_r, 3) +
                           ", double-precision limit), anchors " + (anchors ? "exact" : "wrong")};
    });

    criterion(10, "end-to-end estimator", 60.0, [&] {
        const double fs = 262144;
        const double dark = db_to_psd(-12.0);
        auto inject = [](double hz) { return hz >= 33e3 && hz <= 62e3 ? 0.851 : 1.2; };
        EstimatorConfig ec;
        ec.segment_length = 1024;
        const auto pair = synthesize_pair(inject, fs, std::size_t(1) << 22, 1.0, 1.0, dark, dark, 2024);
        const auto dk = cross_spectrum(synthesize_dark(fs, std::size_t(1) << 22, 1.0, 1.0, dark, dark, 2025), ec);
        const auto res = correlate(pair, ec, DarkNoise{dark, dark, dk.s_a, dk.s_b});
        const auto spec = squeezing_spectrum_from_correlation(res);
        const double df = fs / double(ec.segment_length);
        std::size_t checked = 0, outside = 0;
        double worst = 0;
        for (const auto& p : spec) {
            if (std::abs(p.freq - 33e3) <= df || std::abs(p.freq - 62e3) <= df) continue;  // edge bins
            ++checked;
            const double z = p.flagged ? 1e9 : std::abs(p.r - inject(p.freq)) / p.r_err;
            worst = std::max(worst, z);
            if (z > 3.0) ++outside;
        }
        // widest run of negative Re S_ab
        double blo = 0, bhi = 0;
        std::size_t best = 0;
        for (std::size_t i = 0; i < res.bins.size();) {
            if (res.bins[i].s_ab.real() < 0) {
                std::size_t j = i;
                while (j + 1 < res.bins.size() && res.bins[j + 1].s_ab.real() < 0) ++j;
                if (j - i + 1 > best) {
                    best = j - i + 1;
                    blo = res.bins[i].freq;
                    bhi = res.bins[j].freq;
                }
                i = j + 1;
            } else {
                ++i;
            }
        }
        auto bin = [&](double hz) { return std::lround(hz / df); };
        const long slack_lo = std::labs(bin(blo) - bin(33e3));
        const long slack_hi = std::labs(bin(bhi) - bin(62e3));
        const bool band = best > 0 && slack_lo <= 1 && slack_hi <= 1;
        const bool ok = res.n_averages >= 5000 && outside == 0 && band;
        return Outcome{ok, std::to_string(res.n_averages) + " averages; " + std::to_string(outside) + "/" +
                               std::to_string(checked) + " bins beyond 3 sigma (worst " + f(worst, 3) +
                               "); negative band " + f(blo / 1e3, 4) + "-" + f(bhi / 1e3, 4) + " kHz (edge slack " +
                               std::to_string(slack_lo) + "/" + std::to_string(slack_hi) + " bins of " + f(df, 4) +
                               " Hz)"};
    });

    criterion(11, "efficiency correction", 60.0, [&] {
        const double fs = 262144;
        const double dark = db_to_psd(-12.0);
        const std::size_t n = std::size_t(1) << 20;
        EstimatorConfig ec;
        ec.segment_length = 1024;
        const double eta_closed = efficiency(dark, dark, 1.0);
        const int seeds = 50;
        double worst_eta = 0, sum = 0, sum2 = 0;
        for (int s = 0; s < seeds; ++s) {
            const auto pair = synthesize_pair([](double) { return 1.0; }, fs, n, 1.0, 1.0, dark, dark, 5000 + s);
            const auto dk = cross_spectrum(synthesize_dark(fs, n, 1.0, 1.0, dark, dark, 9000 + s), ec);
            const auto res = correlate(pair, ec, DarkNoise{dark, dark, dk.s_a, dk.s_b});
            double eta = 0, c = 0;
            for (const auto& b : res.bins) {
                eta += b.eta;
                c += b.c;
            }
            eta /= double(res.bins.size());
            c /= double(res.bins.size());
            worst_eta = std::max(worst_eta, std::abs(eta - eta_closed));
            const double r = infer_relative_noise(c / eta);
            sum += r;
            sum2 += r * r;
        }
        const double mean = sum / seeds;
        const double sem = std::sqrt((sum2 / seeds - mean * mean) / (seeds - 1));
        const double z = std::abs(mean - 1.0) / sem;
        return Outcome{worst_eta <= 0.002 && z <= 3.0,
                       "closed-form eta " + f(eta_closed, 5) + ", measured within " + f(worst_eta, 3) +
                           "; corrected R " + f(mean, 6) + " +/- " + f(sem, 2) + " (" + f(z, 2) + " sigma)"};
    });

    criterion(12, "determinism", 60.0, [&] {
        const fs::path root = fs::temp_directory_path() / "omsqz_acceptance";
        fs::remove_all(root);
        std::ostringstream sink;
        auto run = [&](const std::string& tag, unsigned threads) {
            RunConfig c = defaults;
            c.run.seed = 7;
            c.run.out = (root / tag).string();
            c.budget.threads = threads;
            c.corr.estimator.threads = threads;
            c.corr.n_samples = std::size_t(1) << 20;
            if (cmd_budget(c, sink, true) != 0 || cmd_corr(c, sink, true) != 0)
                throw std::runtime_error("command failed");
        };
        run("a", 1);
        run("b", 1);
        run("c", 4);
        std::string w1, w2;
        const bool same = same_outputs(root / "a", root / "b", ".csv", w1);
        const bool thr = same_outputs(root / "a", root / "c", ".csv", w2) &&
                         slurp(root / "a" / "summary.json") == slurp(root / "c" / "summary.json") &&
                         slurp(root / "a" / "corr_summary.json") == slurp(root / "c" / "corr_summary.json");
        fs::remove_all(root);
        return Outcome{same && thr, "repeat: " + w1 + "; 1 vs 4 threads: " + w2};
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
