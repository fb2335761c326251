#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "omsqz/budget.hpp"

using namespace omsqz;
using constants::deg_to_rad;
using constants::pi;

namespace {

NoiseTerm flat(const std::string& label, double v) {
    return NoiseTerm(label, BudgetConfig::degree_sweep(0, 5, 7), FrequencyGrid::linear(1e4, 1e5, 6), v);
}

NoiseTerm synthetic_budget() {
    NoiseTerm b("model", BudgetConfig::degree_sweep(0, 2, 23), FrequencyGrid::logarithmic(1e4, 1.2e5, 30));
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            const double phi = b.angles[i], f = b.freqs[j];
            b.at(i, j) = 1.0 + 2.5 * std::pow(std::sin(phi - 0.2), 2) - 0.4 * std::pow(std::cos(phi - 0.2), 2) +
                         0.05 * std::log(f / 1e4);
        }
    return b;
}

BudgetConfig small_config() {
    BudgetConfig c;
    c.angles = BudgetConfig::degree_sweep(0, 0.5, 90);
    c.freqs = FrequencyGrid::logarithmic(1e4, 1.5e5, 120);
    return c;
}

}  // namespace

TEST(ExcessLoss, Examples) {
    EXPECT_DOUBLE_EQ(apply_excess_loss(0.78, 0.0), 0.78);
    for (double eps : {0.0, 0.3, 0.99}) EXPECT_DOUBLE_EQ(apply_excess_loss(1.0, eps), 1.0);
    EXPECT_NEAR(apply_excess_loss(0.78, 0.22), 0.8284, 1e-12);
    EXPECT_THROW(apply_excess_loss(0.5, 1.0), DomainError);
    EXPECT_THROW(apply_excess_loss(0.5, -0.1), DomainError);
}

TEST(ExcessLoss, ContractionTowardShot) {
    for (double s : {0.1, 0.8, 1.0, 3.0})
        for (double eps : {0.0, 0.1, 0.5, 0.9})
            EXPECT_NEAR(std::abs(apply_excess_loss(s, eps) - 1.0), (1 - eps) * std::abs(s - 1.0), 1e-14);
}

TEST(PhaseNoise, Examples) {
    BudgetConfig c;
    c.freqs = FrequencyGrid::linear(1e4, 1e5, 10);
    for (double v : phase_noise_term(c, 0.0)) EXPECT_EQ(v, 0.0);
    const auto n90 = phase_noise_term(c, pi / 2);
    const auto s = std::sin(17 * deg_to_rad);
    for (std::size_t j = 0; j < n90.size(); ++j) EXPECT_NEAR(n90[j], c.phase_noise(c.freqs[j]) / (s * s), 1e-15);
    const auto n = phase_noise_term(c, 12.3 * deg_to_rad);
    for (std::size_t j = 0; j < n.size(); ++j) {
        EXPECT_NEAR(n[j] / c.phase_noise(c.freqs[j]), std::pow(std::sin(12.3 * deg_to_rad), 2) / (s * s), 1e-12);
        EXPECT_NEAR(n[j] / c.phase_noise(c.freqs[j]), 0.531, 0.001);
    }
}

TEST(PhaseNoise, ZeroReferenceQuadratureIsConfigError) {
    BudgetConfig c = small_config();
    c.phase_noise_ref_angle = 0.0;
    EXPECT_THROW(phase_noise_term(c, 0.3), ConfigError);
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PhaseNoise, RatioIsSinSquared) {
    BudgetConfig c;
    c.freqs = FrequencyGrid::linear(1e4, 1e5, 10);
    const auto n90 = phase_noise_term(c, pi / 2);
    for (double phi = 0.05; phi < pi; phi += 0.2) {
        const auto n = phase_noise_term(c, phi);
        for (std::size_t j = 0; j < n.size(); ++j)
            EXPECT_NEAR(n[j] / n90[j], std::sin(phi) * std::sin(phi), 1e-15);
    }
}

TEST(DisplacementNoise, NullAndZeroSpectrum) {
    const ExperimentParams p;
    for (double f : {3e4, 45e3, 7e4}) {
        const auto r = output_response(p.cavity, p.modes, f);
        const double null = displacement_null(p.cavity, p.modes, f).radians();
        const double peak = displacement_noise_term(1e-37, r, null + pi / 2);
        // complex response: null floor is second order in Omega / kappa
        EXPECT_LT(displacement_noise_term(1e-37, r, null), 0.01 * peak);
        for (double d : {-0.05, 0.05})
            EXPECT_GT(displacement_noise_term(1e-37, r, null + d), displacement_noise_term(1e-37, r, null));
        EXPECT_EQ(displacement_noise_term(0.0, r, 0.3), 0.0);
        EXPECT_NEAR(null * constants::rad_to_deg, 17.0, 3.0);
    }
}

TEST(RinAndDark, Examples) {
    BudgetConfig c = small_config();
    EXPECT_NEAR(dark_noise_rel_shot(c), 0.0631, 0.0001);
    c.rin_coupling = 1.0;
    EXPECT_NEAR(rin_rel_shot(c, 49e-6, 1064e-9), std::pow(8e-9 / 8.7294e-8, 2), 1e-6);
    EXPECT_NEAR(rin_rel_shot(c, 49e-6, 1064e-9), 8.4e-3, 0.05e-3);
    c.rin_amplitude = 0.0;
    EXPECT_EQ(rin_rel_shot(c, 49e-6, 1064e-9), 0.0);
    // default coupling honors the -40 dB statement
    EXPECT_LT(psd_to_db(rin_rel_shot(BudgetConfig{}, 49e-6, 1064e-9)), -40.0);
    const auto t = rin_and_dark_terms(small_config(), ExperimentParams{});
    EXPECT_EQ(t.rin.values.size(), 90u * 120u);
    for (double v : t.dark.values) EXPECT_NEAR(v, 0.0631, 1e-4);
}

TEST(Assemble, Examples) {
    const auto one = assemble({flat("quantum", 1.0), flat("a", 0.0), flat("b", 0.0)});
    for (double v : one.values) EXPECT_EQ(v, 1.0);
    const auto t = assemble({flat("quantum", 1.0), flat("a", 0.25), flat("b", 0.25)});
    for (double v : t.values) {
        EXPECT_DOUBLE_EQ(v, 1.5);
        EXPECT_NEAR(psd_to_db(v), 1.76, 0.005);
    }
    EXPECT_EQ(t.label, "total");
}

TEST(Assemble, GridMismatchIsStructural) {
    NoiseTerm other("x", BudgetConfig::degree_sweep(0, 5, 6), FrequencyGrid::linear(1e4, 1e5, 6));
    EXPECT_THROW(assemble({flat("a", 1.0), other}), StructuralError);
    EXPECT_THROW(assemble({}), StructuralError);
}

TEST(Assemble, CommutativeAssociativeAndAboveQuantum) {
    NoiseTerm a = flat("a", 0.0), b = flat("b", 0.0), q = flat("q", 0.0);
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        a.values[k] = 0.1 * double(k % 5);
        b.values[k] = 0.03 * double(k % 7);
        q.values[k] = 0.5 + 0.01 * double(k);
    }
    const auto ab = assemble({a, b}).values;
    const auto ba = assemble({b, a}).values;
    EXPECT_EQ(ab, ba);
    auto left = assemble({q, a});
    left = assemble({left, b});
    auto right = assemble({b, q});
    right = assemble({a, right});
    for (std::size_t k = 0; k < ab.size(); ++k) {
        EXPECT_NEAR(left.values[k], right.values[k], 1e-15);
        EXPECT_GE(left.values[k], q.values[k]);
    }
}

TEST(FitExcessLoss, IdentityGivesZero) {
    const auto b = synthetic_budget();
    EXPECT_NEAR(fit_excess_loss(b, b), 0.0, 1e-6);
}

TEST(FitExcessLoss, RecoversInjectedLossExactly) {
    const auto b = synthetic_budget();
    for (double eps = 0.0; eps <= 0.8 + 1e-9; eps += 0.05)
        EXPECT_NEAR(fit_excess_loss(apply_excess_loss(b, eps), b), eps, 1e-4) << eps;
    EXPECT_NEAR(fit_excess_loss(apply_excess_loss(b, 0.22), b), 0.22, 0.001);
}

TEST(FitExcessLoss, RecoversUnderMultiplicativeNoise) {
    const auto b = synthetic_budget();
    const auto measured = with_multiplicative_noise(apply_excess_loss(b, 0.22), 0.05, 2024);
    EXPECT_NEAR(fit_excess_loss(measured, b), 0.22, 0.02);
}

TEST(FitExcessLoss, RejectsBadInput) {
    auto b = synthetic_budget();
    auto m = b;
    m.values[3] = std::nan("");
    EXPECT_THROW(fit_excess_loss(m, b), DataError);
    m.values[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(fit_excess_loss(m, b), DataError);
    EXPECT_THROW(fit_excess_loss(flat("x", 1.0), b), StructuralError);
}

TEST(Contour, FlatShotHasNoCrossing) {
    for (const auto& p : shot_noise_contour(flat("total", 1.0))) {
        EXPECT_FALSE(p.lower);
        EXPECT_FALSE(p.upper);
    }
}

TEST(Contour, AnalyticRoots) {
    NoiseTerm t("total", {}, FrequencyGrid::linear(1e4, 2e4, 3));
    for (double deg = -89.5; deg < 90; deg += 0.5) t.angles.push_back(deg * deg_to_rad);
    t.values.resize(t.angles.size() * 3);
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double x = t.angles[i] - 0.2;
            t.at(i, j) = 1 + 0.2 * std::sin(x) * std::sin(x) - 0.1 * std::cos(x) * std::cos(x);
        }
    const double root = std::atan(std::sqrt(0.5));
    for (const auto& p : shot_noise_contour(t)) {
        ASSERT_TRUE(p.lower && p.upper);
        EXPECT_NEAR(*p.lower, 0.2 - root, 0.1 * deg_to_rad);
        EXPECT_NEAR(*p.upper, 0.2 + root, 0.1 * deg_to_rad);
        EXPECT_LT(*p.lower, *p.upper);
    }
}

TEST(Contour, RegionTouchingSweepEdgeHasOneSide) {
    NoiseTerm t("total", BudgetConfig::degree_sweep(0, 1, 10), FrequencyGrid::linear(1e4, 2e4, 2));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < 2; ++j) t.at(i, j) = 0.9 + 0.05 * double(i);
    for (const auto& p : shot_noise_contour(t)) {
        EXPECT_FALSE(p.lower);
        ASSERT_TRUE(p.upper);
        EXPECT_NEAR(*p.upper * constants::rad_to_deg, 2.0, 1e-9);
    }
}

TEST(BuildBudget, DefaultConfigurationSqueezes) {
    BudgetConfig c = small_config();
    c.angles = {12.3 * deg_to_rad};
    c.freqs = FrequencyGrid({45e3});
    const auto b = build_budget(ExperimentParams{}, c);
    EXPECT_LT(b.total.values[0], 1.0);
    EXPECT_EQ(b.terms.size(), 6u);
    for (const auto& t : b.terms)
        for (double v : t.values) EXPECT_GE(v, 0.0) << t.label;
}

TEST(BuildBudget, TotalIsSumOfTerms) {
    const auto b = build_budget(ExperimentParams{}, small_config());
    for (std::size_t k = 0; k < b.total.values.size(); k += 97) {
        double s = 0;
        for (const auto& t : b.terms) s += t.values[k];
        EXPECT_DOUBLE_EQ(s, b.total.values[k]);
        EXPECT_GE(b.total.values[k], b.term("quantum").values[k]);
    }
}

TEST(BuildBudget, ThreadCountDoesNotChangeValues) {
    BudgetConfig c = small_config();
    const auto one = build_budget(ExperimentParams{}, c);
    c.threads = 4;
    const auto four = build_budget(ExperimentParams{}, c);
    EXPECT_EQ(one.total.values, four.total.values);
}

TEST(ScenarioExpected, TechnicalOffLosslessReducesToModel) {
    ExperimentParams p;
    p.cavity.t_in_ppm = 0;
    p.cavity.loss_ppm = 0;
    p.detection.bs1_transmission = 1.0;
    p.detection.visibility = 1.0;
    p.detection.bs2.power_reflectivity = 0.0;
    p.env.temperature = 0.0;
    BudgetConfig c = small_config();
    c.freqs = FrequencyGrid({2e4, 45e3, 8e4});
    const auto b = scenario_expected(p, c, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
        const auto s = output_spectral_matrix(p.cavity, p.modes, p.env, c.freqs[j]);
        for (std::size_t i = 0; i < b.total.rows(); i += 11)
            EXPECT_NEAR(b.total.at(i, j), project(s, b.total.angles[i]), 1e-12);
    }
}

TEST(ScenarioExpected, FullLossGivesShotNoise) {
    BudgetConfig c = small_config();
    const auto b = scenario_expected(ExperimentParams{}, c, 1.0 - 1e-12);
    for (double v : b.total.values) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(ScenarioExpected, TableConfiguration) {
    const auto b = scenario_expected(ExperimentParams{}, small_config(), 0.0);
    EXPECT_NEAR(-minimum_of(b.total).db, 1.5, 0.5);
}

TEST(ReferenceSpectrum, TableIngestion) {
    std::istringstream in("# f psd\n1e4 0.2\n\n2e4 0.4  # comment\n4e4 0.0\n");
    const auto s = ReferenceSpectrum::read(in);
    EXPECT_DOUBLE_EQ(s(5e3), 0.2);
    EXPECT_DOUBLE_EQ(s(1.5e4), 0.3);
    EXPECT_DOUBLE_EQ(s(3e4), 0.2);
    EXPECT_DOUBLE_EQ(s(1e6), 0.0);
    std::istringstream bad("1e4 0.2\n2e4 x\n");
    try {
        ReferenceSpectrum::read(bad, "phase.txt");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("phase.txt:2"), std::string::npos);
    }
    std::istringstream neg("1e4 -0.2\n");
    EXPECT_THROW(ReferenceSpectrum::read(neg), DataError);
}

TEST(GridCsv, LayoutAndRoundTrip) {
    NoiseTerm t("x", BudgetConfig::degree_sweep(0, 10, 3), FrequencyGrid({1e4, 2e4}));
    t.values = {1.0, 2.0, 0.5, 0.25, 0.0, 4.0};
    std::ostringstream os;
    write_grid_csv(os, t);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "quadrature_deg,10000,20000");
    EXPECT_NE(os.str().find("\n20,-300,6.02059991\n"), std::string::npos);
    std::istringstream in(os.str());
    const auto back = read_grid_csv(in);
    ASSERT_EQ(back.values.size(), 6u);
    for (std::size_t k = 0; k < 6; ++k)
        if (t.values[k] > 0) {
            EXPECT_NEAR(back.values[k] / t.values[k], 1.0, 1e-8);
        }
    EXPECT_NEAR(back.angles[1], t.angles[1], 1e-12);
}
