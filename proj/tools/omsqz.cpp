// omsqz: noise budgets and correlation analysis for optomechanical squeezing.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "omsqz/commands.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scenario;
    bool quiet = false;
    std::string perturb;
};

omsqz::RunConfig resolve(const Options& o) {
    omsqz::RunConfig c = o.config.empty() ? omsqz::RunConfig{} : omsqz::load_config(o.config);
    if (o.out) c.run.out = *o.out;
    if (o.seed) c.run.seed = *o.seed;
    if (o.scenario) c.run.scenario = *o.scenario;
    omsqz::validate(c);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noise budgets and correlation analysis for optomechanical squeezing"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--scenario", o.scenario, "Scenario: default or expected")
            ->check(CLI::IsMember({"default", "expected"}));
        sub->add_flag("--quiet", o.quiet, "Only report errors");
    };
    auto* budget = app.add_subcommand("budget", "Write noise-budget grids, contour and summary");
    add_common(budget);
    auto* corr = app.add_subcommand("corr", "Run the two-detector correlation analysis");
    add_common(corr);
    auto* self = app.add_subcommand("selftest", "Check the library invariants");
    self->add_flag("--quiet", o.quiet, "Only report failures");
    self->add_option("--perturb", o.perturb)->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (self->parsed()) return omsqz::cmd_selftest(std::cout, o.quiet, o.perturb);
        const omsqz::RunConfig cfg = resolve(o);
        if (budget->parsed()) return omsqz::cmd_budget(cfg, std::cout, o.quiet);
        return omsqz::cmd_corr(cfg, std::cout, o.quiet);
    } catch (const omsqz::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
