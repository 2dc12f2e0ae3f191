#include <iostream>

#include <CLI11.hpp>

#include "calderon/commands.hpp"
#include "calderon/error.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Boundary determination of a conductivity from noisy Dirichlet-to-Neumann data"};
    app.require_subcommand(1, 1);

    std::string config_path;
    calderon::CommandOptions options;
    std::uint64_t seed = 0;
    std::string out, t_override;

    for (const char* name : {"validate", "recover-gamma", "recover-grad", "noise-stats", "rates"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config (TOML or JSON)")->required();
        sub->add_option("--seed", seed, "single seed overriding the config");
        sub->add_option("--out", out, "output directory");
        sub->add_flag("--no-noise", options.no_noise, "disable the noise term");
        sub->add_option("--t-override", t_override, "averaging window policy: paper, desk or a number");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed"))
        options.seed = seed;
    if (sub->count("--out"))
        options.out = out;
    if (sub->count("--t-override"))
        options.t_override = t_override;

    try {
        calderon::ExperimentConfig config = calderon::load_config(config_path);
        calderon::apply_overrides(config, options);
        return calderon::run_command(sub->get_name(), config, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "calderon: " << e.what() << "\n";
        return calderon::exit_code_for(e);
    }
}
