#pragma once

#include <cstdint>
#include <exception>
#include <iosfwd>
#include <optional>
#include <string>

#include "calderon/config.hpp"

namespace calderon {

/// Command-line overrides applied on top of the config file.
struct CommandOptions {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool no_noise = false;
    std::optional<std::string> t_override;
};

void apply_overrides(ExperimentConfig& config, const CommandOptions& options);

/// 0 success, 1 config error, 2 validation or tolerance failure, 3 budget.
int exit_code_for(const std::exception& e);

/// Each command writes its CSVs and plot scripts under config.output and
/// returns an exit code; library errors propagate as exceptions.
int cmd_validate(const ExperimentConfig& config, std::ostream& log);
int cmd_recover_gamma(const ExperimentConfig& config, std::ostream& log);
int cmd_recover_grad(const ExperimentConfig& config, std::ostream& log);
int cmd_noise_stats(const ExperimentConfig& config, std::ostream& log);
int cmd_rates(const ExperimentConfig& config, std::ostream& log);

/// Dispatches by name and maps exceptions onto exit codes.
int run_command(const std::string& name, const ExperimentConfig& config, std::ostream& log);

} // namespace calderon
