#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "calderon/conductivity.hpp"
#include "calderon/geometry.hpp"
#include "calderon/probes.hpp"
#include "calderon/reconstruct.hpp"
#include "calderon/solver.hpp"

namespace calderon {

struct DomainConfig {
    std::string kind = "disk"; // disk | perturbed
    std::vector<RadialMode> modes;
};

struct ConductivityConfig {
    std::string name = "affine";
    FieldParams params{{"a", 2.0}, {"bx", 1.0}};
};

struct NoiseConfig {
    bool enabled = true;
    std::uint64_t seed = 1;
    long K = 0; // 0 means "auto": truncation_rule at the largest probe frequency
};

struct SolverConfig {
    std::string mode = "fem"; // fem | analytic
    double tolerance = 1e-10;
    double ppw = 10.0;
    double h_far = 0.05;
    double collar = 0.02;
    double depth_factor = 10.0;
    long max_triangles = 2'000'000;
};

struct GammaRunConfig {
    std::vector<double> N{8, 16, 32, 64, 128};
};

struct GradRunConfig {
    std::vector<double> N{2};
    long Q = 0;                            // 0: max(32, ⌈8T⌉)
    bool extrapolate = false;              // Richardson in ppw for the clean part
    std::string gamma_boundary = "truth";  // truth | stage1
    double stage1_N = 64;
    std::vector<double> stage1_offsets{-0.1, -0.05, 0.0, 0.05, 0.1};
};

struct NoiseStatsConfig {
    long K = 64;
    long seeds = 10'000;
    long pairs = 5;
    long band = 8;
    std::vector<double> T{16, 32, 64, 128, 256};
    long filtering_seeds = 500;
};

struct RatesConfig {
    std::string mode = "gamma"; // gamma | grad
    std::vector<double> N{16, 32, 64, 128, 256};
    std::vector<double> quantile_N{64, 128};
    long seeds = 200;
    double margin = 3.0;
};

struct ValidateConfig {
    double h = 0.05;
    long max_mode = 8;
    double tolerance = 0.02;
    double alpha = 0.5;
};

/// Everything one experiment needs. Loaded from TOML (or JSON), serialized
/// back to canonical JSON for hashing and provenance.
struct ExperimentConfig {
    DomainConfig domain;
    ConductivityConfig conductivity;
    double anchor = 0.0; // ϑ_P
    double theta = 0.5;
    std::vector<std::uint64_t> seeds{1};
    NoiseConfig noise;
    SolverConfig solver;
    std::string t_override = "desk";
    std::string output = "out";
    GammaRunConfig gamma;
    GradRunConfig grad;
    NoiseStatsConfig noise_stats;
    RatesConfig rates;
    ValidateConfig validate;

    nlohmann::json to_json() const;
    /// FNV-1a 64 of the canonical JSON without the output directory, as hex.
    std::string hash() const;
};

/// Parses TOML, or JSON when the text starts with '{'. Unknown keys and bad
/// values raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);

DomainGeometry make_domain(const ExperimentConfig& c);
ConductivityField make_conductivity(const ExperimentConfig& c);
CleanOracle make_oracle(const ExperimentConfig& c);
ProbeSpec make_spec(const ExperimentConfig& c, const DomainGeometry& domain, ProbeMode mode);

std::uint64_t fnv1a(const std::string& bytes);

} // namespace calderon
