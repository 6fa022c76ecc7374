#pragma once
// TOML run configuration and world specs.
//
// Run config keys (all optional):
//   budget, rounds, clusters, sigma, lambda_reg, eps_max, seed, method,
//   pca_dim, lambda_c, feasible_samples
//   [paths]      real, syn, cal, out, world   (relative to the config file)
//   [anchors]    max_per_cluster, threshold
//   [embedding]  dim, layers, heads, steps, batch_size, learning_rate, lambda
//
// World spec keys: archetypes, n_real, n_pool, n_cal, real_share, a, b, m0,
// g, transfer (array of rows), noise_sigma, draws, seed. Missing arrays take
// the defaults for the archetype count.
//
// Unknown keys are errors.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "autoscale/engine.hpp"
#include "autoscale/harness.hpp"

namespace autoscale {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunPaths {
    std::filesystem::path real, syn, cal, out, world;  // empty when unset
};

struct RunConfig {
    EngineConfig engine;
    RunPaths paths;
};

RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>",
                           const std::filesystem::path& base_dir = {});
RunConfig read_run_config(const std::filesystem::path& path);
std::string to_toml(const RunConfig& c);

sim::WorldSpec parse_world_spec(std::string_view text, const std::string& source = "<world>");
std::string to_toml(const sim::WorldSpec& s);

}  // namespace autoscale
