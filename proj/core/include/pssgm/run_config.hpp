#pragma once

// Structured run configuration (JSON). Every section and key is optional;
// missing keys take the documented defaults and unknown keys are rejected.
// See docs/config.md for the schema.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pssgm/data.hpp"
#include "pssgm/learning.hpp"

namespace pssgm {

struct TopologyConfig {
    /// "complete" (n oscillators, all pairs) or "grid" (rows x cols with a coupling range).
    std::string kind = "complete";
    /// 0 takes the number of data columns.
    std::size_t n = 0;
    std::size_t rows = 12;
    std::size_t cols = 12;
    double range = 6.0;
    DistanceMetric metric = DistanceMetric::euclidean;
};

struct MnistConfig {
    std::string images;
    std::string labels;
    MnistOptions options;
};

struct IntegrateConfig {
    /// 0 selects tau / 800.
    double dt = 0.0;
    ReverseInit init = ReverseInit::exact_gaussian;
    double relax_time = 10.0;
    std::size_t workers = 1;
};

struct EvalConfig {
    std::size_t bins = 50;
    std::size_t grid_resolution = 201;
    double grid_lo = -1.5;
    double grid_hi = 1.5;
};

struct RunConfig {
    TopologyConfig topology;
    std::optional<MixtureSpec> mixture;
    std::optional<MnistConfig> mnist;
    TrainConfig train;
    LearningRule rule = LearningRule::force_matching;
    CD1Config cd1;
    IntegrateConfig integrate;
    EvalConfig eval;
    std::uint64_t seed = 1;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved configuration as pretty-printed JSON (stable key order).
std::string resolved_config_json(const RunConfig& cfg);

/// Builds the topology for data with `data_dim` columns; a size that
/// disagrees with the data is a dimension_mismatch.
Topology make_topology(const TopologyConfig& cfg, std::size_t data_dim);

/// Mixture section alone, e.g. for `prepare --mixture FILE`. Accepts either a
/// bare mixture object or a full run config with a "mixture" section.
MixtureSpec load_mixture_spec(const std::filesystem::path& path);

}  // namespace pssgm
