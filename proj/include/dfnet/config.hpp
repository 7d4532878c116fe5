#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "dfnet/model.hpp"
#include "dfnet/synthdata.hpp"
#include "dfnet/weights.hpp"

namespace dfnet {

enum class WeightMode { dynamic, uniform, global };

WeightMode parse_weight_mode(std::string_view token);
std::string_view to_string(WeightMode mode);

/// Everything needed to reproduce one training run.
struct RunConfig {
  ModelConfig model;
  WeightMode weight_mode = WeightMode::dynamic;
  WeightConfig weights;
  LossKind loss = LossKind::weighted_ce;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t iterations = 2000;
  std::size_t batch_size = 2;
  SceneSpec data;
  std::size_t scenes = 100;
  std::array<double, 3> split{0.6, 0.3, 0.1};
  /// When non-empty, scenes are read from this PPM/PGM directory instead of
  /// being generated.
  std::string data_dir;
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  /// Progress line every this many iterations; 0 disables.
  std::size_t log_every = 0;

  void validate() const;
};

/// Flat "key = value" lines; '#' starts a comment; dotted keys address
/// nested fields (model.growth_rate = 8). Unknown keys are rejected.
RunConfig parse_run_config(std::string_view text);
/// Applies one "key=value" override on top of `cfg`.
void apply_override(RunConfig& cfg, std::string_view assignment);
std::string serialize_run_config(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace dfnet
