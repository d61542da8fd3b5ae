#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uahmp/predictor.hpp"
#include "uahmp/skeleton_data.hpp"
#include "uahmp/trainer.hpp"

namespace uahmp {

struct DataConfig {
  std::string dir;
  int t_obs = 10;
  int t_future = 10;
  int stride = 1;
  bool center_root = true;
  /// The last `val_sequences` sequences of a dataset are held out for validation.
  int val_sequences = 1;
  double corrupt_fraction = 0.0;
  double corrupt_noise_std_mm = 0.0;
  std::uint64_t corrupt_seed = 0;
};

struct RunConfig {
  SynthConfig synth;
  int num_sequences = 1;
  DataConfig data;
  PredictorConfig model;
  TrainConfig train;
  std::vector<double> horizons_ms{80.0, 160.0, 320.0, 400.0};
  nlohmann::json resolved;  ///< the full JSON this config was parsed from
};

void to_json(nlohmann::json& j, const SynthConfig& cfg);
void from_json(const nlohmann::json& j, SynthConfig& cfg);

nlohmann::json default_run_config();

/// Applies one `dotted.key=value` override; the value is parsed as JSON and falls
/// back to a plain string.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Recursively merges `patch` into `base` (objects merge, everything else replaces).
void merge_config(nlohmann::json& base, const nlohmann::json& patch);

RunConfig parse_run_config(const nlohmann::json& config);

/// Defaults, then the optional file, then overrides, in that order.
RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

struct PreparedData {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
  int joints = 0;
  double frame_interval_ms = kDefaultFrameIntervalMs;
};

/// Sequences listed in the directory's manifest.json, or every *.csv / *.jsonl in
/// name order when there is no manifest.
std::vector<PoseSequence> load_dataset(const std::filesystem::path& dir, double frame_interval_ms);

/// Windows every sequence, optionally removes root translation, holds out the last
/// `val_sequences` sequences and corrupts the training pairs.
PreparedData prepare_pairs(const std::vector<PoseSequence>& sequences, const DataConfig& data);

}  // namespace uahmp
