#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uahmp/run_config.hpp"

namespace uahmp {

/// Identifier compiled in at configure time (git describe).
std::string build_id();

/// Writes `num_sequences` CSV sequences (seed + i each) and manifest.json.
nlohmann::json cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Trains on data.dir; writes best.ckpt, last.ckpt, metrics.jsonl and head_report.json.
nlohmann::json cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Horizon report and calibration statistics of a checkpoint over every window of a
/// dataset; written to eval_report.json.
nlohmann::json cmd_eval(const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset_dir,
                        const std::optional<std::vector<double>>& horizons_ms,
                        const std::filesystem::path& out_dir);

/// Predicts the frames following the last t_obs frames of `observed`; writes
/// prediction.jsonl.
nlohmann::json cmd_predict(const std::filesystem::path& checkpoint,
                           const std::filesystem::path& observed,
                           const std::filesystem::path& out_dir);

/// Renders uncertainty_map.{csv,pgm,svg} and pointsize.svg for a prediction file.
nlohmann::json cmd_visualize(const std::filesystem::path& prediction,
                             const std::optional<std::filesystem::path>& truth,
                             const std::filesystem::path& out_dir);

}  // namespace uahmp
