#include "uahmp/run_config.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "uahmp/errors.hpp"

namespace uahmp {

void to_json(nlohmann::json& j, const SynthConfig& cfg) {
  j = nlohmann::json{{"joints", cfg.joints},
                     {"duration_frames", cfg.duration_frames},
                     {"base_frequencies", cfg.base_frequencies},
                     {"amplitude_mm", cfg.amplitude_mm},
                     {"noise_floor_mm", cfg.noise_floor_mm},
                     {"noise_growth_per_frame", cfg.noise_growth_per_frame},
                     {"frame_interval_ms", cfg.frame_interval_ms},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& cfg) {
  SynthConfig d;
  cfg.joints = j.value("joints", d.joints);
  cfg.duration_frames = j.value("duration_frames", d.duration_frames);
  cfg.base_frequencies = j.value("base_frequencies", d.base_frequencies);
  cfg.amplitude_mm = j.value("amplitude_mm", d.amplitude_mm);
  cfg.noise_floor_mm = j.value("noise_floor_mm", d.noise_floor_mm);
  cfg.noise_growth_per_frame = j.value("noise_growth_per_frame", d.noise_growth_per_frame);
  cfg.frame_interval_ms = j.value("frame_interval_ms", d.frame_interval_ms);
  cfg.seed = j.value("seed", d.seed);
}

nlohmann::json default_run_config() {
  SynthConfig synth;
  synth.joints = 4;
  synth.duration_frames = 20;
  synth.base_frequencies = {0.5, 0.8, 1.1, 1.4};
  synth.amplitude_mm = {100.0, 80.0, 60.0, 40.0};
  synth.noise_floor_mm = 0.5;
  synth.noise_growth_per_frame = 0.5;

  PredictorConfig model;
  TrainConfig train;
  train.lr = 5e-3;
  train.epochs = 30;
  train.batch_size = 16;
  DataConfig data;

  nlohmann::json cfg;
  cfg["synth"] = synth;
  cfg["synth"]["num_sequences"] = 240;
  cfg["data"] = {{"dir", data.dir},
                 {"t_obs", data.t_obs},
                 {"t_future", data.t_future},
                 {"stride", data.stride},
                 {"center_root", data.center_root},
                 {"val_sequences", 40},
                 {"corrupt_fraction", data.corrupt_fraction},
                 {"corrupt_noise_std_mm", data.corrupt_noise_std_mm},
                 {"corrupt_seed", data.corrupt_seed}};
  cfg["model"] = model;
  cfg["model"].erase("joints");
  cfg["model"].erase("t_obs");
  cfg["model"].erase("t_future");
  cfg["model"]["n_dct_coeffs"] = 20;
  cfg["train"] = train;
  cfg["eval"] = {{"horizons_ms", {80.0, 160.0, 320.0, 400.0}}};
  return cfg;
}

void apply_override(nlohmann::json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ArgumentError(fmt::format("override '{}' is not of the form key=value", assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ArgumentError(fmt::format("override key '{}' has an empty segment", key));
    if (!node->is_object()) {
      throw ArgumentError(fmt::format("override key '{}' descends into a non-object", key));
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

void merge_config(nlohmann::json& base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      merge_config(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

RunConfig parse_run_config(const nlohmann::json& config) {
  RunConfig rc;
  rc.resolved = config;
  try {
    const auto& synth = config.at("synth");
    rc.synth = synth.get<SynthConfig>();
    rc.num_sequences = synth.value("num_sequences", 1);

    const auto& data = config.at("data");
    DataConfig d;
    rc.data.dir = data.value("dir", d.dir);
    rc.data.t_obs = data.value("t_obs", d.t_obs);
    rc.data.t_future = data.value("t_future", d.t_future);
    rc.data.stride = data.value("stride", d.stride);
    rc.data.center_root = data.value("center_root", d.center_root);
    rc.data.val_sequences = data.value("val_sequences", d.val_sequences);
    rc.data.corrupt_fraction = data.value("corrupt_fraction", d.corrupt_fraction);
    rc.data.corrupt_noise_std_mm = data.value("corrupt_noise_std_mm", d.corrupt_noise_std_mm);
    rc.data.corrupt_seed = data.value("corrupt_seed", d.corrupt_seed);

    rc.model = config.at("model").get<PredictorConfig>();
    rc.model.joints = rc.synth.joints;
    rc.model.t_obs = rc.data.t_obs;
    rc.model.t_future = rc.data.t_future;
    rc.train = config.at("train").get<TrainConfig>();
    if (config.contains("eval")) {
      rc.horizons_ms = config["eval"].value("horizons_ms", rc.horizons_ms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("invalid configuration: {}", e.what()));
  }
  if (rc.num_sequences < 1) throw ArgumentError("synth.num_sequences must be >= 1");
  if (rc.data.val_sequences < 0) throw ArgumentError("data.val_sequences must be >= 0");
  rc.synth.validate();
  rc.model.validate();
  rc.train.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  auto config = default_run_config();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw IoError(file.string(), "cannot open config");
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(0, fmt::format("{}: {}", file.string(), e.what()));
    }
    merge_config(config, patch);
  }
  for (const auto& o : overrides) apply_override(config, o);
  return parse_run_config(config);
}

std::vector<PoseSequence> load_dataset(const std::filesystem::path& dir, double frame_interval_ms) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "dataset directory does not exist");
  std::vector<fs::path> files;
  const auto manifest_path = dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(in);
      if (manifest.contains("synth")) {
        frame_interval_ms = manifest["synth"].value("frame_interval_ms", frame_interval_ms);
      }
      for (const auto& name : manifest.at("sequences")) files.push_back(dir / name.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("{}: {}", manifest_path.string(), e.what()));
    }
  } else {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto ext = entry.path().extension();
      if (entry.is_regular_file() && (ext == ".csv" || ext == ".jsonl")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  }
  if (files.empty()) throw ArgumentError(fmt::format("no sequences found in {}", dir.string()));
  std::vector<PoseSequence> out;
  out.reserve(files.size());
  for (const auto& f : files) {
    out.push_back(load_sequence(f, pose_format_from_path(f), frame_interval_ms));
  }
  return out;
}

PreparedData prepare_pairs(const std::vector<PoseSequence>& sequences, const DataConfig& data) {
  if (sequences.empty()) throw ArgumentError("no sequences");
  if (data.val_sequences >= static_cast<int>(sequences.size())) {
    throw ArgumentError(fmt::format("val_sequences={} leaves no training sequences out of {}",
                                    data.val_sequences, sequences.size()));
  }
  PreparedData out;
  out.joints = sequences.front().joints();
  out.frame_interval_ms = sequences.front().frame_interval_ms();
  const std::size_t n_train = sequences.size() - static_cast<std::size_t>(data.val_sequences);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (sequences[s].joints() != out.joints) {
      throw SchemaError(fmt::format("sequence {} has {} joints, expected {}", s,
                                    sequences[s].joints(), out.joints));
    }
    auto pairs = window_split(sequences[s], data.t_obs, data.t_obs + data.t_future, data.stride,
                              fmt::format("seq{:04d}", s));
    auto& target = s < n_train ? out.train : out.val;
    for (auto& p : pairs) target.push_back(data.center_root ? remove_root_translation(std::move(p)) : std::move(p));
  }
  if (data.corrupt_fraction > 0.0) {
    out.train = corrupt_samples(std::move(out.train), data.corrupt_fraction,
                                data.corrupt_noise_std_mm, data.corrupt_seed);
  }
  return out;
}

}  // namespace uahmp
