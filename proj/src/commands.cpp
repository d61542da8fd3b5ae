#include "uahmp/commands.hpp"

#include <fstream>

#include <fmt/format.h>

#include "uahmp/errors.hpp"
#include "uahmp/evaluation.hpp"

#ifndef UAHMP_BUILD_ID
#define UAHMP_BUILD_ID "unknown"
#endif

namespace uahmp {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string(), "cannot create output directory");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

void write_run_info(const fs::path& out_dir, const std::string& command, const nlohmann::json& config) {
  const nlohmann::json info{{"command", command},
                            {"build_id", build_id()},
                            {"config_hash", hash_json(config)},
                            {"config", config}};
  write_text(out_dir / "run_info.json", info.dump(2) + "\n");
}

DataConfig data_from_checkpoint(const ModelCheckpoint& ckpt) {
  DataConfig d;
  d.t_obs = ckpt.predictor.t_obs;
  d.t_future = ckpt.predictor.t_future;
  const auto data = ckpt.run_config.value("data", nlohmann::json::object());
  d.stride = data.value("stride", d.stride);
  d.center_root = data.value("center_root", d.center_root);
  d.val_sequences = 0;
  return d;
}

}  // namespace

std::string build_id() { return UAHMP_BUILD_ID; }

nlohmann::json cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
  ensure_dir(out_dir);
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json seeds = nlohmann::json::array();
  for (int i = 0; i < cfg.num_sequences; ++i) {
    SynthConfig one = cfg.synth;
    one.seed = cfg.synth.seed + static_cast<std::uint64_t>(i);
    const auto name = fmt::format("seq_{:04d}.csv", i);
    save_sequence(synth_generate(one), out_dir / name);
    names.push_back(name);
    seeds.push_back(one.seed);
  }
  const nlohmann::json manifest{
      {"synth", cfg.synth},
      {"num_sequences", cfg.num_sequences},
      {"sequences", names},
      {"sequence_seeds", seeds},
      {"noise_schedule",
       {{"form", "std_mm = noise_floor_mm + frame * noise_growth_per_frame"},
        {"noise_floor_mm", cfg.synth.noise_floor_mm},
        {"noise_growth_per_frame", cfg.synth.noise_growth_per_frame}}}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  write_run_info(out_dir, "synth", cfg.resolved);
  return manifest;
}

nlohmann::json cmd_train(const RunConfig& cfg, const fs::path& out_dir) {
  if (cfg.data.dir.empty()) throw ArgumentError("data.dir is required for training");
  const auto sequences = load_dataset(cfg.data.dir, cfg.synth.frame_interval_ms);
  const auto data = prepare_pairs(sequences, cfg.data);
  PredictorConfig model = cfg.model;
  model.joints = data.joints;
  ensure_dir(out_dir);

  auto resolved = cfg.resolved;
  resolved["model"] = model;
  const nlohmann::json run{{"data",
                            {{"stride", cfg.data.stride},
                             {"center_root", cfg.data.center_root},
                             {"frame_interval_ms", data.frame_interval_ms}}},
                           {"eval", {{"horizons_ms", cfg.horizons_ms}}}};

  auto result = train(cfg.train, data.train, data.val, model);
  result.best.run_config = run;
  result.last.run_config = run;
  save_checkpoint(result.best, out_dir / "best.ckpt");
  save_checkpoint(result.last, out_dir / "last.ckpt");
  std::string log;
  for (const auto& m : result.metrics) log += m.dump() + "\n";
  write_text(out_dir / "metrics.jsonl", log);
  const auto heads = to_json(head_report(model));
  write_text(out_dir / "head_report.json", heads.dump(2) + "\n");
  write_run_info(out_dir, "train", resolved);

  return nlohmann::json{{"train_pairs", data.train.size()},
                        {"val_pairs", data.val.size()},
                        {"epochs", result.last.state.epoch},
                        {"best_epoch", result.best.state.epoch},
                        {"best_val_mpjpe_mm", result.best.state.best_val_mpjpe},
                        {"config_hash", result.best.config_hash()},
                        {"head_report", heads}};
}

nlohmann::json cmd_eval(const fs::path& checkpoint, const fs::path& dataset_dir,
                        const std::optional<std::vector<double>>& horizons_ms,
                        const fs::path& out_dir) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto run_data = ckpt.run_config.value("data", nlohmann::json::object());
  const double interval = run_data.value("frame_interval_ms", kDefaultFrameIntervalMs);
  const auto sequences = load_dataset(dataset_dir, interval);
  const auto data = prepare_pairs(sequences, data_from_checkpoint(ckpt));
  if (data.train.empty()) throw ArgumentError("dataset yields no evaluation windows");

  std::vector<double> horizons = horizons_ms.value_or(std::vector<double>{});
  if (!horizons_ms) {
    horizons = ckpt.run_config.value("eval", nlohmann::json::object())
                   .value("horizons_ms", std::vector<double>{});
  }

  const Predictor predictor(ckpt.predictor);
  std::vector<GaussianPoseSequence> preds;
  std::vector<PoseSequence> truths;
  double mpjpe_sum = 0.0;
  for (const auto& pair : data.train) {
    preds.push_back(predictor.forward(ckpt.state.params, pair.observed));
    truths.push_back(pair.future);
    mpjpe_sum += mpjpe(preds.back().mean_sequence(interval), pair.future);
  }
  nlohmann::json report{{"checkpoint", checkpoint.string()},
                        {"config_hash", ckpt.config_hash()},
                        {"windows", preds.size()},
                        {"mpjpe_mm", mpjpe_sum / static_cast<double>(preds.size())},
                        {"calibration", to_json(calibration_stats(preds, truths))},
                        {"mean_var_by_frame", mean_uncertainty_map(preds).row_means()}};
  if (!horizons.empty()) {
    report["horizons"] = to_json(mpjpe_at_horizons(preds, truths, horizons, interval));
  }
  ensure_dir(out_dir);
  write_text(out_dir / "eval_report.json", report.dump(2) + "\n");
  write_run_info(out_dir, "eval",
                 nlohmann::json{{"checkpoint", checkpoint.string()},
                                {"dataset", dataset_dir.string()},
                                {"horizons_ms", horizons},
                                {"checkpoint_config", ckpt.config_json()}});
  return report;
}

nlohmann::json cmd_predict(const fs::path& checkpoint, const fs::path& observed,
                           const fs::path& out_dir) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto run_data = ckpt.run_config.value("data", nlohmann::json::object());
  const double interval = run_data.value("frame_interval_ms", kDefaultFrameIntervalMs);
  const bool center = run_data.value("center_root", true);
  const auto seq = load_sequence(observed, pose_format_from_path(observed), interval);
  const int t_obs = ckpt.predictor.t_obs;
  if (seq.frames() < t_obs) {
    throw ArgumentError(fmt::format("{} has {} frames, the model needs {}", observed.string(),
                                    seq.frames(), t_obs));
  }
  auto window = seq.slice(seq.frames() - t_obs, t_obs);
  std::array<double, kAxes> root{0.0, 0.0, 0.0};
  if (center) {
    for (int a = 0; a < kAxes; ++a) root[a] = window.at(0, 0, a);
    for (int t = 0; t < window.frames(); ++t)
      for (int j = 0; j < window.joints(); ++j)
        for (int a = 0; a < kAxes; ++a) window.at(t, j, a) -= root[a];
  }
  const Predictor predictor(ckpt.predictor);
  const auto pred = predictor.forward(ckpt.state.params, window);
  std::vector<double> mu(pred.means().begin(), pred.means().end());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += root[i % kAxes];
  const GaussianPoseSequence out(pred.frames(), pred.joints(), std::move(mu),
                                 {pred.variances().begin(), pred.variances().end()});
  ensure_dir(out_dir);
  save_prediction(out, out_dir / "prediction.jsonl", seq.frames());
  write_run_info(out_dir, "predict",
                 nlohmann::json{{"checkpoint", checkpoint.string()},
                                {"observed", observed.string()},
                                {"checkpoint_config", ckpt.config_json()}});
  return nlohmann::json{{"frames", out.frames()},
                        {"joints", out.joints()},
                        {"first_frame", seq.frames()},
                        {"prediction", (out_dir / "prediction.jsonl").string()}};
}

nlohmann::json cmd_visualize(const fs::path& prediction, const std::optional<fs::path>& truth,
                             const fs::path& out_dir) {
  const auto pred = load_prediction(prediction);
  std::optional<PoseSequence> truth_seq;
  if (truth) {
    const auto full = load_sequence(*truth, pose_format_from_path(*truth));
    if (full.frames() < pred.frames() || full.joints() != pred.joints()) {
      throw ArgumentError(fmt::format("{} does not cover the {}x{} prediction", truth->string(),
                                      pred.frames(), pred.joints()));
    }
    truth_seq = full.slice(0, pred.frames());
  }
  ensure_dir(out_dir);
  const auto map = uncertainty_map(pred);
  render_map(map, out_dir / "uncertainty_map.csv", MapFormat::kCsv);
  render_map(map, out_dir / "uncertainty_map.pgm", MapFormat::kPgm);
  render_map(map, out_dir / "uncertainty_map.svg", MapFormat::kSvg);
  render_pointsize_svg(pred, truth_seq ? &*truth_seq : nullptr, out_dir / "pointsize.svg");
  nlohmann::json info{{"prediction", prediction.string()}, {"truth", nullptr}};
  if (truth) info["truth"] = truth->string();
  write_run_info(out_dir, "visualize", info);
  return nlohmann::json{{"frames", map.frames},
                        {"joints", map.joints},
                        {"row_means", map.row_means()},
                        {"files",
                         {"uncertainty_map.csv", "uncertainty_map.pgm", "uncertainty_map.svg",
                          "pointsize.svg"}}};
}

}  // namespace uahmp
