// uahmp: synthesise data, train, evaluate, predict and visualise
// uncertainty-aware motion predictors.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uahmp/commands.hpp"
#include "uahmp/errors.hpp"
#include "uahmp/run_config.hpp"

namespace {

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware human motion prediction"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::optional<long long> seed;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "Dotted-key override, e.g. train.lr=0.001");
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option("--seed", seed, "Sets synth, model, train and corruption seeds");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic sinusoid dataset");
  add_common(synth);

  auto* train = app.add_subcommand("train", "Train a predictor on data.dir");
  add_common(train);

  std::string checkpoint;
  std::string dataset;
  std::vector<double> horizons;
  auto* eval = app.add_subcommand("eval", "Per-horizon MPJPE and calibration of a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--horizons", horizons, "Horizons in ms (defaults to the training config)");

  std::string observed;
  auto* predict = app.add_subcommand("predict", "Predict Gaussian future poses");
  add_common(predict);
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--observed", observed, "Observed sequence (.csv or .jsonl)")
      ->required()
      ->check(CLI::ExistingFile);

  std::string prediction;
  std::string truth;
  auto* visualize = app.add_subcommand("visualize", "Render uncertainty map and point-size plot");
  add_common(visualize);
  visualize->add_option("--prediction", prediction, "prediction.jsonl")->required()->check(CLI::ExistingFile);
  visualize->add_option("--truth", truth, "Ground-truth future sequence")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    if (seed) {
      for (const char* key : {"synth.seed", "model.seed", "train.seed", "data.corrupt_seed"}) {
        overrides.push_back(std::string(key) + "=" + std::to_string(*seed));
      }
    }
    nlohmann::json result;
    if (synth->parsed()) {
      result = uahmp::cmd_synth(uahmp::load_run_config(config_path, overrides), out_dir);
    } else if (train->parsed()) {
      result = uahmp::cmd_train(uahmp::load_run_config(config_path, overrides), out_dir);
    } else if (eval->parsed()) {
      std::optional<std::vector<double>> h;
      if (!horizons.empty()) h = horizons;
      result = uahmp::cmd_eval(checkpoint, dataset, h, out_dir);
    } else if (predict->parsed()) {
      result = uahmp::cmd_predict(checkpoint, observed, out_dir);
    } else if (visualize->parsed()) {
      std::optional<std::filesystem::path> t;
      if (!truth.empty()) t = truth;
      result = uahmp::cmd_visualize(prediction, t, out_dir);
    }
    std::cout << result.dump(2) << "\n";
  } catch (const uahmp::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
