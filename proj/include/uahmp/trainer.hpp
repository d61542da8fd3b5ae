#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uahmp/errors.hpp"
#include "uahmp/losses.hpp"
#include "uahmp/predictor.hpp"
#include "uahmp/skeleton_data.hpp"

namespace uahmp {

struct TrainConfig {
  LossMode loss_mode = LossMode::kUaFull;
  double k = kDefaultTemperature;
  double lr = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int epochs = 50;
  std::optional<double> grad_clip_norm = 1.0;
  double lr_decay_per_epoch = 0.96;
  /// Stop after this many epochs without a validation improvement; 0 disables.
  int patience = 0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  int epoch = 0;  ///< completed epochs
  int best_epoch = 0;
  double best_val_mpjpe = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng;

  static TrainState fresh(const ModelParams& params, std::uint64_t seed);
};

/// One Adam update with bias correction. Throws NumericError on a non-finite gradient.
void adam_step(TrainState& state, const ModelParams& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct ModelCheckpoint {
  PredictorConfig predictor;
  TrainConfig train;
  TrainState state;
  /// Free-form run configuration (data preparation, evaluation settings).
  nlohmann::json run_config = nlohmann::json::object();

  nlohmann::json config_json() const;
  std::string config_hash() const;
};

/// Magic "UAHMP1", u32 tensor count, then per tensor: u32 name length, name,
/// u32 rank, u32 dims, float64 payload. All little-endian. The configuration JSON is
/// the trailing tensor "config.json", one float64 per byte.
void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);

/// 64-bit FNV-1a of the JSON dump, as 16 hex digits.
std::string hash_json(const nlohmann::json& j);

/// Aggregates of a model over a set of sample pairs.
struct DatasetMetrics {
  LossBreakdown mean_loss;  ///< per-term means over samples (weights left empty)
  double objective = 0.0;
  double mpjpe_mm = 0.0;
  std::vector<double> mean_var_by_frame;
  std::optional<double> mean_w_clean;
  std::optional<double> mean_w_corrupted;
};

DatasetMetrics evaluate_pairs(const Predictor& predictor, const ModelParams& params,
                              const std::vector<SamplePair>& pairs, double k, LossMode mode);

struct TrainResult {
  ModelCheckpoint best;  ///< lowest validation MPJPE
  ModelCheckpoint last;
  std::vector<nlohmann::json> metrics;  ///< one object per logged epoch
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, ModelCheckpoint last_good)
      : NumericError(-1, what), last_good_(std::move(last_good)) {}
  const ModelCheckpoint& last_good() const noexcept { return last_good_; }

 private:
  ModelCheckpoint last_good_;
};

TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& train_pairs,
                  const std::vector<SamplePair>& val_pairs, const PredictorConfig& predictor_cfg);

/// Continues `last` up to cfg.epochs completed epochs. `best` is the best-validation
/// checkpoint written alongside `last`.
TrainResult resume(const TrainConfig& cfg, const std::vector<SamplePair>& train_pairs,
                   const std::vector<SamplePair>& val_pairs, const ModelCheckpoint& last,
                   const ModelCheckpoint& best);

}  // namespace uahmp
