#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "uahmp/losses.hpp"
#include "uahmp/skeleton_data.hpp"

namespace uahmp {

struct PredictorConfig {
  int n_dct_coeffs = 10;
  int hidden_dim = 32;
  int n_blocks = 1;
  int joints = 4;
  int t_obs = 10;
  int t_future = 10;
  double init_scale = 1.0;
  /// Coordinates are divided by this before entering the network and the mean
  /// residual is multiplied by it on the way out.
  double coord_scale_mm = 100.0;
  std::uint64_t seed = 0;

  int channels() const { return joints * kAxes; }
  int padded_length() const { return t_obs + t_future; }
  void validate() const;
  bool operator==(const PredictorConfig&) const = default;
};

void to_json(nlohmann::json& j, const PredictorConfig& cfg);
void from_json(const nlohmann::json& j, PredictorConfig& cfg);

/// out = adj * in * weight + bias, with the bias row broadcast over channels.
struct GraphLayer {
  Eigen::MatrixXd adj;     ///< channels x channels
  Eigen::MatrixXd weight;  ///< in_features x out_features
  Eigen::MatrixXd bias;    ///< 1 x out_features
};

/// Trunk: an input graph layer (DCT coefficients -> hidden) and residual tanh
/// blocks. Heads: `mean_head` emits a DCT-space residual trajectory, `var_head`
/// emits one raw log-variance per channel and future frame.
struct ModelParams {
  PredictorConfig config;
  GraphLayer input;
  std::vector<GraphLayer> blocks;
  GraphLayer mean_head;
  GraphLayer var_head;

  /// Visits every tensor in serialisation order as (name, matrix, rank).
  /// Biases are rank 1, everything else rank 2.
  template <class F>
  void for_each_tensor(F&& fn) {
    visit_layer("input", input, fn);
    for (std::size_t i = 0; i < blocks.size(); ++i) visit_layer("block" + std::to_string(i), blocks[i], fn);
    visit_layer("head.mean", mean_head, fn);
    visit_layer("head.var", var_head, fn);
  }
  template <class F>
  void for_each_tensor(F&& fn) const {
    const_cast<ModelParams*>(this)->for_each_tensor(
        [&fn](const std::string& name, const Eigen::MatrixXd& m, int rank) { fn(name, m, rank); });
  }

  std::size_t parameter_count() const;
  bool operator==(const ModelParams& other) const;

 private:
  template <class F>
  static void visit_layer(const std::string& prefix, GraphLayer& layer, F& fn) {
    fn(prefix + ".adj", layer.adj, 2);
    fn(prefix + ".weight", layer.weight, 2);
    fn(prefix + ".bias", layer.bias, 1);
  }
};

/// Same shapes as `params`, all zeros.
ModelParams zeros_like(const ModelParams& params);
Eigen::VectorXd flatten(const ModelParams& params);
void assign_flat(ModelParams& params, const Eigen::VectorXd& flat);

ModelParams init_params(const PredictorConfig& cfg);

/// Replicates the last observed frame up to t_obs + t_future frames and returns the
/// truncated DCT of every joint-axis series: channels x n_dct_coeffs, in mm.
Eigen::MatrixXd pad_and_encode(const PoseSequence& observed, const PredictorConfig& cfg);

/// Output-size bookkeeping for the Gaussian head against a mean-only head.
struct HeadReport {
  std::size_t mean_only_head_outputs = 0;
  std::size_t gaussian_head_outputs = 0;
  std::size_t added_head_outputs = 0;
  std::size_t mean_head_parameters = 0;
  std::size_t variance_head_parameters = 0;
  std::size_t total_parameters = 0;
  std::size_t total_parameters_mean_only = 0;
};

HeadReport head_report(const PredictorConfig& cfg);
nlohmann::json to_json(const HeadReport& report);

/// Intermediates of one forward pass, consumed by Predictor::backward.
struct ForwardCache {
  Eigen::MatrixXd features;                  ///< scaled DCT input, channels x coeffs
  std::vector<Eigen::MatrixXd> activations;  ///< [0] input layer output, [b+1] block b output
  std::vector<Eigen::MatrixXd> block_tanh;   ///< tanh(z) of each residual block
  Eigen::MatrixXd raw_log_var;               ///< unclamped variance head output, channels x t_future
};

class Predictor {
 public:
  explicit Predictor(PredictorConfig cfg);

  const PredictorConfig& config() const noexcept { return cfg_; }

  GaussianPoseSequence forward(const ModelParams& params, const PoseSequence& observed) const;
  GaussianPoseSequence forward(const ModelParams& params, const PoseSequence& observed,
                               ForwardCache& cache) const;

  /// Reverse-mode gradient of a loss whose gradient with respect to the prediction
  /// (means and raw log-variances) is `upstream`.
  ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                       const LossGradients& upstream) const;

 private:
  void check_params(const ModelParams& params) const;

  PredictorConfig cfg_;
  Eigen::MatrixXd basis_;  ///< n_dct_coeffs x padded_length
};

}  // namespace uahmp
