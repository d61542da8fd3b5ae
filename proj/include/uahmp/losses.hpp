#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uahmp/skeleton_data.hpp"

namespace uahmp {

/// Variance floor and ceiling (mm^2) enforced by the predictor's exp-clamp head.
inline constexpr double kVarMin = 1e-6;
inline constexpr double kVarMax = 1e6;
/// Default temperature of the variance penalty weight.
inline constexpr double kDefaultTemperature = -0.2;

/// Per-frame, per-joint, per-axis Gaussian parameters (mean in mm, variance in mm^2),
/// laid out like PoseSequence: (frame, joint, axis).
class GaussianPoseSequence {
 public:
  GaussianPoseSequence() = default;
  GaussianPoseSequence(int frames, int joints, std::vector<double> mu, std::vector<double> var);

  /// Means copied from `means`, every variance set to `var`.
  static GaussianPoseSequence from_means(const PoseSequence& means, double var);

  int frames() const noexcept { return frames_; }
  int joints() const noexcept { return joints_; }
  std::size_t size() const noexcept { return mu_.size(); }

  double mu(int t, int joint, int axis) const { return mu_[index(t, joint, axis)]; }
  double var(int t, int joint, int axis) const { return var_[index(t, joint, axis)]; }

  std::span<const double> means() const noexcept { return mu_; }
  std::span<const double> variances() const noexcept { return var_; }

  PoseSequence mean_sequence(double frame_interval_ms = kDefaultFrameIntervalMs) const;

  bool operator==(const GaussianPoseSequence&) const = default;

 private:
  std::size_t index(int t, int joint, int axis) const {
    return (static_cast<std::size_t>(t) * joints_ + joint) * kAxes + axis;
  }

  int frames_ = 0;
  int joints_ = 0;
  std::vector<double> mu_;
  std::vector<double> var_;
};

/// Negative log of the Gaussian density, evaluated in log space.
double nll_density(double x, double mu, double var);

/// The NLL split into its named parts.
struct NllTerms {
  double log_variance = 0.0;  ///< 1/2 log var, the uncertainty regulariser
  double regression = 0.0;    ///< 1/2 (x - mu)^2 / var, the residual scaled by uncertainty
  double constant = 0.0;      ///< 1/2 log 2 pi
  double value() const;
};

NllTerms nll_decomposed(double x, double mu, double var);

/// Sum of the three per-axis NLL terms, averaged over frames and joints.
double sequence_nll(const GaussianPoseSequence& pred, const PoseSequence& truth);

/// Mean per-joint Euclidean error (mm).
double mpjpe(const PoseSequence& pred_means, const PoseSequence& truth);

/// Mean of var^k over the three axes.
double penalty_weight(double var_x, double var_y, double var_z, double k);

struct WeightedMpjpe {
  double value = 0.0;
  std::vector<double> weights;  ///< frames x joints, row-major
};

WeightedMpjpe weighted_mpjpe(const GaussianPoseSequence& pred, const PoseSequence& truth, double k);

struct LossBreakdown {
  double l_m = 0.0;
  double l_m_weighted = 0.0;
  double l_n = 0.0;
  double total = 0.0;
  int frames = 0;
  int joints = 0;
  std::vector<double> per_sample_weights;  ///< frames x joints, row-major
};

LossBreakdown total_loss(const GaussianPoseSequence& pred, const PoseSequence& truth, double k);

/// Serialises the four scalar terms.
nlohmann::json to_json(const LossBreakdown& b);

enum class LossMode { kMpjpeOnly, kNllOnly, kUaFull };

LossMode loss_mode_from_string(std::string_view name);
std::string_view to_string(LossMode mode);

/// The scalar a training step minimises under `mode`.
double objective(const LossBreakdown& b, LossMode mode);

/// Whether the penalty weight passes gradient to the variances.
enum class WeightGradient { kDetached, kFull };

/// Gradients with respect to the predicted means and the raw log-variance
/// parameter s (var = exp(s)), laid out like the prediction.
struct LossGradients {
  std::vector<double> d_mu;
  std::vector<double> d_log_var;
};

LossGradients sequence_nll_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth);
LossGradients mpjpe_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth);
LossGradients weighted_mpjpe_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth,
                                      double k, WeightGradient wg = WeightGradient::kDetached);

/// Gradient of `objective(total_loss(pred, truth, k), mode)`. With the default
/// detached weight, the weighted-MPJPE term contributes to the means only.
LossGradients loss_gradients(const GaussianPoseSequence& pred, const PoseSequence& truth, double k,
                             LossMode mode = LossMode::kUaFull,
                             WeightGradient wg = WeightGradient::kDetached);

}  // namespace uahmp
