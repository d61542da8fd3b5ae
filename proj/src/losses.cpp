#include "uahmp/losses.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "uahmp/errors.hpp"

namespace uahmp {

namespace {

const double kHalfLogTwoPi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_var(double var) {
  if (!(var > 0.0)) throw DomainError(fmt::format("variance must be positive, got {}", var));
}

void check_shapes(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  if (pred.frames() != truth.frames() || pred.joints() != truth.joints()) {
    throw ArgumentError(fmt::format("prediction shape {}x{} does not match truth {}x{}",
                                    pred.frames(), pred.joints(), truth.frames(),
                                    truth.joints()));
  }
  if (pred.frames() == 0) throw ArgumentError("empty prediction");
}

double norm_factor(int frames, int joints) {
  return 1.0 / (static_cast<double>(joints) * static_cast<double>(frames));
}

double joint_error(std::span<const double> pred, std::span<const double> truth, std::size_t base) {
  double sq = 0.0;
  for (int a = 0; a < kAxes; ++a) {
    const double e = pred[base + a] - truth[base + a];
    sq += e * e;
  }
  return std::sqrt(sq);
}

}  // namespace

GaussianPoseSequence::GaussianPoseSequence(int frames, int joints, std::vector<double> mu,
                                           std::vector<double> var)
    : frames_(frames), joints_(joints), mu_(std::move(mu)), var_(std::move(var)) {
  const auto n = static_cast<std::size_t>(frames) * joints * kAxes;
  if (frames < 0 || joints < 1 || mu_.size() != n || var_.size() != n) {
    throw ArgumentError(fmt::format("invalid Gaussian pose sequence shape {}x{}", frames, joints));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(mu_[i])) throw DataError("non-finite predicted mean");
    if (!(var_[i] >= kVarMin && var_[i] <= kVarMax)) {
      throw DomainError(fmt::format("variance {} outside [{}, {}]", var_[i], kVarMin, kVarMax));
    }
  }
}

GaussianPoseSequence GaussianPoseSequence::from_means(const PoseSequence& means, double var) {
  std::vector<double> mu(means.coords().begin(), means.coords().end());
  std::vector<double> v(mu.size(), var);
  return GaussianPoseSequence(means.frames(), means.joints(), std::move(mu), std::move(v));
}

PoseSequence GaussianPoseSequence::mean_sequence(double frame_interval_ms) const {
  return PoseSequence(frames_, joints_, mu_, frame_interval_ms);
}

double nll_density(double x, double mu, double var) {
  check_var(var);
  const double r = x - mu;
  // -log[(2 pi var)^(-1/2) exp(-r^2 / (2 var))]
  return 0.5 * std::log(2.0 * std::numbers::pi * var) + r * r / (2.0 * var);
}

double NllTerms::value() const { return (log_variance + regression) + constant; }

NllTerms nll_decomposed(double x, double mu, double var) {
  check_var(var);
  const double r = x - mu;
  return NllTerms{0.5 * std::log(var), 0.5 * (r * r / var), kHalfLogTwoPi};
}

double sequence_nll(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  check_shapes(pred, truth);
  const auto mu = pred.means();
  const auto var = pred.variances();
  const auto x = truth.coords();
  double sum = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) sum += nll_decomposed(x[i], mu[i], var[i]).value();
  return sum * norm_factor(pred.frames(), pred.joints());
}

double mpjpe(const PoseSequence& pred_means, const PoseSequence& truth) {
  if (pred_means.frames() != truth.frames() || pred_means.joints() != truth.joints()) {
    throw ArgumentError(fmt::format("prediction shape {}x{} does not match truth {}x{}",
                                    pred_means.frames(), pred_means.joints(), truth.frames(),
                                    truth.joints()));
  }
  if (truth.frames() == 0) throw ArgumentError("empty prediction");
  const auto p = pred_means.coords();
  const auto x = truth.coords();
  double sum = 0.0;
  for (std::size_t base = 0; base < p.size(); base += kAxes) sum += joint_error(p, x, base);
  return sum * norm_factor(truth.frames(), truth.joints());
}

double penalty_weight(double var_x, double var_y, double var_z, double k) {
  check_var(var_x);
  check_var(var_y);
  check_var(var_z);
  return (std::pow(var_x, k) + std::pow(var_y, k) + std::pow(var_z, k)) / 3.0;
}

WeightedMpjpe weighted_mpjpe(const GaussianPoseSequence& pred, const PoseSequence& truth,
                             double k) {
  check_shapes(pred, truth);
  const auto mu = pred.means();
  const auto var = pred.variances();
  const auto x = truth.coords();
  WeightedMpjpe out;
  out.weights.resize(static_cast<std::size_t>(pred.frames()) * pred.joints());
  double sum = 0.0;
  for (std::size_t j = 0; j < out.weights.size(); ++j) {
    const std::size_t base = j * kAxes;
    const double w = penalty_weight(var[base], var[base + 1], var[base + 2], k);
    out.weights[j] = w;
    sum += joint_error(mu, x, base) * w;
  }
  out.value = sum * norm_factor(pred.frames(), pred.joints());
  return out;
}

LossBreakdown total_loss(const GaussianPoseSequence& pred, const PoseSequence& truth, double k) {
  check_shapes(pred, truth);
  auto weighted = weighted_mpjpe(pred, truth, k);
  LossBreakdown b;
  b.l_m = mpjpe(pred.mean_sequence(truth.frame_interval_ms()), truth);
  b.l_m_weighted = weighted.value;
  b.l_n = sequence_nll(pred, truth);
  b.total = b.l_m_weighted + b.l_n;
  b.frames = pred.frames();
  b.joints = pred.joints();
  b.per_sample_weights = std::move(weighted.weights);
  return b;
}

nlohmann::json to_json(const LossBreakdown& b) {
  return nlohmann::json{{"l_m", b.l_m}, {"l_m_weighted", b.l_m_weighted}, {"l_n", b.l_n},
                        {"total", b.total}};
}

LossMode loss_mode_from_string(std::string_view name) {
  if (name == "mpjpe_only") return LossMode::kMpjpeOnly;
  if (name == "nll_only") return LossMode::kNllOnly;
  if (name == "ua_full") return LossMode::kUaFull;
  throw ArgumentError(fmt::format("unknown loss mode '{}'", name));
}

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kMpjpeOnly: return "mpjpe_only";
    case LossMode::kNllOnly: return "nll_only";
    case LossMode::kUaFull: return "ua_full";
  }
  return "unknown";
}

double objective(const LossBreakdown& b, LossMode mode) {
  switch (mode) {
    case LossMode::kMpjpeOnly: return b.l_m;
    case LossMode::kNllOnly: return b.l_n;
    case LossMode::kUaFull: return b.total;
  }
  return b.total;
}

LossGradients sequence_nll_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  check_shapes(pred, truth);
  const auto mu = pred.means();
  const auto var = pred.variances();
  const auto x = truth.coords();
  const double scale = norm_factor(pred.frames(), pred.joints());
  LossGradients g{std::vector<double>(mu.size()), std::vector<double>(mu.size())};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double r = mu[i] - x[i];
    g.d_mu[i] = r / var[i] * scale;
    // d/ds with var = exp(s): var * 1/2 (1/var - r^2/var^2)
    g.d_log_var[i] = 0.5 * (1.0 - r * r / var[i]) * scale;
  }
  return g;
}

namespace {

// Adds the gradient of sum_j w_j ||e_j|| * scale; w_j = 1 when `k` is empty.
void add_norm_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth,
                       const double* k, WeightGradient wg, LossGradients& g) {
  const auto mu = pred.means();
  const auto var = pred.variances();
  const auto x = truth.coords();
  const double scale = norm_factor(pred.frames(), pred.joints());
  for (std::size_t base = 0; base < mu.size(); base += kAxes) {
    const double err = joint_error(mu, x, base);
    const double w = k ? penalty_weight(var[base], var[base + 1], var[base + 2], *k) : 1.0;
    if (err > 0.0) {
      for (int a = 0; a < kAxes; ++a) {
        g.d_mu[base + a] += w * (mu[base + a] - x[base + a]) / err * scale;
      }
    }
    if (k && wg == WeightGradient::kFull) {
      for (int a = 0; a < kAxes; ++a) {
        g.d_log_var[base + a] += err * (*k) * std::pow(var[base + a], *k) / 3.0 * scale;
      }
    }
  }
}

}  // namespace

LossGradients mpjpe_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  check_shapes(pred, truth);
  LossGradients g{std::vector<double>(pred.size()), std::vector<double>(pred.size())};
  add_norm_gradient(pred, truth, nullptr, WeightGradient::kDetached, g);
  return g;
}

LossGradients weighted_mpjpe_gradient(const GaussianPoseSequence& pred, const PoseSequence& truth,
                                      double k, WeightGradient wg) {
  check_shapes(pred, truth);
  LossGradients g{std::vector<double>(pred.size()), std::vector<double>(pred.size())};
  add_norm_gradient(pred, truth, &k, wg, g);
  return g;
}

LossGradients loss_gradients(const GaussianPoseSequence& pred, const PoseSequence& truth, double k,
                             LossMode mode, WeightGradient wg) {
  switch (mode) {
    case LossMode::kMpjpeOnly: return mpjpe_gradient(pred, truth);
    case LossMode::kNllOnly: return sequence_nll_gradient(pred, truth);
    case LossMode::kUaFull: break;
  }
  auto g = sequence_nll_gradient(pred, truth);
  add_norm_gradient(pred, truth, &k, wg, g);
  return g;
}

}  // namespace uahmp
