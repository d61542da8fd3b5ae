#include "uahmp/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "uahmp/dct.hpp"
#include "uahmp/errors.hpp"

namespace uahmp {

namespace {

const double kLogVarMin = std::log(kVarMin);
const double kLogVarMax = std::log(kVarMax);

Eigen::MatrixXd apply(const GraphLayer& layer, const Eigen::MatrixXd& in) {
  Eigen::MatrixXd out = layer.adj * (in * layer.weight);
  out.rowwise() += layer.bias.row(0);
  return out;
}

// Accumulates parameter gradients of `apply(layer, in)` and returns d/d(in).
Eigen::MatrixXd apply_backward(const GraphLayer& layer, const Eigen::MatrixXd& in,
                               const Eigen::MatrixXd& grad_out, GraphLayer& grad) {
  grad.adj += grad_out * (in * layer.weight).transpose();
  grad.weight += (layer.adj * in).transpose() * grad_out;
  grad.bias += grad_out.colwise().sum();
  return layer.adj.transpose() * grad_out * layer.weight.transpose();
}

void check_finite(const Eigen::MatrixXd& m, int layer, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(layer, fmt::format("non-finite {} at layer {}", what, layer));
  }
}

GraphLayer zero_layer(int channels, int in, int out) {
  return GraphLayer{Eigen::MatrixXd::Zero(channels, channels), Eigen::MatrixXd::Zero(in, out),
                    Eigen::MatrixXd::Zero(1, out)};
}

}  // namespace

void PredictorConfig::validate() const {
  if (joints < 1) throw ArgumentError("predictor: joints must be >= 1");
  if (t_obs < 1) throw ArgumentError("predictor: t_obs must be >= 1");
  if (t_future < 0) throw ArgumentError("predictor: t_future must be >= 0");
  if (n_dct_coeffs < 1 || n_dct_coeffs > t_obs + t_future) {
    throw ArgumentError(fmt::format("predictor: n_dct_coeffs must be in [1, {}]", t_obs + t_future));
  }
  if (n_blocks < 1 || hidden_dim < 1) throw ArgumentError("predictor: n_blocks and hidden_dim must be >= 1");
  if (!(init_scale >= 0.0)) throw ArgumentError("predictor: init_scale must be non-negative");
  if (!(coord_scale_mm > 0.0)) throw ArgumentError("predictor: coord_scale_mm must be positive");
}

void to_json(nlohmann::json& j, const PredictorConfig& cfg) {
  j = nlohmann::json{{"n_dct_coeffs", cfg.n_dct_coeffs}, {"hidden_dim", cfg.hidden_dim},
                     {"n_blocks", cfg.n_blocks},         {"joints", cfg.joints},
                     {"t_obs", cfg.t_obs},               {"t_future", cfg.t_future},
                     {"init_scale", cfg.init_scale},     {"coord_scale_mm", cfg.coord_scale_mm},
                     {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, PredictorConfig& cfg) {
  PredictorConfig d;
  cfg.n_dct_coeffs = j.value("n_dct_coeffs", d.n_dct_coeffs);
  cfg.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  cfg.n_blocks = j.value("n_blocks", d.n_blocks);
  cfg.joints = j.value("joints", d.joints);
  cfg.t_obs = j.value("t_obs", d.t_obs);
  cfg.t_future = j.value("t_future", d.t_future);
  cfg.init_scale = j.value("init_scale", d.init_scale);
  cfg.coord_scale_mm = j.value("coord_scale_mm", d.coord_scale_mm);
  cfg.seed = j.value("seed", d.seed);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&n](const std::string&, const Eigen::MatrixXd& m, int) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

bool ModelParams::operator==(const ModelParams& other) const {
  if (!(config == other.config) || blocks.size() != other.blocks.size()) return false;
  const auto a = flatten(*this);
  const auto b = flatten(other);
  return a.size() == b.size() && a == b;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out = params;
  out.for_each_tensor([](const std::string&, Eigen::MatrixXd& m, int) { m.setZero(); });
  return out;
}

Eigen::VectorXd flatten(const ModelParams& params) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(params.parameter_count()));
  Eigen::Index offset = 0;
  params.for_each_tensor([&](const std::string&, const Eigen::MatrixXd& m, int) {
    flat.segment(offset, m.size()) = m.reshaped();
    offset += m.size();
  });
  return flat;
}

void assign_flat(ModelParams& params, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(params.parameter_count())) {
    throw ArgumentError("flat parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  params.for_each_tensor([&](const std::string&, Eigen::MatrixXd& m, int) {
    m.reshaped() = flat.segment(offset, m.size());
    offset += m.size();
  });
}

ModelParams init_params(const PredictorConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels();
  const int h = cfg.hidden_dim;
  ModelParams p;
  p.config = cfg;
  p.input = zero_layer(c, cfg.n_dct_coeffs, h);
  p.blocks.assign(static_cast<std::size_t>(cfg.n_blocks), zero_layer(c, h, h));
  p.mean_head = zero_layer(c, h, cfg.n_dct_coeffs);
  p.var_head = zero_layer(c, h, cfg.t_future);

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x494eu};
  std::mt19937_64 rng(seq);
  auto fill = [&](Eigen::MatrixXd& m, int fan_in) {
    if (cfg.init_scale == 0.0 || m.size() == 0) return;
    const double bound = cfg.init_scale / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.reshaped()(i) = uniform(rng);
  };
  auto fill_layer = [&](GraphLayer& layer) {
    fill(layer.adj, c);
    fill(layer.weight, static_cast<int>(layer.weight.rows()));
  };
  fill_layer(p.input);
  for (auto& b : p.blocks) fill_layer(b);
  fill_layer(p.mean_head);
  // Variance head weight and bias stay zero so every initial variance is exp(0) = 1.
  fill(p.var_head.adj, c);
  return p;
}

Eigen::MatrixXd pad_and_encode(const PoseSequence& observed, const PredictorConfig& cfg) {
  if (observed.frames() != cfg.t_obs || observed.joints() != cfg.joints) {
    throw ArgumentError(fmt::format("observed sequence is {}x{}, predictor expects {}x{}",
                                    observed.frames(), observed.joints(), cfg.t_obs, cfg.joints));
  }
  const int len = cfg.padded_length();
  Eigen::MatrixXd padded(cfg.channels(), len);
  for (int t = 0; t < len; ++t) {
    const int src = std::min(t, cfg.t_obs - 1);
    for (int j = 0; j < cfg.joints; ++j) {
      for (int a = 0; a < kAxes; ++a) padded(j * kAxes + a, t) = observed.at(src, j, a);
    }
  }
  return padded * dct_basis(len, cfg.n_dct_coeffs).transpose();
}

HeadReport head_report(const PredictorConfig& cfg) {
  const auto params = init_params(cfg);
  const auto layer_size = [](const GraphLayer& l) {
    return static_cast<std::size_t>(l.adj.size() + l.weight.size() + l.bias.size());
  };
  HeadReport r;
  r.mean_only_head_outputs = static_cast<std::size_t>(cfg.channels()) * cfg.t_future;
  r.gaussian_head_outputs = 2 * r.mean_only_head_outputs;
  r.added_head_outputs = r.gaussian_head_outputs - r.mean_only_head_outputs;
  r.mean_head_parameters = layer_size(params.mean_head);
  r.variance_head_parameters = layer_size(params.var_head);
  r.total_parameters = params.parameter_count();
  r.total_parameters_mean_only = r.total_parameters - r.variance_head_parameters;
  return r;
}

nlohmann::json to_json(const HeadReport& r) {
  return nlohmann::json{{"mean_only_head_outputs", r.mean_only_head_outputs},
                        {"gaussian_head_outputs", r.gaussian_head_outputs},
                        {"added_head_outputs", r.added_head_outputs},
                        {"mean_head_parameters", r.mean_head_parameters},
                        {"variance_head_parameters", r.variance_head_parameters},
                        {"total_parameters", r.total_parameters},
                        {"total_parameters_mean_only", r.total_parameters_mean_only}};
}

Predictor::Predictor(PredictorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  basis_ = dct_basis(cfg_.padded_length(), cfg_.n_dct_coeffs);
}

void Predictor::check_params(const ModelParams& params) const {
  const int c = cfg_.channels();
  const int h = cfg_.hidden_dim;
  const auto ok = [c](const GraphLayer& l, int in, int out) {
    return l.adj.rows() == c && l.adj.cols() == c && l.weight.rows() == in &&
           l.weight.cols() == out && l.bias.rows() == 1 && l.bias.cols() == out;
  };
  bool valid = ok(params.input, cfg_.n_dct_coeffs, h) &&
               params.blocks.size() == static_cast<std::size_t>(cfg_.n_blocks) &&
               ok(params.mean_head, h, cfg_.n_dct_coeffs) && ok(params.var_head, h, cfg_.t_future);
  for (const auto& b : params.blocks) valid = valid && ok(b, h, h);
  if (!valid) throw ArgumentError("model parameters do not match the predictor configuration");
}

GaussianPoseSequence Predictor::forward(const ModelParams& params,
                                        const PoseSequence& observed) const {
  ForwardCache cache;
  return forward(params, observed, cache);
}

GaussianPoseSequence Predictor::forward(const ModelParams& params, const PoseSequence& observed,
                                        ForwardCache& cache) const {
  check_params(params);
  if (observed.frames() != cfg_.t_obs || observed.joints() != cfg_.joints) {
    throw ArgumentError(fmt::format("observed sequence is {}x{}, predictor expects {}x{}",
                                    observed.frames(), observed.joints(), cfg_.t_obs, cfg_.joints));
  }
  const int c = cfg_.channels();
  const int len = cfg_.padded_length();
  const double scale = cfg_.coord_scale_mm;

  Eigen::MatrixXd padded(c, len);
  for (int t = 0; t < len; ++t) {
    const int src = std::min(t, cfg_.t_obs - 1);
    for (int j = 0; j < cfg_.joints; ++j) {
      for (int a = 0; a < kAxes; ++a) padded(j * kAxes + a, t) = observed.at(src, j, a) / scale;
    }
  }
  cache.features = padded * basis_.transpose();
  cache.activations.clear();
  cache.block_tanh.clear();

  int layer = 0;
  Eigen::MatrixXd hidden = apply(params.input, cache.features).array().tanh().matrix();
  check_finite(hidden, layer, "activation");
  cache.activations.push_back(hidden);
  for (const auto& block : params.blocks) {
    ++layer;
    Eigen::MatrixXd act = apply(block, hidden).array().tanh().matrix();
    hidden += act;
    check_finite(hidden, layer, "activation");
    cache.block_tanh.push_back(std::move(act));
    cache.activations.push_back(hidden);
  }

  ++layer;
  const Eigen::MatrixXd residual = apply(params.mean_head, hidden) * basis_;  // c x len
  check_finite(residual, layer, "mean residual");
  ++layer;
  cache.raw_log_var = apply(params.var_head, hidden);  // c x t_future
  check_finite(cache.raw_log_var, layer, "raw log-variance");

  const auto n = static_cast<std::size_t>(c) * cfg_.t_future;
  std::vector<double> mu(n);
  std::vector<double> var(n);
  for (int f = 0; f < cfg_.t_future; ++f) {
    for (int ch = 0; ch < c; ++ch) {
      const auto idx = static_cast<std::size_t>(f) * c + ch;
      mu[idx] = observed.at(cfg_.t_obs - 1, ch / kAxes, ch % kAxes) +
                scale * residual(ch, cfg_.t_obs + f);
      const double s = std::clamp(cache.raw_log_var(ch, f), kLogVarMin, kLogVarMax);
      var[idx] = std::clamp(std::exp(s), kVarMin, kVarMax);
    }
  }
  return GaussianPoseSequence(cfg_.t_future, cfg_.joints, std::move(mu), std::move(var));
}

ModelParams Predictor::backward(const ModelParams& params, const ForwardCache& cache,
                                const LossGradients& upstream) const {
  check_params(params);
  const int c = cfg_.channels();
  const int len = cfg_.padded_length();
  const auto n = static_cast<std::size_t>(c) * cfg_.t_future;
  if (upstream.d_mu.size() != n || upstream.d_log_var.size() != n ||
      cache.activations.size() != params.blocks.size() + 1 ||
      cache.block_tanh.size() != params.blocks.size() || cache.raw_log_var.rows() != c ||
      cache.raw_log_var.cols() != cfg_.t_future || cache.features.rows() != c ||
      cache.features.cols() != cfg_.n_dct_coeffs) {
    throw ArgumentError("forward cache or upstream gradient does not match the predictor");
  }

  Eigen::MatrixXd grad_residual = Eigen::MatrixXd::Zero(c, len);
  Eigen::MatrixXd grad_raw = Eigen::MatrixXd::Zero(c, cfg_.t_future);
  for (int f = 0; f < cfg_.t_future; ++f) {
    for (int ch = 0; ch < c; ++ch) {
      const auto idx = static_cast<std::size_t>(f) * c + ch;
      grad_residual(ch, cfg_.t_obs + f) = cfg_.coord_scale_mm * upstream.d_mu[idx];
      const double s = cache.raw_log_var(ch, f);
      if (s > kLogVarMin && s < kLogVarMax) grad_raw(ch, f) = upstream.d_log_var[idx];
    }
  }

  ModelParams grads = zeros_like(params);
  const Eigen::MatrixXd& top = cache.activations.back();
  Eigen::MatrixXd grad_hidden =
      apply_backward(params.mean_head, top, grad_residual * basis_.transpose(), grads.mean_head);
  grad_hidden += apply_backward(params.var_head, top, grad_raw, grads.var_head);

  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    const Eigen::MatrixXd& act = cache.block_tanh[b];
    const Eigen::MatrixXd grad_z =
        (grad_hidden.array() * (1.0 - act.array().square())).matrix();
    grad_hidden += apply_backward(params.blocks[b], cache.activations[b], grad_z, grads.blocks[b]);
  }

  const Eigen::MatrixXd& first = cache.activations.front();
  const Eigen::MatrixXd grad_z = (grad_hidden.array() * (1.0 - first.array().square())).matrix();
  apply_backward(params.input, cache.features, grad_z, grads.input);
  return grads;
}

}  // namespace uahmp
