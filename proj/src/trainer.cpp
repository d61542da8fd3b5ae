#include "uahmp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace uahmp {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("train: lr must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ArgumentError("train: Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ArgumentError("train: adam_eps must be positive");
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (epochs < 0) throw ArgumentError("train: epochs must be >= 0");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
    throw ArgumentError("train: grad_clip_norm must be positive or null");
  }
  if (!(lr_decay_per_epoch > 0.0 && lr_decay_per_epoch <= 1.0)) {
    throw ArgumentError("train: lr_decay_per_epoch must lie in (0, 1]");
  }
  if (patience < 0) throw ArgumentError("train: patience must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{{"loss_mode", std::string(to_string(cfg.loss_mode))},
                     {"k", cfg.k},
                     {"lr", cfg.lr},
                     {"adam_beta1", cfg.adam_beta1},
                     {"adam_beta2", cfg.adam_beta2},
                     {"adam_eps", cfg.adam_eps},
                     {"batch_size", cfg.batch_size},
                     {"epochs", cfg.epochs},
                     {"grad_clip_norm", nullptr},
                     {"lr_decay_per_epoch", cfg.lr_decay_per_epoch},
                     {"patience", cfg.patience},
                     {"seed", cfg.seed}};
  if (cfg.grad_clip_norm) j["grad_clip_norm"] = *cfg.grad_clip_norm;
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  TrainConfig d;
  cfg.loss_mode = loss_mode_from_string(j.value("loss_mode", std::string(to_string(d.loss_mode))));
  cfg.k = j.value("k", d.k);
  cfg.lr = j.value("lr", d.lr);
  cfg.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", d.adam_eps);
  cfg.batch_size = j.value("batch_size", d.batch_size);
  cfg.epochs = j.value("epochs", d.epochs);
  cfg.grad_clip_norm = d.grad_clip_norm;
  if (j.contains("grad_clip_norm")) {
    const auto& clip = j["grad_clip_norm"];
    cfg.grad_clip_norm = clip.is_null() ? std::nullopt : std::optional<double>(clip.get<double>());
  }
  cfg.lr_decay_per_epoch = j.value("lr_decay_per_epoch", d.lr_decay_per_epoch);
  cfg.patience = j.value("patience", d.patience);
  cfg.seed = j.value("seed", d.seed);
}

TrainState TrainState::fresh(const ModelParams& params, std::uint64_t seed) {
  TrainState s;
  s.params = params;
  const auto n = static_cast<Eigen::Index>(params.parameter_count());
  s.adam.m = Eigen::VectorXd::Zero(n);
  s.adam.v = Eigen::VectorXd::Zero(n);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5348u};
  s.rng.seed(seq);
  return s;
}

void adam_step(TrainState& state, const ModelParams& grads, double lr, double beta1, double beta2,
               double eps) {
  const Eigen::VectorXd g = flatten(grads);
  if (g.size() != state.adam.m.size() || g.size() != state.adam.v.size()) {
    throw ArgumentError("gradient and optimizer state are not congruent");
  }
  if (!g.allFinite()) {
    Eigen::Index bad = 0;
    for (; bad < g.size() && std::isfinite(g(bad)); ++bad) {
    }
    throw NumericError(-1, fmt::format("non-finite gradient entry {} at step {}", bad,
                                       state.adam.step + 1));
  }
  auto& adam = state.adam;
  ++adam.step;
  adam.m = beta1 * adam.m + (1.0 - beta1) * g;
  adam.v = beta2 * adam.v + (1.0 - beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
  Eigen::VectorXd p = flatten(state.params);
  p.array() -= lr * (adam.m.array() / c1) / ((adam.v.array() / c2).sqrt() + eps);
  assign_flat(state.params, p);
}

DatasetMetrics evaluate_pairs(const Predictor& predictor, const ModelParams& params,
                              const std::vector<SamplePair>& pairs, double k, LossMode mode) {
  DatasetMetrics out;
  const int frames = predictor.config().t_future;
  out.mean_var_by_frame.assign(static_cast<std::size_t>(frames), 0.0);
  if (pairs.empty()) return out;

  double w_clean = 0.0;
  double w_corrupt = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_corrupt = 0;
  for (const auto& pair : pairs) {
    const auto pred = predictor.forward(params, pair.observed);
    const auto b = total_loss(pred, pair.future, k);
    out.mean_loss.l_m += b.l_m;
    out.mean_loss.l_m_weighted += b.l_m_weighted;
    out.mean_loss.l_n += b.l_n;
    out.mean_loss.total += b.total;
    out.objective += objective(b, mode);
    const auto var = pred.variances();
    const std::size_t per_frame = var.size() / static_cast<std::size_t>(frames);
    for (int f = 0; f < frames; ++f) {
      double s = 0.0;
      for (std::size_t i = 0; i < per_frame; ++i) s += var[f * per_frame + i];
      out.mean_var_by_frame[f] += s / static_cast<double>(per_frame);
    }
    const double w = std::accumulate(b.per_sample_weights.begin(), b.per_sample_weights.end(), 0.0) /
                     static_cast<double>(b.per_sample_weights.size());
    if (pair.corrupted) {
      w_corrupt += w;
      ++n_corrupt;
    } else {
      w_clean += w;
      ++n_clean;
    }
  }
  const double n = static_cast<double>(pairs.size());
  out.mean_loss.l_m /= n;
  out.mean_loss.l_m_weighted /= n;
  out.mean_loss.l_n /= n;
  out.mean_loss.total /= n;
  out.mean_loss.frames = frames;
  out.mean_loss.joints = predictor.config().joints;
  out.objective /= n;
  out.mpjpe_mm = out.mean_loss.l_m;
  for (double& v : out.mean_var_by_frame) v /= n;
  if (n_clean > 0) out.mean_w_clean = w_clean / static_cast<double>(n_clean);
  if (n_corrupt > 0) out.mean_w_corrupted = w_corrupt / static_cast<double>(n_corrupt);
  return out;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Logs the epoch just completed and returns the validation MPJPE used for selection.
double log_epoch(const Predictor& predictor, const TrainConfig& cfg, const TrainState& state,
                 const std::vector<SamplePair>& train_pairs,
                 const std::vector<SamplePair>& val_pairs, double lr,
                 std::vector<nlohmann::json>& metrics) {
  const auto train_m = evaluate_pairs(predictor, state.params, train_pairs, cfg.k, cfg.loss_mode);
  std::optional<DatasetMetrics> val_m;
  if (!val_pairs.empty()) {
    val_m = evaluate_pairs(predictor, state.params, val_pairs, cfg.k, cfg.loss_mode);
  }
  auto train_json = to_json(train_m.mean_loss);
  train_json["objective"] = train_m.objective;
  const double selection = val_m ? val_m->mpjpe_mm : train_m.mpjpe_mm;
  if (!std::isfinite(train_m.objective) || !std::isfinite(selection)) {
    throw NumericError(-1, fmt::format("non-finite loss after epoch {}", state.epoch));
  }
  metrics.push_back(nlohmann::json{
      {"epoch", state.epoch},
      {"lr", lr},
      {"train", train_json},
      {"val_mpjpe_mm", val_m ? nlohmann::json(val_m->mpjpe_mm) : nlohmann::json(nullptr)},
      {"mean_var_by_frame", val_m ? val_m->mean_var_by_frame : train_m.mean_var_by_frame},
      {"mean_w_clean", optional_json(train_m.mean_w_clean)},
      {"mean_w_corrupted", optional_json(train_m.mean_w_corrupted)}});
  return selection;
}

TrainResult run_epochs(const TrainConfig& cfg, const std::vector<SamplePair>& train_pairs,
                       const std::vector<SamplePair>& val_pairs, TrainResult result) {
  const Predictor predictor(result.last.predictor);
  auto& last = result.last;
  auto& state = last.state;
  std::vector<std::size_t> order(train_pairs.size());

  while (state.epoch < cfg.epochs) {
    if (cfg.patience > 0 && state.epoch - state.best_epoch >= cfg.patience) break;
    const double lr = cfg.lr * std::pow(cfg.lr_decay_per_epoch, state.epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);

    ForwardCache cache;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state.adam.m.size()));
      try {
        for (std::size_t b = start; b < stop; ++b) {
          const auto& pair = train_pairs[order[b]];
          const auto pred = predictor.forward(state.params, pair.observed, cache);
          const auto upstream = loss_gradients(pred, pair.future, cfg.k, cfg.loss_mode);
          grad += flatten(predictor.backward(state.params, cache, upstream));
        }
        grad /= static_cast<double>(stop - start);
        if (cfg.grad_clip_norm) {
          const double norm = grad.norm();
          if (norm > *cfg.grad_clip_norm) grad *= *cfg.grad_clip_norm / norm;
        }
        ModelParams grads = zeros_like(state.params);
        assign_flat(grads, grad);
        adam_step(state, grads, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      } catch (const NumericError& e) {
        throw TrainingDiverged(fmt::format("training diverged in epoch {}: {}", state.epoch + 1,
                                           e.what()),
                               last);
      }
    }
    ++state.epoch;
    double val = 0.0;
    try {
      val = log_epoch(predictor, cfg, state, train_pairs, val_pairs, lr, result.metrics);
    } catch (const NumericError& e) {
      throw TrainingDiverged(e.what(), result.best);
    }
    if (val < state.best_val_mpjpe) {
      state.best_val_mpjpe = val;
      state.best_epoch = state.epoch;
      result.best = last;
    }
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& train_pairs,
                  const std::vector<SamplePair>& val_pairs, const PredictorConfig& predictor_cfg) {
  cfg.validate();
  if (train_pairs.empty()) throw ArgumentError("training set is empty");
  const Predictor predictor(predictor_cfg);

  TrainResult result;
  result.last.predictor = predictor_cfg;
  result.last.train = cfg;
  result.last.state = TrainState::fresh(init_params(predictor_cfg), cfg.seed);
  auto& state = result.last.state;
  state.best_val_mpjpe =
      log_epoch(predictor, cfg, state, train_pairs, val_pairs, cfg.lr, result.metrics);
  state.best_epoch = 0;
  result.best = result.last;
  return run_epochs(cfg, train_pairs, val_pairs, std::move(result));
}

TrainResult resume(const TrainConfig& cfg, const std::vector<SamplePair>& train_pairs,
                   const std::vector<SamplePair>& val_pairs, const ModelCheckpoint& last,
                   const ModelCheckpoint& best) {
  cfg.validate();
  if (train_pairs.empty()) throw ArgumentError("training set is empty");
  TrainResult result;
  result.last = last;
  result.last.train = cfg;
  result.best = best;
  result.best.train = cfg;
  return run_epochs(cfg, train_pairs, val_pairs, std::move(result));
}

}  // namespace uahmp
