#include <doctest.h>

#include <cmath>

#include <fmt/format.h>

#include "test_util.hpp"
#include "uahmp/errors.hpp"
#include "uahmp/evaluation.hpp"
#include "uahmp/trainer.hpp"

using namespace uahmp;

namespace {

PredictorConfig small_model() {
  PredictorConfig cfg;
  cfg.joints = 2;
  cfg.t_obs = 10;
  cfg.t_future = 10;
  cfg.n_dct_coeffs = 20;
  cfg.hidden_dim = 32;
  cfg.seed = 1;
  return cfg;
}

/// `count` twenty-frame sinusoid sequences (one window each), phases from seed + i.
std::vector<SamplePair> sinusoid_pairs(int count, double floor, double growth, std::uint64_t seed) {
  std::vector<SamplePair> pairs;
  for (int i = 0; i < count; ++i) {
    SynthConfig s;
    s.joints = 2;
    s.duration_frames = 20;
    s.base_frequencies = {0.6, 1.2};
    s.amplitude_mm = {100.0, 60.0};
    s.noise_floor_mm = floor;
    s.noise_growth_per_frame = growth;
    s.seed = seed + static_cast<std::uint64_t>(i);
    auto w = window_split(synth_generate(s), 10, 20, 1, "s");
    pairs.push_back(std::move(w.front()));
  }
  return pairs;
}

double persistence_mpjpe(const std::vector<SamplePair>& pairs) {
  double sum = 0.0;
  for (const auto& p : pairs) {
    auto base = p.future;
    for (int t = 0; t < base.frames(); ++t)
      for (int j = 0; j < base.joints(); ++j)
        for (int a = 0; a < kAxes; ++a) base.at(t, j, a) = p.observed.at(p.observed.frames() - 1, j, a);
    sum += mpjpe(base, p.future);
  }
  return sum / static_cast<double>(pairs.size());
}

TrainConfig fast_train(LossMode mode, int epochs) {
  TrainConfig cfg;
  cfg.loss_mode = mode;
  cfg.lr = 5e-3;
  cfg.epochs = epochs;
  cfg.seed = 2;
  return cfg;
}

std::string dump_metrics(const std::vector<nlohmann::json>& m) {
  std::string out;
  for (const auto& j : m) out += j.dump() + "\n";
  return out;
}

}  // namespace

TEST_CASE("adam: zero gradient is a fixed point that still counts the step") {
  const auto params = init_params(small_model());
  auto state = TrainState::fresh(params, 0);
  adam_step(state, zeros_like(params), 0.1);
  CHECK(state.params == params);
  CHECK(state.adam.step == 1);
}

TEST_CASE("adam: constant unit gradient moves every parameter by lr") {
  const auto params = init_params(small_model());
  auto state = TrainState::fresh(params, 0);
  auto grads = zeros_like(params);
  assign_flat(grads, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(params.parameter_count())));
  adam_step(state, grads, 0.1);
  const Eigen::VectorXd delta = flatten(state.params) - flatten(params);
  CHECK(delta.maxCoeff() == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(delta.minCoeff() == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: two steps match the hand-evaluated recurrences") {
  const auto params = init_params(small_model());
  const auto n = static_cast<Eigen::Index>(params.parameter_count());
  auto state = TrainState::fresh(params, 0);
  auto grads = zeros_like(params);
  assign_flat(grads, Eigen::VectorXd::Constant(n, 1.0));
  adam_step(state, grads, 0.01);
  assign_flat(grads, Eigen::VectorXd::Constant(n, -2.0));
  adam_step(state, grads, 0.01);
  // m2 = 0.9*0.1 - 0.1*2 = -0.11, v2 = 0.999*0.001 + 0.001*4 = 0.004999
  const double m_hat = -0.11 / (1 - 0.81);
  const double v_hat = 0.004999 / (1 - 0.998001);
  const double expected = -0.01 * 1.0 / (1.0 + 1e-8) - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
  const Eigen::VectorXd delta = flatten(state.params) - flatten(params);
  CHECK(delta(0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(state.adam.step == 2);
}

TEST_CASE("adam: determinism and non-finite gradients") {
  const auto params = init_params(small_model());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd g(static_cast<Eigen::Index>(params.parameter_count()));
  for (auto& v : g) v = n(rng);
  auto grads = zeros_like(params);
  assign_flat(grads, g);
  auto a = TrainState::fresh(params, 0);
  auto b = TrainState::fresh(params, 0);
  adam_step(a, grads, 1e-3);
  adam_step(b, grads, 1e-3);
  CHECK(flatten(a.params) == flatten(b.params));
  g(5) = std::numeric_limits<double>::infinity();
  assign_flat(grads, g);
  CHECK_THROWS_AS(adam_step(a, grads, 1e-3), NumericError);
}

TEST_CASE("train config validation and json") {
  TrainConfig cfg;
  cfg.adam_beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.lr_decay_per_epoch = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = TrainConfig{};
  cfg.grad_clip_norm.reset();
  cfg.loss_mode = LossMode::kNllOnly;
  CHECK(nlohmann::json(cfg).get<TrainConfig>() == cfg);
}

TEST_CASE("train: errors") {
  CHECK_THROWS_AS(train(fast_train(LossMode::kUaFull, 1), {}, {}, small_model()), ArgumentError);
  SamplePair wild{PoseSequence::zeros(10, 2), PoseSequence::zeros(10, 2), "x", false};
  for (double& v : wild.future.coords()) v = 1e200;
  CHECK_THROWS_AS(train(fast_train(LossMode::kUaFull, 1), {wild}, {}, small_model()), NumericError);
}

TEST_CASE("train: zero epochs returns the initialised model") {
  const auto pairs = sinusoid_pairs(20, 0.0, 0.0, 100);
  const auto r = train(fast_train(LossMode::kUaFull, 0), pairs, {}, small_model());
  CHECK(r.best.state.params == init_params(small_model()));
  CHECK(r.last.state.params == init_params(small_model()));
  CHECK(r.metrics.size() == 1);
  CHECK(r.metrics[0].at("epoch") == 0);
}

TEST_CASE("train: metrics log fields") {
  auto pairs = corrupt_samples(sinusoid_pairs(24, 0.5, 0.2, 100), 0.25, 50.0, 1);
  const auto val = sinusoid_pairs(4, 0.5, 0.2, 500);
  const auto r = train(fast_train(LossMode::kUaFull, 2), pairs, val, small_model());
  REQUIRE(r.metrics.size() == 3);
  const auto& m = r.metrics.back();
  CHECK(m.at("epoch") == 2);
  for (const char* key : {"l_m", "l_m_weighted", "l_n", "total", "objective"}) CHECK(m.at("train").contains(key));
  CHECK(m.at("val_mpjpe_mm").is_number());
  CHECK(m.at("mean_var_by_frame").size() == 10);
  CHECK(m.at("mean_w_clean").is_number());
  CHECK(m.at("mean_w_corrupted").is_number());
  CHECK(r.best.state.best_val_mpjpe <= m.at("val_mpjpe_mm").get<double>());
}

TEST_CASE("train: mpjpe_only beats persistence on noiseless sinusoids") {
  const auto pairs = sinusoid_pairs(200, 0.0, 0.0, 100);
  const double baseline = persistence_mpjpe(pairs);
  const auto r = train(fast_train(LossMode::kMpjpeOnly, 30), pairs, {}, small_model());
  auto zero = small_model();
  zero.init_scale = 0.0;
  const auto zero_net = evaluate_pairs(Predictor(zero), init_params(zero), pairs, -0.2, LossMode::kMpjpeOnly);
  CHECK(zero_net.mpjpe_mm == doctest::Approx(baseline).epsilon(1e-12));
  const double final_mpjpe = r.metrics.back().at("train").at("l_m").get<double>();
  CHECK(final_mpjpe < 0.2 * baseline);
  CHECK(r.metrics.at(20).at("train").at("objective").get<double>() <
        r.metrics.front().at("train").at("objective").get<double>());
}

TEST_CASE("train: ua_full stays close to mpjpe_only and learns growing variance") {
  const auto train_pairs = sinusoid_pairs(200, 0.5, 0.5, 100);
  const auto val_pairs = sinusoid_pairs(40, 0.5, 0.5, 1000);
  const auto base = train(fast_train(LossMode::kMpjpeOnly, 30), train_pairs, val_pairs, small_model());
  const auto ua = train(fast_train(LossMode::kUaFull, 30), train_pairs, val_pairs, small_model());
  CHECK(ua.best.state.best_val_mpjpe <= 2.0 * base.best.state.best_val_mpjpe);
  const auto by_frame = ua.metrics.back().at("mean_var_by_frame").get<std::vector<double>>();
  std::vector<double> idx(by_frame.size());
  std::iota(idx.begin(), idx.end(), 0.0);
  const auto rho = spearman(idx, by_frame);
  REQUIRE(rho.has_value());
  CHECK(*rho >= 0.8);
}

TEST_CASE("checkpoint round trip") {
  const auto pairs = sinusoid_pairs(16, 0.5, 0.2, 100);
  const auto r = train(fast_train(LossMode::kUaFull, 2), pairs, {}, small_model());
  auto ckpt = r.last;
  ckpt.run_config = {{"data", {{"stride", 1}}}, {"note", "ünïcode"}};
  const auto bytes = serialize_checkpoint(ckpt);
  CHECK(bytes.rfind("UAHMP1", 0) == 0);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.state.params == ckpt.state.params);
  CHECK(back.state.adam.m == ckpt.state.adam.m);
  CHECK(back.state.adam.v == ckpt.state.adam.v);
  CHECK(back.state.adam.step == ckpt.state.adam.step);
  CHECK(back.state.epoch == ckpt.state.epoch);
  CHECK(back.state.best_epoch == ckpt.state.best_epoch);
  CHECK(back.state.best_val_mpjpe == ckpt.state.best_val_mpjpe);
  CHECK(back.state.rng == ckpt.state.rng);
  CHECK(back.predictor == ckpt.predictor);
  CHECK(back.train == ckpt.train);
  CHECK(back.run_config == ckpt.run_config);
  CHECK(back.config_hash() == ckpt.config_hash());
  CHECK(serialize_checkpoint(back) == bytes);

  const auto dir = testutil::temp_dir("ckpt");
  save_checkpoint(ckpt, dir / "a.ckpt");
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  CHECK(testutil::read_file(dir / "a.ckpt") == testutil::read_file(dir / "b.ckpt"));
}

TEST_CASE("checkpoint format errors") {
  const auto r = train(fast_train(LossMode::kUaFull, 0), sinusoid_pairs(4, 0, 0, 1), {}, small_model());
  auto bytes = serialize_checkpoint(r.last);
  auto wrong = bytes;
  wrong[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), IoError);
}

TEST_CASE("config hash is stable and sensitive") {
  const nlohmann::json a{{"x", 1}};
  CHECK(hash_json(a) == hash_json(nlohmann::json{{"x", 1}}));
  CHECK(hash_json(a) != hash_json(nlohmann::json{{"x", 2}}));
  CHECK(hash_json(a).size() == 16);
  // FNV-1a 64 of the empty object dump "{}"
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : std::string("{}")) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  CHECK(hash_json(nlohmann::json::object()) == fmt::format("{:016x}", h));
}

TEST_CASE("training is deterministic") {
  const auto pairs = corrupt_samples(sinusoid_pairs(40, 0.5, 0.3, 100), 0.25, 50.0, 3);
  const auto val = sinusoid_pairs(8, 0.5, 0.3, 900);
  const auto a = train(fast_train(LossMode::kUaFull, 3), pairs, val, small_model());
  const auto b = train(fast_train(LossMode::kUaFull, 3), pairs, val, small_model());
  CHECK(dump_metrics(a.metrics) == dump_metrics(b.metrics));
  CHECK(serialize_checkpoint(a.best) == serialize_checkpoint(b.best));
  CHECK(serialize_checkpoint(a.last) == serialize_checkpoint(b.last));
}

TEST_CASE("resumed training equals uninterrupted training") {
  const auto pairs = sinusoid_pairs(40, 0.5, 0.3, 100);
  const auto val = sinusoid_pairs(8, 0.5, 0.3, 900);
  const auto full = train(fast_train(LossMode::kUaFull, 6), pairs, val, small_model());
  const auto first = train(fast_train(LossMode::kUaFull, 3), pairs, val, small_model());
  const auto last = deserialize_checkpoint(serialize_checkpoint(first.last));
  const auto best = deserialize_checkpoint(serialize_checkpoint(first.best));
  const auto rest = resume(fast_train(LossMode::kUaFull, 6), pairs, val, last, best);

  auto joined = first.metrics;
  joined.insert(joined.end(), rest.metrics.begin(), rest.metrics.end());
  CHECK(dump_metrics(joined) == dump_metrics(full.metrics));
  CHECK(serialize_checkpoint(rest.last) == serialize_checkpoint(full.last));
  CHECK(serialize_checkpoint(rest.best) == serialize_checkpoint(full.best));
}

TEST_CASE("early stopping halts once validation stalls") {
  const auto pairs = sinusoid_pairs(8, 0.5, 0.3, 100);
  const auto val = sinusoid_pairs(4, 0.5, 0.3, 900);
  auto cfg = fast_train(LossMode::kUaFull, 20);
  cfg.lr = 1e-300;  // updates vanish below the parameters' precision
  cfg.patience = 2;
  const auto r = train(cfg, pairs, val, small_model());
  CHECK(r.last.state.epoch == 2);
  CHECK(r.best.state.epoch == 0);
}

TEST_CASE("evaluate_pairs splits weights by corruption flag") {
  const auto pairs = corrupt_samples(sinusoid_pairs(8, 0.5, 0.3, 100), 0.5, 50.0, 3);
  const Predictor pred(small_model());
  const auto m = evaluate_pairs(pred, init_params(small_model()), pairs, -0.2, LossMode::kUaFull);
  REQUIRE(m.mean_w_clean.has_value());
  REQUIRE(m.mean_w_corrupted.has_value());
  CHECK(*m.mean_w_clean == 1.0);
  CHECK(m.mean_var_by_frame == std::vector<double>(10, 1.0));
  const auto none = evaluate_pairs(pred, init_params(small_model()), {}, -0.2, LossMode::kUaFull);
  CHECK_FALSE(none.mean_w_clean.has_value());
}
