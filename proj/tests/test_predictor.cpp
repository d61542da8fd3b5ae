#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "uahmp/dct.hpp"
#include "uahmp/errors.hpp"
#include "uahmp/predictor.hpp"

using namespace uahmp;

namespace {

PredictorConfig tiny_config() {
  PredictorConfig cfg;
  cfg.joints = 2;
  cfg.t_obs = 4;
  cfg.t_future = 3;
  cfg.hidden_dim = 8;
  cfg.n_blocks = 1;
  cfg.n_dct_coeffs = 5;
  cfg.seed = 3;
  return cfg;
}

/// Initialised parameters with the variance head also randomised, so variances vary.
ModelParams random_params(const PredictorConfig& cfg, std::uint64_t seed) {
  auto p = init_params(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (Eigen::Index i = 0; i < p.var_head.weight.size(); ++i) p.var_head.weight.reshaped()(i) = u(rng);
  for (Eigen::Index i = 0; i < p.var_head.bias.size(); ++i) p.var_head.bias.reshaped()(i) = u(rng);
  for (auto* layer : {&p.input, &p.mean_head}) {
    for (Eigen::Index i = 0; i < layer->bias.size(); ++i) layer->bias.reshaped()(i) = u(rng);
  }
  return p;
}

double loss_at(const Predictor& pred, const ModelParams& p, const PoseSequence& obs,
               const PoseSequence& truth, LossMode mode) {
  const auto out = pred.forward(p, obs);
  return objective(total_loss(out, truth, kDefaultTemperature), mode);
}

}  // namespace

TEST_CASE("dct of a constant series is pure DC") {
  for (int len : {1, 2, 7, 20}) {
    const std::vector<double> x(static_cast<std::size_t>(len), 2.5);
    const auto c = dct_forward(x);
    CHECK(c[0] == doctest::Approx(2.5 * std::sqrt(len)).epsilon(1e-12));
    for (int k = 1; k < len; ++k) CHECK(std::abs(c[k]) <= 1e-12);
  }
}

TEST_CASE("dct round trip and Parseval") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int len : {1, 3, 16, 33}) {
    std::vector<double> x(static_cast<std::size_t>(len));
    for (auto& v : x) v = n(rng);
    const auto c = dct_forward(x);
    const auto back = dct_inverse(c);
    double ex = 0.0, ec = 0.0;
    for (int i = 0; i < len; ++i) {
      CHECK(std::abs(back[i] - x[i]) <= 1e-9);
      ex += x[i] * x[i];
      ec += c[i] * c[i];
    }
    CHECK(std::abs(ex - ec) <= 1e-9 * ex);
  }
}

TEST_CASE("dct basis is orthonormal and truncation keeps low frequencies") {
  const auto b = dct_basis(9, 9);
  CHECK((b * b.transpose() - Eigen::MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((dct_basis(9, 4) - b.topRows(4)).cwiseAbs().maxCoeff() == 0.0);
  const std::vector<double> c{1, 2, 3, 4, 5};
  CHECK(dct_truncate(c, 2) == std::vector<double>{1, 2});
  CHECK(dct_truncate(c, 5) == c);
}

TEST_CASE("pad_and_encode") {
  std::mt19937_64 rng(2);
  auto cfg = tiny_config();
  SUBCASE("static pose encodes to DC only") {
    const auto frame = testutil::random_pose(1, cfg.joints, rng);
    auto obs = PoseSequence::zeros(cfg.t_obs, cfg.joints);
    for (int t = 0; t < cfg.t_obs; ++t)
      for (int j = 0; j < cfg.joints; ++j)
        for (int a = 0; a < kAxes; ++a) obs.at(t, j, a) = frame.at(0, j, a);
    const auto enc = pad_and_encode(obs, cfg);
    CHECK(enc.rows() == cfg.channels());
    CHECK(enc.cols() == cfg.n_dct_coeffs);
    CHECK(enc.rightCols(cfg.n_dct_coeffs - 1).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("no future frames encodes the raw series") {
    cfg.t_future = 0;
    cfg.n_dct_coeffs = cfg.t_obs;
    const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
    const auto enc = pad_and_encode(obs, cfg);
    for (int j = 0; j < cfg.joints; ++j)
      for (int a = 0; a < kAxes; ++a) {
        std::vector<double> series;
        for (int t = 0; t < cfg.t_obs; ++t) series.push_back(obs.at(t, j, a));
        const auto c = dct_forward(series);
        for (int k = 0; k < cfg.t_obs; ++k) CHECK(enc(j * kAxes + a, k) == doctest::Approx(c[k]).epsilon(1e-12));
      }
  }
  SUBCASE("full-length encoding preserves the observed frames and repeats the last") {
    cfg.n_dct_coeffs = cfg.padded_length();
    const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
    const Eigen::MatrixXd series = pad_and_encode(obs, cfg) * dct_basis(cfg.padded_length(), cfg.n_dct_coeffs);
    for (int t = 0; t < cfg.padded_length(); ++t)
      for (int j = 0; j < cfg.joints; ++j)
        for (int a = 0; a < kAxes; ++a) {
          CHECK(std::abs(series(j * kAxes + a, t) - obs.at(std::min(t, cfg.t_obs - 1), j, a)) <= 1e-9);
        }
  }
  SUBCASE("wrong length is an argument error") {
    CHECK_THROWS_AS(pad_and_encode(testutil::random_pose(cfg.t_obs + 1, cfg.joints, rng), cfg), ArgumentError);
  }
}

TEST_CASE("init_params") {
  const auto cfg = tiny_config();
  CHECK(init_params(cfg) == init_params(cfg));
  auto other = cfg;
  other.seed = 4;
  CHECK_FALSE(init_params(cfg) == init_params(other));
  auto zero = cfg;
  zero.init_scale = 0.0;
  CHECK(flatten(init_params(zero)).cwiseAbs().maxCoeff() == 0.0);
  const auto p = init_params(cfg);
  CHECK(p.var_head.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.var_head.bias.cwiseAbs().maxCoeff() == 0.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.n_dct_coeffs));
  CHECK(p.input.weight.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("flatten and assign_flat round trip") {
  const auto p = random_params(tiny_config(), 1);
  auto q = zeros_like(p);
  assign_flat(q, flatten(p));
  CHECK(q == p);
  CHECK(static_cast<std::size_t>(flatten(p).size()) == p.parameter_count());
}

TEST_CASE("zero network predicts persistence with unit variance") {
  auto cfg = tiny_config();
  cfg.init_scale = 0.0;
  std::mt19937_64 rng(5);
  const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
  const Predictor pred(cfg);
  const auto out = pred.forward(init_params(cfg), obs);
  CHECK(out.frames() == cfg.t_future);
  CHECK(out.joints() == cfg.joints);
  CHECK(out.size() == static_cast<std::size_t>(cfg.t_future * cfg.joints * kAxes));
  for (int t = 0; t < cfg.t_future; ++t)
    for (int j = 0; j < cfg.joints; ++j)
      for (int a = 0; a < kAxes; ++a) {
        CHECK(out.mu(t, j, a) == obs.at(cfg.t_obs - 1, j, a));
        CHECK(out.var(t, j, a) == 1.0);
      }
}

TEST_CASE("initialised network still starts at unit variance") {
  const auto cfg = tiny_config();
  std::mt19937_64 rng(6);
  const auto out = Predictor(cfg).forward(init_params(cfg), testutil::random_pose(cfg.t_obs, cfg.joints, rng));
  const auto vars = out.variances();
  CHECK(std::all_of(vars.begin(), vars.end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("static pose has zero error under the zero network") {
  auto cfg = tiny_config();
  cfg.init_scale = 0.0;
  auto obs = PoseSequence::zeros(cfg.t_obs, cfg.joints);
  for (int t = 0; t < cfg.t_obs; ++t) obs.at(t, 1, 2) = 17.0;
  const auto out = Predictor(cfg).forward(init_params(cfg), obs);
  auto truth = PoseSequence::zeros(cfg.t_future, cfg.joints);
  for (int t = 0; t < cfg.t_future; ++t) truth.at(t, 1, 2) = 17.0;
  CHECK(mpjpe(out.mean_sequence(), truth) == 0.0);
}

TEST_CASE("forward is pure and variances stay in bounds") {
  const auto cfg = tiny_config();
  std::mt19937_64 rng(7);
  const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
  const Predictor pred(cfg);
  auto p = random_params(cfg, 2);
  CHECK(pred.forward(p, obs) == pred.forward(p, obs));
  for (double bias : {-1e3, 1e3}) {
    p.var_head.bias.setConstant(bias);
    const auto out = pred.forward(p, obs);
    for (double v : out.variances()) {
      CHECK(v >= kVarMin);
      CHECK(v <= kVarMax);
    }
  }
}

TEST_CASE("forward errors") {
  const auto cfg = tiny_config();
  std::mt19937_64 rng(8);
  const Predictor pred(cfg);
  const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
  CHECK_THROWS_AS(pred.forward(init_params(cfg), testutil::random_pose(cfg.t_obs, 3, rng)), ArgumentError);
  auto wrong = cfg;
  wrong.hidden_dim = 9;
  CHECK_THROWS_AS(pred.forward(init_params(wrong), obs), ArgumentError);

  auto p = init_params(cfg);
  p.mean_head.bias.setConstant(1e308);
  p.mean_head.adj.setConstant(1e308);
  try {
    pred.forward(p, obs);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.layer() == cfg.n_blocks + 1);
  }
  p = init_params(cfg);
  p.input.bias.setConstant(std::numeric_limits<double>::quiet_NaN());
  try {
    pred.forward(p, obs);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.layer() == 0);
  }
}

TEST_CASE("config validation") {
  auto cfg = tiny_config();
  cfg.n_dct_coeffs = cfg.padded_length() + 1;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = tiny_config();
  cfg.n_blocks = 0;
  CHECK_THROWS_AS(cfg.validate(), ArgumentError);
  cfg = tiny_config();
  cfg.hidden_dim = 0;
  CHECK_THROWS_AS(Predictor{cfg}, ArgumentError);
  const auto j = nlohmann::json(tiny_config());
  CHECK(j.get<PredictorConfig>() == tiny_config());
}

TEST_CASE("backward matches finite differences on the tiny config") {
  const auto cfg = tiny_config();
  std::mt19937_64 rng(9);
  const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
  const auto truth = testutil::random_pose(cfg.t_future, cfg.joints, rng);
  const Predictor pred(cfg);
  const auto params = random_params(cfg, 4);

  for (auto [mode, wg] : {std::pair{LossMode::kUaFull, WeightGradient::kFull},
                          std::pair{LossMode::kNllOnly, WeightGradient::kDetached},
                          std::pair{LossMode::kMpjpeOnly, WeightGradient::kDetached}}) {
    CAPTURE(to_string(mode));
    ForwardCache cache;
    const auto out = pred.forward(params, obs, cache);
    const auto grads = pred.backward(params, cache, loss_gradients(out, truth, kDefaultTemperature, mode, wg));
    const Eigen::VectorXd analytic = flatten(grads);
    Eigen::VectorXd flat = flatten(params);
    auto probe = params;
    const double h = 1e-5;
    int worst = -1;
    double worst_err = 0.0;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      const double keep = flat(i);
      flat(i) = keep + h;
      assign_flat(probe, flat);
      const double up = loss_at(pred, probe, obs, truth, mode);
      flat(i) = keep - h;
      assign_flat(probe, flat);
      const double down = loss_at(pred, probe, obs, truth, mode);
      flat(i) = keep;
      const double err = testutil::rel_err(analytic(i), (up - down) / (2 * h));
      if (err > worst_err) {
        worst_err = err;
        worst = static_cast<int>(i);
      }
    }
    CAPTURE(worst);
    CHECK(worst_err <= 1e-4);
  }
}

TEST_CASE("backward: zero upstream and clamped variances") {
  const auto cfg = tiny_config();
  std::mt19937_64 rng(10);
  const auto obs = testutil::random_pose(cfg.t_obs, cfg.joints, rng);
  const Predictor pred(cfg);
  auto params = random_params(cfg, 5);
  ForwardCache cache;
  const auto out = pred.forward(params, obs, cache);
  const auto n = out.size();
  LossGradients zero{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  CHECK(flatten(pred.backward(params, cache, zero)).cwiseAbs().maxCoeff() == 0.0);

  params.var_head.bias.setConstant(100.0);
  pred.forward(params, obs, cache);
  LossGradients only_var{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  const auto g = pred.backward(params, cache, only_var);
  CHECK(g.var_head.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.var_head.bias.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flatten(g).cwiseAbs().maxCoeff() == 0.0);

  LossGradients wrong{std::vector<double>(n + 1, 0.0), std::vector<double>(n, 0.0)};
  CHECK_THROWS_AS(pred.backward(params, cache, wrong), ArgumentError);
}

TEST_CASE("head report counts") {
  auto cfg = tiny_config();
  const auto r = head_report(cfg);
  CHECK(r.added_head_outputs == static_cast<std::size_t>(cfg.joints * kAxes * cfg.t_future));
  CHECK(r.gaussian_head_outputs == 2 * r.mean_only_head_outputs);
  CHECK(r.total_parameters == init_params(cfg).parameter_count());
  CHECK(r.total_parameters - r.total_parameters_mean_only == r.variance_head_parameters);
  const auto c = static_cast<std::size_t>(cfg.channels());
  CHECK(r.variance_head_parameters == c * c + static_cast<std::size_t>(cfg.hidden_dim * cfg.t_future + cfg.t_future));
  CHECK(to_json(r).at("added_head_outputs").get<std::size_t>() == r.added_head_outputs);
}
