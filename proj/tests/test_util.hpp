#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "uahmp/losses.hpp"
#include "uahmp/skeleton_data.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("uahmp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline uahmp::PoseSequence random_pose(int frames, int joints, std::mt19937_64& rng, double scale = 50.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> c(static_cast<std::size_t>(frames) * joints * uahmp::kAxes);
  for (auto& v : c) v = n(rng);
  return uahmp::PoseSequence(frames, joints, std::move(c));
}

/// Random Gaussian prediction with log-variances drawn from [lo, hi].
inline uahmp::GaussianPoseSequence random_gaussian(int frames, int joints, std::mt19937_64& rng,
                                                   double log_lo = -1.0, double log_hi = 3.0) {
  std::normal_distribution<double> n(0.0, 50.0);
  std::uniform_real_distribution<double> u(log_lo, log_hi);
  const std::size_t size = static_cast<std::size_t>(frames) * joints * uahmp::kAxes;
  std::vector<double> mu(size), var(size);
  for (auto& v : mu) v = n(rng);
  for (auto& v : var) v = std::exp(u(rng));
  return uahmp::GaussianPoseSequence(frames, joints, std::move(mu), std::move(var));
}

/// Relative error with an absolute floor for entries that are essentially zero.
inline double rel_err(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Independent loss oracles, written from the definitions without touching the
// library's loss code.

inline double oracle_nll(double x, double mu, double var) {
  const double r = x - mu;
  return 0.5 * std::log(2.0 * M_PI * var) + r * r / (2.0 * var);
}

/// Total loss as a function of means and log-variances, with the penalty weight
/// computed from `weight_log_var` (pass the same vector for the full gradient, a
/// frozen copy for the detached one).
inline double oracle_total(const std::vector<double>& mu, const std::vector<double>& log_var,
                           const std::vector<double>& weight_log_var, const uahmp::PoseSequence& truth,
                           double k, bool with_mpjpe = true, bool with_nll = true) {
  const int frames = truth.frames();
  const int joints = truth.joints();
  double lm = 0.0;
  double ln = 0.0;
  for (int t = 0; t < frames; ++t) {
    for (int j = 0; j < joints; ++j) {
      double sq = 0.0;
      double w = 0.0;
      for (int a = 0; a < uahmp::kAxes; ++a) {
        const auto i = (static_cast<std::size_t>(t) * joints + j) * uahmp::kAxes + a;
        const double d = mu[i] - truth.at(t, j, a);
        sq += d * d;
        w += std::exp(k * weight_log_var[i]) / 3.0;
        ln += oracle_nll(truth.at(t, j, a), mu[i], std::exp(log_var[i]));
      }
      lm += std::sqrt(sq) * w;
    }
  }
  const double norm = static_cast<double>(frames) * joints;
  return (with_mpjpe ? lm / norm : 0.0) + (with_nll ? ln / norm : 0.0);
}

}  // namespace testutil
