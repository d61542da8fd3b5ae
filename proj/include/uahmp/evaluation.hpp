#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uahmp/losses.hpp"
#include "uahmp/skeleton_data.hpp"

namespace uahmp {

/// Per-horizon metrics; each horizon is evaluated on the single frame it lands on.
struct HorizonReport {
  std::vector<double> horizons_ms;
  std::vector<int> frames;  ///< 1-based future frame index of each horizon
  std::vector<double> mpjpe_mm;
  std::vector<double> mean_var;
  std::vector<double> coverage_1sigma;
  std::size_t samples = 0;
};

nlohmann::json to_json(const HorizonReport& report);

/// Maps horizons to 1-based future frames; throws ArgumentError naming every
/// horizon that is not a whole number of frames inside [1, future_frames].
std::vector<int> horizon_frames(std::span<const double> horizons_ms, double frame_interval_ms,
                                int future_frames);

HorizonReport mpjpe_at_horizons(const GaussianPoseSequence& pred, const PoseSequence& truth,
                                std::span<const double> horizons_ms, double frame_interval_ms);

/// Sample-averaged report over a set of predictions.
HorizonReport mpjpe_at_horizons(std::span<const GaussianPoseSequence> preds,
                                std::span<const PoseSequence> truths,
                                std::span<const double> horizons_ms, double frame_interval_ms);

struct CalibrationStats {
  /// Pearson correlation of per-coordinate variance and squared error; empty when
  /// either series has zero spread.
  std::optional<double> pearson_var_vs_sqerr;
  double coverage_1sigma = 0.0;
  double coverage_2sigma = 0.0;
  std::size_t coordinates = 0;
};

nlohmann::json to_json(const CalibrationStats& stats);

CalibrationStats calibration_stats(const GaussianPoseSequence& pred, const PoseSequence& truth);
CalibrationStats calibration_stats(std::span<const GaussianPoseSequence> preds,
                                   std::span<const PoseSequence> truths);

/// Frames x joints matrix of the mean axis variance (mm^2).
struct UncertaintyMap {
  int frames = 0;
  int joints = 0;
  std::vector<double> values;  ///< row-major

  double at(int t, int joint) const { return values[static_cast<std::size_t>(t) * joints + joint]; }
  std::vector<double> row_means() const;
  bool operator==(const UncertaintyMap&) const = default;
};

UncertaintyMap uncertainty_map(const GaussianPoseSequence& pred);
/// Element-wise mean of the maps of several predictions of equal shape.
UncertaintyMap mean_uncertainty_map(std::span<const GaussianPoseSequence> preds);

/// Spearman rank correlation (average ranks for ties); empty for degenerate input.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

struct PointSizeStyle {
  double r_min_px = 1.5;
  double alpha_px_per_mm = 0.5;
  double px_per_mm = 0.5;
  double margin_px = 20.0;
};

/// Disc radius of a joint with the given axis variances.
double point_radius(double var_x, double var_y, double var_z, const PointSizeStyle& style = {});

/// Skeletons stacked left to right, one per frame (x horizontal, y vertical);
/// predicted joints are discs sized by uncertainty, ground truth small dots.
std::string pointsize_svg(const GaussianPoseSequence& pred, const PoseSequence* truth,
                          const PointSizeStyle& style = {});
void render_pointsize_svg(const GaussianPoseSequence& pred, const PoseSequence* truth,
                          const std::filesystem::path& out, const PointSizeStyle& style = {});

enum class MapFormat { kCsv, kPgm, kSvg };

MapFormat map_format_from_string(std::string_view name);

std::string map_csv(const UncertaintyMap& map);
/// Binary P5, width = joints, height = frames, per-file min-max scaled to [0, 255];
/// a constant map is all zeros.
std::string map_pgm(const UncertaintyMap& map);
std::string map_svg(const UncertaintyMap& map);
void render_map(const UncertaintyMap& map, const std::filesystem::path& out, MapFormat format);
UncertaintyMap load_map_csv(const std::filesystem::path& path);

/// Prediction interchange: JSONL, one frame per line,
/// {"t": <frame>, "joints": [[mu_x, var_x, mu_y, var_y, mu_z, var_z], ...]}.
void save_prediction(const GaussianPoseSequence& pred, const std::filesystem::path& path,
                     int first_frame = 0);
GaussianPoseSequence load_prediction(const std::filesystem::path& path);

}  // namespace uahmp
