#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace uahmp {

inline constexpr int kAxes = 3;
inline constexpr double kDefaultFrameIntervalMs = 40.0;

/// A T x N x 3 block of joint coordinates in millimetres, stored frame-major
/// (frame, joint, axis). Coordinates are always finite.
class PoseSequence {
 public:
  PoseSequence() = default;
  PoseSequence(int frames, int joints, std::vector<double> coords,
               double frame_interval_ms = kDefaultFrameIntervalMs);

  /// All-zero sequence of the given shape.
  static PoseSequence zeros(int frames, int joints,
                            double frame_interval_ms = kDefaultFrameIntervalMs);

  int frames() const noexcept { return frames_; }
  int joints() const noexcept { return joints_; }
  double frame_interval_ms() const noexcept { return frame_interval_ms_; }
  bool empty() const noexcept { return frames_ == 0; }

  double at(int t, int joint, int axis) const { return coords_[index(t, joint, axis)]; }
  double& at(int t, int joint, int axis) { return coords_[index(t, joint, axis)]; }

  std::span<const double> coords() const noexcept { return coords_; }
  std::span<double> coords() noexcept { return coords_; }
  std::span<const double> frame(int t) const {
    return std::span<const double>(coords_).subspan(static_cast<std::size_t>(t) * joints_ * kAxes,
                                                    static_cast<std::size_t>(joints_) * kAxes);
  }

  /// Frames [start, start + count) as a new sequence.
  PoseSequence slice(int start, int count) const;

  bool operator==(const PoseSequence&) const = default;

 private:
  std::size_t index(int t, int joint, int axis) const {
    return (static_cast<std::size_t>(t) * joints_ + joint) * kAxes + axis;
  }

  int frames_ = 0;
  int joints_ = 0;
  std::vector<double> coords_;
  double frame_interval_ms_ = kDefaultFrameIntervalMs;
};

struct SamplePair {
  PoseSequence observed;
  PoseSequence future;
  std::string source_id;
  bool corrupted = false;
};

struct SynthConfig {
  int joints = 4;
  int duration_frames = 100;
  std::vector<double> base_frequencies;  // Hz, one per joint
  std::vector<double> amplitude_mm;      // one per joint
  double noise_floor_mm = 0.0;
  double noise_growth_per_frame = 0.0;   // mm of extra std-dev per frame
  double frame_interval_ms = kDefaultFrameIntervalMs;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

enum class PoseFormat { kCsv, kJsonl };

PoseFormat pose_format_from_path(const std::filesystem::path& path);

PoseSequence load_sequence(const std::filesystem::path& path, PoseFormat format,
                           double frame_interval_ms = kDefaultFrameIntervalMs);
PoseSequence parse_sequence(std::istream& in, PoseFormat format,
                            double frame_interval_ms = kDefaultFrameIntervalMs);

/// Writes CSV with 6 decimal places, frame index first.
void save_sequence(const PoseSequence& seq, const std::filesystem::path& path);
void write_sequence_csv(const PoseSequence& seq, std::ostream& out);

/// Sliding windows of length `total_len`; the first `observed_len` frames are observed.
/// Returns an empty list when the sequence is shorter than `total_len`.
std::vector<SamplePair> window_split(const PoseSequence& seq, int observed_len, int total_len,
                                     int stride, const std::string& source_id = "seq");

/// Subtracts the root joint (index 0) of the first observed frame from every frame.
SamplePair remove_root_translation(SamplePair pair);

/// Per-joint, per-axis phase offsets used by synth_generate. The three axes of a
/// joint are spaced 2*pi/3 apart.
std::vector<std::array<double, kAxes>> synth_phases(const SynthConfig& cfg);

/// Noise-free value of joint `joint`, axis `axis` at frame `t`.
double synth_signal(const SynthConfig& cfg, std::span<const std::array<double, kAxes>> phases,
                    int t, int joint, int axis);

PoseSequence synth_generate(const SynthConfig& cfg);

std::vector<SamplePair> corrupt_samples(std::vector<SamplePair> pairs, double fraction,
                                        double noise_std_mm, std::uint64_t seed);

}  // namespace uahmp
