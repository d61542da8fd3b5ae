#include "uahmp/skeleton_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include <fmt/format.h>
#include <json.hpp>

#include "uahmp/errors.hpp"

namespace uahmp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line, fmt::format("malformed number '{}'", field));
  }
  if (!std::isfinite(value)) {
    throw DataError(fmt::format("line {}: non-finite coordinate '{}'", line, field));
  }
  return value;
}

long long parse_int(std::string_view field, std::size_t line) {
  field = trim(field);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(line, fmt::format("malformed frame index '{}'", field));
  }
  return value;
}

// Appends one record's coordinates, enforcing the joint count fixed by the first record.
void append_record(std::vector<double>& coords, std::span<const double> values, int& joints,
                   std::size_t line) {
  if (values.empty() || values.size() % kAxes != 0) {
    throw SchemaError(fmt::format("line {}: {} coordinate fields is not a positive multiple of 3",
                                  line, values.size()));
  }
  const int n = static_cast<int>(values.size() / kAxes);
  if (joints == 0) {
    joints = n;
  } else if (n != joints) {
    throw SchemaError(fmt::format("line {}: expected {} joints, found {}", line, joints, n));
  }
  coords.insert(coords.end(), values.begin(), values.end());
}

}  // namespace

PoseSequence::PoseSequence(int frames, int joints, std::vector<double> coords,
                           double frame_interval_ms)
    : frames_(frames), joints_(joints), coords_(std::move(coords)),
      frame_interval_ms_(frame_interval_ms) {
  if (frames < 1 || joints < 1) {
    throw ArgumentError(fmt::format("invalid pose sequence shape {}x{}", frames, joints));
  }
  if (coords_.size() != static_cast<std::size_t>(frames) * joints * kAxes) {
    throw ArgumentError(fmt::format("coordinate count {} does not match {}x{}x3", coords_.size(),
                                    frames, joints));
  }
  if (!(frame_interval_ms > 0.0) || !std::isfinite(frame_interval_ms)) {
    throw ArgumentError("frame_interval_ms must be positive");
  }
  for (double v : coords_) {
    if (!std::isfinite(v)) throw DataError("pose sequence contains a non-finite coordinate");
  }
}

PoseSequence PoseSequence::zeros(int frames, int joints, double frame_interval_ms) {
  return PoseSequence(frames, joints,
                      std::vector<double>(static_cast<std::size_t>(frames) * joints * kAxes, 0.0),
                      frame_interval_ms);
}

PoseSequence PoseSequence::slice(int start, int count) const {
  if (start < 0 || count < 1 || start + count > frames_) {
    throw ArgumentError(fmt::format("slice [{}, {}) outside {} frames", start, start + count,
                                    frames_));
  }
  const auto stride = static_cast<std::ptrdiff_t>(joints_) * kAxes;
  std::vector<double> out(coords_.begin() + start * stride,
                          coords_.begin() + (start + count) * stride);
  return PoseSequence(count, joints_, std::move(out), frame_interval_ms_);
}

void SynthConfig::validate() const {
  if (joints < 1) throw ArgumentError("synth: joints must be >= 1");
  if (duration_frames < 1) throw ArgumentError("synth: duration_frames must be >= 1");
  if (base_frequencies.size() != static_cast<std::size_t>(joints) ||
      amplitude_mm.size() != static_cast<std::size_t>(joints)) {
    throw ArgumentError("synth: base_frequencies and amplitude_mm need one entry per joint");
  }
  if (!(noise_floor_mm >= 0.0) || !(noise_growth_per_frame >= 0.0)) {
    throw ArgumentError("synth: noise parameters must be non-negative");
  }
  if (!(frame_interval_ms > 0.0)) throw ArgumentError("synth: frame_interval_ms must be positive");
}

PoseFormat pose_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return PoseFormat::kCsv;
  if (ext == ".jsonl" || ext == ".json") return PoseFormat::kJsonl;
  throw ArgumentError(fmt::format("cannot infer pose format from '{}'", path.string()));
}

PoseSequence parse_sequence(std::istream& in, PoseFormat format, double frame_interval_ms) {
  std::vector<double> coords;
  std::vector<double> values;
  int joints = 0;
  int frames = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    values.clear();
    if (format == PoseFormat::kCsv) {
      std::size_t field = 0;
      std::size_t pos = 0;
      while (pos <= body.size()) {
        const auto comma = body.find(',', pos);
        const auto token = body.substr(pos, comma == std::string_view::npos ? body.npos : comma - pos);
        if (field == 0) {
          parse_int(token, line_no);
        } else {
          values.push_back(parse_double(token, line_no));
        }
        ++field;
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
    } else {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, e.what());
      }
      if (!record.is_object() || !record.contains("t") || !record["t"].is_number_integer() ||
          !record.contains("joints") || !record["joints"].is_array()) {
        throw ParseError(line_no, "expected {\"t\": <int>, \"joints\": [[x,y,z], ...]}");
      }
      for (const auto& joint : record["joints"]) {
        if (!joint.is_array() || joint.size() != kAxes) {
          throw SchemaError(fmt::format("line {}: each joint needs exactly 3 coordinates", line_no));
        }
        for (const auto& c : joint) {
          if (!c.is_number()) throw ParseError(line_no, "joint coordinate is not a number");
          const double v = c.get<double>();
          if (!std::isfinite(v)) throw DataError(fmt::format("line {}: non-finite coordinate", line_no));
          values.push_back(v);
        }
      }
    }
    append_record(coords, values, joints, line_no);
    ++frames;
  }
  if (frames == 0) throw ParseError(line_no, "no pose records");
  return PoseSequence(frames, joints, std::move(coords), frame_interval_ms);
}

PoseSequence load_sequence(const std::filesystem::path& path, PoseFormat format,
                           double frame_interval_ms) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  return parse_sequence(in, format, frame_interval_ms);
}

void write_sequence_csv(const PoseSequence& seq, std::ostream& out) {
  std::string row;
  for (int t = 0; t < seq.frames(); ++t) {
    row = fmt::format("{}", t);
    for (double v : seq.frame(t)) fmt::format_to(std::back_inserter(row), ",{:.6f}", v);
    row += '\n';
    out << row;
  }
}

void save_sequence(const PoseSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  write_sequence_csv(seq, out);
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<SamplePair> window_split(const PoseSequence& seq, int observed_len, int total_len,
                                     int stride, const std::string& source_id) {
  if (observed_len < 1 || total_len <= observed_len || stride < 1) {
    throw ArgumentError(fmt::format("window_split needs 1 <= T < T_f and stride >= 1 (got T={}, "
                                    "T_f={}, stride={})",
                                    observed_len, total_len, stride));
  }
  std::vector<SamplePair> pairs;
  if (seq.frames() < total_len) return pairs;
  const int count = (seq.frames() - total_len) / stride + 1;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int start = i * stride;
    pairs.push_back(SamplePair{seq.slice(start, observed_len),
                               seq.slice(start + observed_len, total_len - observed_len),
                               fmt::format("{}@{}", source_id, start), false});
  }
  return pairs;
}

SamplePair remove_root_translation(SamplePair pair) {
  const std::array<double, kAxes> root{pair.observed.at(0, 0, 0), pair.observed.at(0, 0, 1),
                                       pair.observed.at(0, 0, 2)};
  for (PoseSequence* part : {&pair.observed, &pair.future}) {
    for (int t = 0; t < part->frames(); ++t) {
      for (int j = 0; j < part->joints(); ++j) {
        for (int a = 0; a < kAxes; ++a) part->at(t, j, a) -= root[a];
      }
    }
  }
  return pair;
}

std::vector<std::array<double, kAxes>> synth_phases(const SynthConfig& cfg) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x5048u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<std::array<double, kAxes>> phases(static_cast<std::size_t>(cfg.joints));
  for (auto& joint : phases) {
    const double base = uniform(rng);
    for (int a = 0; a < kAxes; ++a) joint[a] = base + a * 2.0 * std::numbers::pi / kAxes;
  }
  return phases;
}

double synth_signal(const SynthConfig& cfg, std::span<const std::array<double, kAxes>> phases,
                    int t, int joint, int axis) {
  const double seconds = t * cfg.frame_interval_ms / 1000.0;
  return cfg.amplitude_mm[joint] *
         std::sin(2.0 * std::numbers::pi * cfg.base_frequencies[joint] * seconds +
                  phases[joint][axis]);
}

PoseSequence synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto phases = synth_phases(cfg);
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x4e53u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto out = PoseSequence::zeros(cfg.duration_frames, cfg.joints, cfg.frame_interval_ms);
  const bool noisy = cfg.noise_floor_mm > 0.0 || cfg.noise_growth_per_frame > 0.0;
  for (int t = 0; t < cfg.duration_frames; ++t) {
    const double std_dev = cfg.noise_floor_mm + t * cfg.noise_growth_per_frame;
    for (int j = 0; j < cfg.joints; ++j) {
      for (int a = 0; a < kAxes; ++a) {
        double v = synth_signal(cfg, phases, t, j, a);
        if (noisy) v += std_dev * normal(rng);
        out.at(t, j, a) = v;
      }
    }
  }
  return out;
}

std::vector<SamplePair> corrupt_samples(std::vector<SamplePair> pairs, double fraction,
                                        double noise_std_mm, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ArgumentError("corrupt fraction must be in [0,1]");
  if (!(noise_std_mm >= 0.0)) throw ArgumentError("corrupt noise std must be non-negative");
  const auto count = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(pairs.size()) + 1e-9));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x4352u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(chosen.begin(), chosen.end());

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t idx : chosen) {
    auto& pair = pairs[idx];
    pair.corrupted = true;
    if (noise_std_mm == 0.0) continue;
    for (double& v : pair.future.coords()) v += noise_std_mm * normal(rng);
  }
  return pairs;
}

}  // namespace uahmp
