#include "uahmp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "uahmp/errors.hpp"

namespace uahmp {

namespace {

void check_pair(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  if (pred.frames() != truth.frames() || pred.joints() != truth.joints()) {
    throw ArgumentError(fmt::format("prediction shape {}x{} does not match truth {}x{}",
                                    pred.frames(), pred.joints(), truth.frames(), truth.joints()));
  }
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

nlohmann::json to_json(const HorizonReport& r) {
  return nlohmann::json{{"horizons_ms", r.horizons_ms},         {"frames", r.frames},
                        {"mpjpe_mm", r.mpjpe_mm},               {"mean_var", r.mean_var},
                        {"coverage_1sigma", r.coverage_1sigma}, {"samples", r.samples}};
}

std::vector<int> horizon_frames(std::span<const double> horizons_ms, double frame_interval_ms,
                                int future_frames) {
  if (!(frame_interval_ms > 0.0)) throw ArgumentError("frame interval must be positive");
  std::vector<int> frames;
  std::vector<std::string> bad;
  for (double h : horizons_ms) {
    const double k = h / frame_interval_ms;
    const double rounded = std::round(k);
    if (std::abs(k - rounded) > 1e-9 * std::max(1.0, std::abs(k)) || rounded < 1.0 ||
        rounded > future_frames) {
      bad.push_back(fmt::format("{}", h));
      continue;
    }
    frames.push_back(static_cast<int>(rounded));
  }
  if (!bad.empty()) {
    throw ArgumentError(fmt::format(
        "horizons [{}] ms do not map to a future frame in [1, {}] at {} ms per frame",
        fmt::join(bad, ", "), future_frames, frame_interval_ms));
  }
  return frames;
}

HorizonReport mpjpe_at_horizons(const GaussianPoseSequence& pred, const PoseSequence& truth,
                                std::span<const double> horizons_ms, double frame_interval_ms) {
  return mpjpe_at_horizons(std::span<const GaussianPoseSequence>(&pred, 1),
                           std::span<const PoseSequence>(&truth, 1), horizons_ms,
                           frame_interval_ms);
}

HorizonReport mpjpe_at_horizons(std::span<const GaussianPoseSequence> preds,
                                std::span<const PoseSequence> truths,
                                std::span<const double> horizons_ms, double frame_interval_ms) {
  if (preds.size() != truths.size() || preds.empty()) {
    throw ArgumentError("need one ground truth per prediction and at least one pair");
  }
  HorizonReport r;
  r.horizons_ms.assign(horizons_ms.begin(), horizons_ms.end());
  r.frames = horizon_frames(horizons_ms, frame_interval_ms, preds.front().frames());
  r.samples = preds.size();
  const std::size_t h_count = r.frames.size();
  r.mpjpe_mm.assign(h_count, 0.0);
  r.mean_var.assign(h_count, 0.0);
  r.coverage_1sigma.assign(h_count, 0.0);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const auto& pred = preds[s];
    const auto& truth = truths[s];
    check_pair(pred, truth);
    if (pred.frames() != preds.front().frames()) throw ArgumentError("predictions differ in length");
    for (std::size_t h = 0; h < h_count; ++h) {
      const int t = r.frames[h] - 1;
      double err = 0.0;
      double var = 0.0;
      int covered = 0;
      for (int j = 0; j < pred.joints(); ++j) {
        double sq = 0.0;
        for (int a = 0; a < kAxes; ++a) {
          const double e = pred.mu(t, j, a) - truth.at(t, j, a);
          sq += e * e;
          var += pred.var(t, j, a);
          if (std::abs(e) <= std::sqrt(pred.var(t, j, a))) ++covered;
        }
        err += std::sqrt(sq);
      }
      const double coords = static_cast<double>(pred.joints()) * kAxes;
      r.mpjpe_mm[h] += err / pred.joints();
      r.mean_var[h] += var / coords;
      r.coverage_1sigma[h] += covered / coords;
    }
  }
  const double n = static_cast<double>(preds.size());
  for (std::size_t h = 0; h < h_count; ++h) {
    r.mpjpe_mm[h] /= n;
    r.mean_var[h] /= n;
    r.coverage_1sigma[h] /= n;
  }
  return r;
}

nlohmann::json to_json(const CalibrationStats& s) {
  return nlohmann::json{
      {"pearson_var_vs_sqerr",
       s.pearson_var_vs_sqerr ? nlohmann::json(*s.pearson_var_vs_sqerr) : nlohmann::json(nullptr)},
      {"coverage_1sigma", s.coverage_1sigma},
      {"coverage_2sigma", s.coverage_2sigma},
      {"coordinates", s.coordinates}};
}

CalibrationStats calibration_stats(const GaussianPoseSequence& pred, const PoseSequence& truth) {
  return calibration_stats(std::span<const GaussianPoseSequence>(&pred, 1),
                           std::span<const PoseSequence>(&truth, 1));
}

CalibrationStats calibration_stats(std::span<const GaussianPoseSequence> preds,
                                   std::span<const PoseSequence> truths) {
  if (preds.size() != truths.size()) throw ArgumentError("need one ground truth per prediction");
  std::vector<double> vars;
  std::vector<double> sq_errs;
  std::size_t in1 = 0;
  std::size_t in2 = 0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    check_pair(preds[s], truths[s]);
    const auto mu = preds[s].means();
    const auto var = preds[s].variances();
    const auto x = truths[s].coords();
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double e = mu[i] - x[i];
      const double sd = std::sqrt(var[i]);
      vars.push_back(var[i]);
      sq_errs.push_back(e * e);
      if (std::abs(e) <= sd) ++in1;
      if (std::abs(e) <= 2.0 * sd) ++in2;
    }
  }
  if (vars.size() < 2) throw ArgumentError("calibration needs at least two coordinates");
  CalibrationStats out;
  out.coordinates = vars.size();
  out.pearson_var_vs_sqerr = pearson(vars, sq_errs);
  out.coverage_1sigma = static_cast<double>(in1) / static_cast<double>(vars.size());
  out.coverage_2sigma = static_cast<double>(in2) / static_cast<double>(vars.size());
  return out;
}

std::vector<double> UncertaintyMap::row_means() const {
  std::vector<double> out(static_cast<std::size_t>(frames), 0.0);
  for (int t = 0; t < frames; ++t) {
    double s = 0.0;
    for (int j = 0; j < joints; ++j) s += at(t, j);
    out[t] = s / joints;
  }
  return out;
}

UncertaintyMap uncertainty_map(const GaussianPoseSequence& pred) {
  UncertaintyMap m{pred.frames(), pred.joints(), {}};
  m.values.reserve(static_cast<std::size_t>(pred.frames()) * pred.joints());
  for (int t = 0; t < pred.frames(); ++t) {
    for (int j = 0; j < pred.joints(); ++j) {
      m.values.push_back((pred.var(t, j, 0) + pred.var(t, j, 1) + pred.var(t, j, 2)) / 3.0);
    }
  }
  return m;
}

UncertaintyMap mean_uncertainty_map(std::span<const GaussianPoseSequence> preds) {
  if (preds.empty()) throw ArgumentError("no predictions to average");
  auto out = uncertainty_map(preds.front());
  for (std::size_t s = 1; s < preds.size(); ++s) {
    const auto m = uncertainty_map(preds[s]);
    if (m.frames != out.frames || m.joints != out.joints) {
      throw ArgumentError("predictions differ in shape");
    }
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] += m.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(preds.size());
  return out;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("spearman needs equal-length series");
  if (a.size() < 2) return std::nullopt;
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

double point_radius(double var_x, double var_y, double var_z, const PointSizeStyle& style) {
  return style.r_min_px + style.alpha_px_per_mm * std::sqrt((var_x + var_y + var_z) / 3.0);
}

std::string pointsize_svg(const GaussianPoseSequence& pred, const PoseSequence* truth,
                          const PointSizeStyle& style) {
  if (truth) check_pair(pred, *truth);
  double min_x = std::numeric_limits<double>::infinity();
  double max_x = -min_x;
  double min_y = min_x;
  double max_y = -min_x;
  auto extend = [&](double x, double y) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  };
  double max_r = style.r_min_px;
  for (int t = 0; t < pred.frames(); ++t) {
    for (int j = 0; j < pred.joints(); ++j) {
      extend(pred.mu(t, j, 0), pred.mu(t, j, 1));
      if (truth) extend(truth->at(t, j, 0), truth->at(t, j, 1));
      max_r = std::max(max_r, point_radius(pred.var(t, j, 0), pred.var(t, j, 1), pred.var(t, j, 2), style));
    }
  }
  if (pred.frames() == 0) min_x = max_x = min_y = max_y = 0.0;
  const double pad = style.margin_px + max_r;
  const double cell_w = (max_x - min_x) * style.px_per_mm + 2.0 * pad;
  const double height = (max_y - min_y) * style.px_per_mm + 2.0 * pad;
  const double width = cell_w * std::max(1, pred.frames());

  auto px = [&](int t, double x) { return t * cell_w + pad + (x - min_x) * style.px_per_mm; };
  auto py = [&](double y) { return pad + (max_y - y) * style.px_per_mm; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.3f}\" height=\"{:.3f}\" "
      "viewBox=\"0 0 {:.3f} {:.3f}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height, width, height);
  for (int t = 0; t < pred.frames(); ++t) {
    fmt::format_to(std::back_inserter(svg), "<g id=\"frame{}\">\n", t);
    for (int j = 0; j < pred.joints(); ++j) {
      const double r = point_radius(pred.var(t, j, 0), pred.var(t, j, 1), pred.var(t, j, 2), style);
      fmt::format_to(std::back_inserter(svg),
                     "<circle class=\"pred\" cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"{:.3f}\" "
                     "fill=\"#d62728\" fill-opacity=\"0.5\"/>\n",
                     px(t, pred.mu(t, j, 0)), py(pred.mu(t, j, 1)), r);
      if (truth) {
        fmt::format_to(std::back_inserter(svg),
                       "<circle class=\"truth\" cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"1.000\" "
                       "fill=\"#222222\"/>\n",
                       px(t, truth->at(t, j, 0)), py(truth->at(t, j, 1)));
      }
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void render_pointsize_svg(const GaussianPoseSequence& pred, const PoseSequence* truth,
                          const std::filesystem::path& out, const PointSizeStyle& style) {
  write_file(out, pointsize_svg(pred, truth, style));
}

MapFormat map_format_from_string(std::string_view name) {
  if (name == "csv") return MapFormat::kCsv;
  if (name == "pgm") return MapFormat::kPgm;
  if (name == "svg") return MapFormat::kSvg;
  throw ArgumentError(fmt::format("unknown map format '{}'", name));
}

std::string map_csv(const UncertaintyMap& map) {
  std::string out;
  for (int t = 0; t < map.frames; ++t) {
    for (int j = 0; j < map.joints; ++j) {
      if (j > 0) out += ',';
      fmt::format_to(std::back_inserter(out), "{:.6f}", map.at(t, j));
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<unsigned char> normalized_levels(const UncertaintyMap& map) {
  std::vector<unsigned char> levels(map.values.size(), 0);
  if (map.values.empty()) return levels;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) return levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    levels[i] = static_cast<unsigned char>(std::lround((map.values[i] - *lo) / span * 255.0));
  }
  return levels;
}

}  // namespace

std::string map_pgm(const UncertaintyMap& map) {
  std::string out = fmt::format("P5\n{} {}\n255\n", map.joints, map.frames);
  for (unsigned char v : normalized_levels(map)) out.push_back(static_cast<char>(v));
  return out;
}

std::string map_svg(const UncertaintyMap& map) {
  constexpr int kCell = 16;
  const auto levels = normalized_levels(map);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
      map.joints * kCell, map.frames * kCell);
  for (int t = 0; t < map.frames; ++t) {
    for (int j = 0; j < map.joints; ++j) {
      const int g = levels[static_cast<std::size_t>(t) * map.joints + j];
      fmt::format_to(std::back_inserter(svg),
                     "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" "
                     "fill=\"rgb({},{},{})\"><title>t={} joint={} var={:.6f}</title></rect>\n",
                     j * kCell, t * kCell, kCell, kCell, g, g, g, t, j, map.at(t, j));
    }
  }
  svg += "</svg>\n";
  return svg;
}

void render_map(const UncertaintyMap& map, const std::filesystem::path& out, MapFormat format) {
  switch (format) {
    case MapFormat::kCsv: write_file(out, map_csv(map)); break;
    case MapFormat::kPgm: write_file(out, map_pgm(map)); break;
    case MapFormat::kSvg: write_file(out, map_svg(map)); break;
  }
}

UncertaintyMap load_map_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  UncertaintyMap m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        std::size_t used = 0;
        m.values.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(line_no, fmt::format("malformed map value '{}'", cell));
      }
      ++cols;
    }
    if (m.frames == 0) {
      m.joints = cols;
    } else if (cols != m.joints) {
      throw SchemaError(fmt::format("line {}: expected {} columns, found {}", line_no, m.joints, cols));
    }
    ++m.frames;
  }
  return m;
}

void save_prediction(const GaussianPoseSequence& pred, const std::filesystem::path& path,
                     int first_frame) {
  std::string out;
  for (int t = 0; t < pred.frames(); ++t) {
    nlohmann::json joints = nlohmann::json::array();
    for (int j = 0; j < pred.joints(); ++j) {
      joints.push_back({pred.mu(t, j, 0), pred.var(t, j, 0), pred.mu(t, j, 1), pred.var(t, j, 1),
                        pred.mu(t, j, 2), pred.var(t, j, 2)});
    }
    out += nlohmann::json{{"t", first_frame + t}, {"joints", joints}}.dump();
    out += '\n';
  }
  write_file(path, out);
}

GaussianPoseSequence load_prediction(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<double> mu;
  std::vector<double> var;
  int joints = 0;
  int frames = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!rec.is_object() || !rec.contains("joints") || !rec["joints"].is_array() ||
        !rec.contains("t") || !rec["t"].is_number_integer()) {
      throw ParseError(line_no, "expected {\"t\": <int>, \"joints\": [[mu_x, var_x, ...], ...]}");
    }
    const auto& js = rec["joints"];
    if (frames == 0) {
      joints = static_cast<int>(js.size());
    } else if (static_cast<int>(js.size()) != joints) {
      throw SchemaError(fmt::format("line {}: expected {} joints", line_no, joints));
    }
    for (const auto& g : js) {
      if (!g.is_array() || g.size() != 6) {
        throw SchemaError(fmt::format("line {}: each joint needs 6 Gaussian parameters", line_no));
      }
      for (int a = 0; a < kAxes; ++a) {
        mu.push_back(g[2 * a].get<double>());
        var.push_back(g[2 * a + 1].get<double>());
      }
    }
    ++frames;
  }
  if (frames == 0) throw ParseError(line_no, "no prediction records");
  return GaussianPoseSequence(frames, joints, std::move(mu), std::move(var));
}

}  // namespace uahmp
