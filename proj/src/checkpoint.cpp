#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "uahmp/trainer.hpp"

namespace uahmp {

namespace {

constexpr char kMagic[] = "UAHMP1";
constexpr std::size_t kMagicLen = 6;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
  }
  void raw(std::string_view s) { out_.append(s); }

  void tensor(const std::string& name, const std::vector<std::uint32_t>& dims,
              const double* data, std::size_t count) {
    u32(static_cast<std::uint32_t>(name.size()));
    raw(name);
    u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) u32(d);
    for (std::size_t i = 0; i < count; ++i) f64(data[i]);
  }
  void bytes_tensor(const std::string& name, std::string_view bytes) {
    std::vector<double> values(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) values[i] = static_cast<unsigned char>(bytes[i]);
    tensor(name, {static_cast<std::uint32_t>(bytes.size())}, values.data(), values.size());
  }
  void scalar(const std::string& name, double v) { tensor(name, {}, &v, 1); }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
  }

  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string tensor_bytes(const RawTensor& t) {
  std::string s;
  s.reserve(t.values.size());
  for (double v : t.values) {
    if (!(v >= 0.0 && v <= 255.0) || v != static_cast<double>(static_cast<int>(v))) {
      throw FormatError("byte tensor holds a non-byte value");
    }
    s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return s;
}

const RawTensor& require(const std::map<std::string, RawTensor>& tensors, const std::string& name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError(fmt::format("checkpoint is missing tensor '{}'", name));
  return it->second;
}

double scalar(const std::map<std::string, RawTensor>& tensors, const std::string& name) {
  const auto& t = require(tensors, name);
  if (!t.dims.empty() || t.values.size() != 1) {
    throw FormatError(fmt::format("tensor '{}' is not a scalar", name));
  }
  return t.values[0];
}

}  // namespace

nlohmann::json ModelCheckpoint::config_json() const {
  return nlohmann::json{{"predictor", predictor}, {"train", train}, {"run", run_config}};
}

std::string ModelCheckpoint::config_hash() const { return hash_json(config_json()); }

std::string hash_json(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::string serialize_checkpoint(const ModelCheckpoint& ckpt) {
  const auto& s = ckpt.state;
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> model;
  std::vector<int> ranks;
  s.params.for_each_tensor([&](const std::string& name, const Eigen::MatrixXd& m, int rank) {
    model.emplace_back(name, &m);
    ranks.push_back(rank);
  });

  std::ostringstream rng;
  rng << s.rng;
  auto config = ckpt.config_json();
  config["hash"] = ckpt.config_hash();

  Writer w;
  w.raw(std::string_view(kMagic, kMagicLen));
  w.u32(static_cast<std::uint32_t>(model.size() + 8));
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& m = *model[i].second;
    std::vector<std::uint32_t> dims;
    if (ranks[i] == 1) {
      dims = {static_cast<std::uint32_t>(m.size())};
    } else {
      dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    }
    // Row-major payload.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    w.tensor(model[i].first, dims, rm.data(), static_cast<std::size_t>(rm.size()));
  }
  w.tensor("adam.m", {static_cast<std::uint32_t>(s.adam.m.size())}, s.adam.m.data(),
           static_cast<std::size_t>(s.adam.m.size()));
  w.tensor("adam.v", {static_cast<std::uint32_t>(s.adam.v.size())}, s.adam.v.data(),
           static_cast<std::size_t>(s.adam.v.size()));
  w.scalar("state.step", static_cast<double>(s.adam.step));
  w.scalar("state.epoch", s.epoch);
  w.scalar("state.best_epoch", s.best_epoch);
  w.scalar("state.best_val_mpjpe", s.best_val_mpjpe);
  w.bytes_tensor("state.rng", rng.str());
  w.bytes_tensor("config.json", config.dump());
  return w.take();
}

ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0) {
    throw FormatError("bad checkpoint magic");
  }
  Reader r(bytes);
  r.raw(kMagicLen);
  const auto count = r.u32();
  std::map<std::string, RawTensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = r.raw(r.u32());
    RawTensor t;
    const auto rank = r.u32();
    if (rank > 2) throw FormatError(fmt::format("tensor '{}' has rank {}", name, rank));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    if (n > bytes.size()) throw FormatError("checkpoint is truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f64();
    tensors.emplace(name, std::move(t));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor");

  nlohmann::json config;
  try {
    config = nlohmann::json::parse(tensor_bytes(require(tensors, "config.json")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("embedded config is invalid: {}", e.what()));
  }

  ModelCheckpoint ckpt;
  try {
    ckpt.predictor = config.at("predictor").get<PredictorConfig>();
    ckpt.train = config.at("train").get<TrainConfig>();
    ckpt.run_config = config.value("run", nlohmann::json::object());
    ckpt.predictor.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("embedded config is invalid: {}", e.what()));
  }

  auto& s = ckpt.state;
  s.params = init_params([&] {
    auto shape_only = ckpt.predictor;
    shape_only.init_scale = 0.0;
    return shape_only;
  }());
  s.params.config = ckpt.predictor;
  s.params.for_each_tensor([&](const std::string& name, Eigen::MatrixXd& m, int rank) {
    const auto& t = require(tensors, name);
    const bool shape_ok =
        rank == 1 ? (t.dims.size() == 1 && t.dims[0] == m.size())
                  : (t.dims.size() == 2 && t.dims[0] == m.rows() && t.dims[1] == m.cols());
    if (!shape_ok) throw FormatError(fmt::format("tensor '{}' has the wrong shape", name));
    m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        t.values.data(), m.rows(), m.cols());
  });

  const auto n = static_cast<Eigen::Index>(s.params.parameter_count());
  for (auto [name, target] : {std::pair{"adam.m", &s.adam.m}, std::pair{"adam.v", &s.adam.v}}) {
    const auto& t = require(tensors, name);
    if (t.dims.size() != 1 || static_cast<Eigen::Index>(t.dims[0]) != n) {
      throw FormatError(fmt::format("tensor '{}' is not congruent with the parameters", name));
    }
    *target = Eigen::Map<const Eigen::VectorXd>(t.values.data(), n);
  }
  s.adam.step = static_cast<std::uint64_t>(scalar(tensors, "state.step"));
  s.epoch = static_cast<int>(scalar(tensors, "state.epoch"));
  s.best_epoch = static_cast<int>(scalar(tensors, "state.best_epoch"));
  s.best_val_mpjpe = scalar(tensors, "state.best_val_mpjpe");
  std::istringstream rng(tensor_bytes(require(tensors, "state.rng")));
  rng >> s.rng;
  if (!rng) throw FormatError("invalid optimizer rng state");
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace uahmp
