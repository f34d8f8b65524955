#include "advbench/detector_model.hpp"

#include <cmath>
#include <sstream>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"

namespace advbench {

std::vector<double> build_feature(const LogitSummary& summary) {
  std::vector<double> f(summary.clean);
  f.insert(f.end(), summary.mean_noisy.begin(), summary.mean_noisy.end());
  return f;
}

DetectorModel::DetectorModel(std::size_t k, Mlp net, std::vector<double> feature_mean, std::vector<double> feature_std,
                             double threshold, DetectorProvenance provenance)
    : k_(k), net_(std::move(net)), provenance_(std::move(provenance)) {
  if (net_.input_dim() != 2 * k_ || net_.output_dim() != 2) {
    throw ShapeError("DetectorModel: network must map 2k=" + std::to_string(2 * k_) + " features to 2 outputs");
  }
  set_normalization(std::move(feature_mean), std::move(feature_std));
  set_threshold(threshold);
}

DetectorModel DetectorModel::init(std::size_t k, std::uint64_t seed) {
  Mlp net = Mlp::init({2 * k, kHidden, kHidden, 2}, seed);
  return DetectorModel(k, std::move(net), std::vector<double>(2 * k, 0.0), std::vector<double>(2 * k, 1.0), 0.5, {});
}

void DetectorModel::set_normalization(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != 2 * k_ || stddev.size() != 2 * k_) throw ShapeError("DetectorModel: normalization vectors must have length 2k");
  for (double s : stddev) {
    if (!(s > 0.0)) throw NumericError("DetectorModel: normalization std must be positive");
  }
  mean_ = std::move(mean);
  std_ = std::move(stddev);
  mean_t_ = Tensor({1, 2 * k_}, mean_);
  std::vector<double> inv(std_.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / std_[i];
  inv_std_t_ = Tensor({1, 2 * k_}, inv);
}

void DetectorModel::set_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("DetectorModel: threshold must lie in (0,1), got " + std::to_string(t));
  threshold_ = t;
}

std::vector<double> DetectorModel::normalize(std::span<const double> feature) const {
  if (feature.size() != 2 * k_) throw ShapeError("DetectorModel: feature length " + std::to_string(feature.size()) + " != 2k");
  std::vector<double> out(feature.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (feature[i] - mean_[i]) * inv_std_t_[i];
  return out;
}

Tensor DetectorModel::normalize(const Tensor& features) const {
  if (features.cols() != 2 * k_) throw ShapeError("DetectorModel: feature width " + std::to_string(features.cols()) + " != 2k");
  Tensor out(features.shape());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < 2 * k_; ++c) out.at(r, c) = (features.at(r, c) - mean_[c]) * inv_std_t_[c];
  }
  return out;
}

Tensor DetectorModel::probabilities(const Tensor& features) const {
  return softmax_rows(net_.logits(normalize(features)));
}

double DetectorModel::p_adversarial(std::span<const double> feature) const {
  const Tensor p = probabilities(Tensor::row(feature));
  return p.at(0, 1);
}

Var DetectorModel::forward(Tape& tape, Var features) const {
  const Tensor& f = features.value();
  if (f.cols() != 2 * k_) throw ShapeError("DetectorModel::forward: feature width " + std::to_string(f.cols()) + " != 2k");
  // Rows other than one would need explicit tiling of the normalization
  // constants (no broadcasting on the tape).
  Var mean = tape.constant(mean_t_);
  Var inv = tape.constant(inv_std_t_);
  if (f.rows() != 1) {
    Tensor m({f.rows(), 2 * k_}), s({f.rows(), 2 * k_});
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = 0; c < 2 * k_; ++c) {
        m.at(r, c) = mean_[c];
        s.at(r, c) = inv_std_t_[c];
      }
    }
    mean = tape.leaf(std::move(m));
    inv = tape.leaf(std::move(s));
  }
  return net_.forward(tape, mul(sub(features, mean), inv));
}

namespace {

std::string provenance_text(const DetectorProvenance& p) {
  std::ostringstream os;
  os.precision(17);
  os << "attack=" << p.attack << "\nepsilon=" << p.epsilon << "\nseed=" << p.seed << "\niterations=" << p.iterations
     << "\nfpr_target=" << p.fpr_target << "\n";
  return os.str();
}

DetectorProvenance parse_provenance(const std::string& text, ByteReader& r) {
  DetectorProvenance p;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("malformed provenance line \"" + line + "\"");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "attack") p.attack = value;
      else if (key == "epsilon") p.epsilon = std::stod(value);
      else if (key == "seed") p.seed = std::stoull(value);
      else if (key == "iterations") p.iterations = std::stoull(value);
      else if (key == "fpr_target") p.fpr_target = std::stod(value);
    } catch (const std::exception&) {
      r.fail("bad provenance value for " + key);
    }
  }
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_detector(const DetectorModel& det) {
  ByteWriter w;
  w.magic("ADVT1");
  w.u32(static_cast<std::uint32_t>(det.k()));
  w.f64s(det.feature_mean());
  w.f64s(det.feature_std());
  write_layers(w, det.net());
  w.f64(det.threshold());
  w.text(provenance_text(det.provenance()));
  w.crc();
  return w.bytes();
}

DetectorModel decode_detector(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("ADVT1");
  const std::uint32_t k = r.u32();
  if (k < 2) r.fail("detector class count must be >= 2");
  auto mean = r.f64s(2 * k);
  auto stddev = r.f64s(2 * k);
  Mlp net = read_layers(r);
  const double threshold = r.f64();
  const std::string prov = r.text();
  auto provenance = parse_provenance(prov, r);
  r.expect_crc();
  return DetectorModel(k, std::move(net), std::move(mean), std::move(stddev), threshold, std::move(provenance));
}

void save_detector(const DetectorModel& det, const std::filesystem::path& path) { write_file(path, encode_detector(det)); }

DetectorModel load_detector(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("detector checkpoint not found: " + path.string());
  return decode_detector(read_file(path), path.string());
}

}  // namespace advbench
