#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "advbench/autodiff.hpp"
#include "advbench/mlp.hpp"
#include "advbench/noise.hpp"

namespace advbench {

// L(x) = f(x) || mean_noisy(x): clean logits first, averaged noisy logits
// second. The ordering is part of the detector checkpoint contract.
std::vector<double> build_feature(const LogitSummary& summary);

struct DetectorProvenance {
  std::string attack = "none";
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double fpr_target = 0.0;
};

// Binary classifier over logit features: standardization, then a
// 2k -> 100 -> 100 -> 2 ReLU network. Output 0 is "benign", 1 is "adversarial".
class DetectorModel {
 public:
  static constexpr std::size_t kHidden = 100;

  DetectorModel() = default;
  DetectorModel(std::size_t k, Mlp net, std::vector<double> feature_mean, std::vector<double> feature_std,
                double threshold, DetectorProvenance provenance);

  static DetectorModel init(std::size_t k, std::uint64_t seed);

  std::size_t k() const { return k_; }
  std::size_t feature_dim() const { return 2 * k_; }
  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const std::vector<double>& feature_mean() const { return mean_; }
  const std::vector<double>& feature_std() const { return std_; }
  void set_normalization(std::vector<double> mean, std::vector<double> stddev);
  double threshold() const { return threshold_; }
  void set_threshold(double t);
  const DetectorProvenance& provenance() const { return provenance_; }
  DetectorProvenance& provenance() { return provenance_; }

  // Standardized copy of one feature row, or of every row of a matrix.
  std::vector<double> normalize(std::span<const double> feature) const;
  Tensor normalize(const Tensor& features) const;

  // (p_benign, p_adversarial) per row of raw features (n x 2k).
  Tensor probabilities(const Tensor& features) const;
  double p_adversarial(std::span<const double> feature) const;
  // Adversarial iff p_adversarial >= threshold.
  bool flags(std::span<const double> feature) const { return p_adversarial(feature) >= threshold_; }

  // Raw features (n x 2k) on a tape -> detector logits (n x 2). The model
  // must outlive the tape.
  Var forward(Tape& tape, Var features) const;

 private:
  std::size_t k_ = 0;
  Mlp net_;
  std::vector<double> mean_;
  std::vector<double> std_;
  Tensor mean_t_;
  Tensor inv_std_t_;
  double threshold_ = 0.5;
  DetectorProvenance provenance_;
};

// "ADVT1", u32 k, float64[2k] mean, float64[2k] std, layer payload,
// float64 threshold, provenance text block, CRC32.
std::vector<std::uint8_t> encode_detector(const DetectorModel& det);
DetectorModel decode_detector(std::span<const std::uint8_t> bytes, const std::string& what = "detector");
void save_detector(const DetectorModel& det, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace advbench
