#pragma once

// Experiment configuration: a plain-text INI dialect
//
//   # comment
//   [section]
//   key = value
//
// Lists are comma separated. Every key has a default, so an empty file is a
// valid configuration. serialize() emits every key in a fixed order with
// round-trip precision; the config hash is FNV-1a-64 of that text.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/detectors.hpp"
#include "advbench/noise.hpp"
#include "advbench/training.hpp"

namespace advbench {

struct DatasetSpec {
  std::string source = "synth";  // synth | external
  std::filesystem::path path;    // external only
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t per_class = 600;
  SynthOptions synth{};
};

struct ModelSpec {
  std::vector<std::size_t> hidden{256, 128};
  TrainConfig train{};
};

struct NoiseSpec {
  std::vector<double> epsilons{0.01, 0.1, 1.0, 10.0};
  std::size_t count = 256;
};

struct AttackSpec {
  AttackConfig base{};
  std::size_t samples = 0;  // attacked test samples per run; 0 = whole test split
};

struct DetectorSpec {
  DetectorHyper hyper{};
  std::size_t fit_samples = 400;  // leading validation samples used to fit detectors
};

struct ArmsRaceSpec {
  double epsilon = 0.1;
  IterativeConfig iterative{};
};

struct ProbeSpec {
  double curve_min = 0.01;
  double curve_max = 10.0;
  std::size_t curve_points = 13;
  std::size_t curve_count = 256;
  ConeConfig cone{};
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  NoiseSpec noise;
  AttackSpec attack;
  DetectorSpec detector;
  ArmsRaceSpec armsrace;
  ProbeSpec probe;
  std::vector<double> fpr_targets{0.01, 0.05};
  std::uint64_t seed = 1;
  std::filesystem::path out = "advbench-out";

  // Re-derives every component seed from the master seed.
  void apply_seed(std::uint64_t master);
  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& text, const std::string& what = "config");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& cfg);
// 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::vector<double> parse_double_list(const std::string& text, const std::string& what);

}  // namespace advbench
