#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advbench/tensor.hpp"

namespace advbench {

enum class Split : std::uint8_t { unassigned = 0, train = 1, validation = 2, test = 3 };

const char* split_name(Split s);

// Labelled samples with every coordinate in [-1, 1]. Samples keep a stable
// id (their index at creation) so random substreams and reports can refer
// to them independently of any subsetting.
struct Dataset {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> features;  // n x d, row-major
  std::vector<std::uint32_t> labels;
  std::vector<Split> splits;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return labels.size(); }
  std::span<const double> x(std::size_t i) const { return {features.data() + i * d, d}; }
  std::vector<std::size_t> indices(Split s) const;
  // Rows at `idx` as an |idx| x d matrix.
  Tensor matrix(std::span<const std::size_t> idx) const;

  void push_back(std::span<const double> x, std::uint32_t label, Split split, std::uint64_t id);
  // Throws unless the dataset satisfies its invariants.
  void validate() const;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;  // test gets the remainder
};

// Stratified, order-preserving split assignment: within each class the first
// train fraction goes to train, the next validation fraction to validation,
// the rest to test.
void assign_splits(Dataset& data, const SplitRatios& ratios);

// Generative model of the synthetic desk dataset. Classes are Gaussian
// clusters: a class template plus low-rank structured variation shared by
// all classes, plus isotropic pixel noise, clipped into [-1, 1]^d.
struct SynthOptions {
  std::size_t manifold_rank = 8;
  double center_scale = 0.015;
  double structure_sigma = 0.1;
  double pixel_sigma = 0.002;
  SplitRatios ratios{};
};

Dataset synth_dataset(std::size_t k, std::size_t d, std::size_t per_class, std::uint64_t seed,
                      const SynthOptions& options = {});

// Samples [first, first + count) of every class from the same generative
// model as synth_dataset, split tags unassigned. Sample j of class c is the
// same vector, with id j * k + c, whichever call produces it.
Dataset synth_draws(std::size_t k, std::size_t d, std::uint64_t seed, std::size_t first, std::size_t count,
                    const SynthOptions& options = {});

// Flat binary format: "ADVD1", u32 k, u32 d, u32 n, then n records of
// (d float64, u32 label). Split tags are not stored.
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& what = "dataset");
void save_external(const Dataset& data, const std::filesystem::path& path);
Dataset load_external(const std::filesystem::path& path);

}  // namespace advbench
