#include "advbench/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

const char* split_name(Split s) {
  switch (s) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

Tensor Dataset::matrix(std::span<const std::size_t> idx) const {
  if (idx.empty()) throw ShapeError("Dataset::matrix: empty index set");
  Tensor out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = x(idx[r]);
    std::copy(src.begin(), src.end(), out.raw() + r * d);
  }
  return out;
}

void Dataset::push_back(std::span<const double> xs, std::uint32_t label, Split split, std::uint64_t id) {
  if (xs.size() != d) throw ShapeError("Dataset::push_back: sample has " + std::to_string(xs.size()) + " values, expected " + std::to_string(d));
  features.insert(features.end(), xs.begin(), xs.end());
  labels.push_back(label);
  splits.push_back(split);
  ids.push_back(id);
}

void Dataset::validate() const {
  if (k < 2) throw Error("dataset: class count must be >= 2");
  if (d < 1) throw Error("dataset: dimension must be >= 1");
  if (features.size() != size() * d || splits.size() != size() || ids.size() != size()) {
    throw Error("dataset: inconsistent column lengths");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (labels[i] >= k) throw Error("dataset: label " + std::to_string(labels[i]) + " out of range at sample " + std::to_string(i));
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!(features[i] >= -1.0 && features[i] <= 1.0)) {
      throw Error("dataset: value outside [-1,1] at sample " + std::to_string(i / d));
    }
  }
}

void assign_splits(Dataset& data, const SplitRatios& ratios) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.train + ratios.validation > 1.0) {
    throw ConfigError("split ratios must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> per_class(data.k, 0);
  for (auto y : data.labels) per_class[y]++;
  std::vector<std::size_t> seen(data.k, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = data.labels[i];
    const auto n = static_cast<double>(per_class[y]);
    const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * n));
    const auto n_val = static_cast<std::size_t>(std::llround((ratios.train + ratios.validation) * n)) - n_train;
    const std::size_t j = seen[y]++;
    data.splits[i] = j < n_train ? Split::train : j < n_train + n_val ? Split::validation : Split::test;
  }
}

namespace {

struct Generator {
  std::size_t k, d, rank;
  std::vector<double> templates;  // k x d
  std::vector<double> basis;      // rank x d, orthonormal rows

  Generator(std::size_t k_, std::size_t d_, std::uint64_t seed, const SynthOptions& o)
      : k(k_), d(d_), rank(std::min(o.manifold_rank, d_)), templates(k_ * d_), basis(rank * d_) {
    Rng trng(derive_seed(seed, "synth/templates"));
    for (double& v : templates) v = o.center_scale * trng.normal();
    Rng brng(derive_seed(seed, "synth/basis"));
    for (std::size_t r = 0; r < rank; ++r) {
      double* row = basis.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) row[j] = brng.normal();
      for (std::size_t q = 0; q < r; ++q) {
        const double* prev = basis.data() + q * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += row[j] * prev[j];
        for (std::size_t j = 0; j < d; ++j) row[j] -= dot * prev[j];
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) norm += row[j] * row[j];
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < d; ++j) row[j] /= norm;
    }
  }

  // Structured variation is scaled by sqrt(d) so its per-pixel magnitude is
  // comparable to structure_sigma.
  void sample(std::uint32_t c, std::size_t index, std::uint64_t seed, const SynthOptions& o, std::vector<double>& out) const {
    Rng rng(derive_seed(seed, "synth/sample", c, index));
    out.assign(templates.begin() + c * d, templates.begin() + (c + 1) * d);
    const double scale = o.structure_sigma * std::sqrt(static_cast<double>(d) / static_cast<double>(std::max<std::size_t>(rank, 1)));
    for (std::size_t r = 0; r < rank; ++r) {
      const double a = scale * rng.normal();
      const double* row = basis.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) out[j] += a * row[j];
    }
    for (std::size_t j = 0; j < d; ++j) out[j] = std::clamp(out[j] + o.pixel_sigma * rng.normal(), -1.0, 1.0);
  }
};

}  // namespace

Dataset synth_draws(std::size_t k, std::size_t d, std::uint64_t seed, std::size_t first, std::size_t count,
                    const SynthOptions& options) {
  if (k < 2) throw ConfigError("synth_dataset: need k >= 2 classes");
  if (d < 2) throw ConfigError("synth_dataset: need d >= 2");
  Generator gen(k, d, seed, options);
  Dataset data;
  data.k = k;
  data.d = d;
  data.features.reserve(k * count * d);
  std::vector<double> x;
  // Interleave classes so any prefix of the dataset is roughly balanced.
  for (std::size_t j = first; j < first + count; ++j) {
    for (std::uint32_t c = 0; c < k; ++c) {
      gen.sample(c, j, seed, options, x);
      data.push_back(x, c, Split::unassigned, j * k + c);
    }
  }
  return data;
}

Dataset synth_dataset(std::size_t k, std::size_t d, std::size_t per_class, std::uint64_t seed,
                      const SynthOptions& options) {
  if (per_class < 10) throw ConfigError("synth_dataset: per_class must be >= 10 (got " + std::to_string(per_class) + ")");
  Dataset data = synth_draws(k, d, seed, 0, per_class, options);
  assign_splits(data, options.ratios);
  return data;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& data) {
  ByteWriter w;
  w.magic("ADVD1");
  w.u32(static_cast<std::uint32_t>(data.k));
  w.u32(static_cast<std::uint32_t>(data.d));
  w.u32(static_cast<std::uint32_t>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.f64s(data.x(i));
    w.u32(data.labels[i]);
  }
  return w.bytes();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("ADVD1");
  Dataset data;
  const std::size_t header_at = r.offset();
  data.k = r.u32();
  data.d = r.u32();
  const std::size_t n = r.u32();
  if (data.k < 2) throw FormatError(what + ": header k=" + std::to_string(data.k) + " must be >= 2", header_at);
  if (data.d == 0) throw FormatError(what + ": header d=0", header_at + 4);
  const std::size_t record = data.d * 8 + 4;
  if (r.remaining() != n * record) {
    r.fail("payload length mismatch: expected " + std::to_string(n * record) + " bytes for " + std::to_string(n) +
           " records, actual " + std::to_string(r.remaining()));
  }
  data.features.reserve(n * data.d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    auto x = r.f64s(data.d);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!(x[j] >= -1.0 && x[j] <= 1.0)) {
        throw FormatError(what + ": value " + std::to_string(x[j]) + " outside [-1,1] in record " + std::to_string(i), at + 8 * j);
      }
    }
    const std::size_t label_at = r.offset();
    const std::uint32_t y = r.u32();
    if (y >= data.k) throw FormatError(what + ": label " + std::to_string(y) + " >= k in record " + std::to_string(i), label_at);
    data.push_back(x, y, Split::unassigned, i);
  }
  r.expect_end();
  return data;
}

void save_external(const Dataset& data, const std::filesystem::path& path) { write_file(path, encode_dataset(data)); }

Dataset load_external(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("dataset file not found: " + path.string());
  return decode_dataset(read_file(path), path.string());
}

}  // namespace advbench
