#include "advbench/mlp.hpp"

#include <cmath>

#include "advbench/binary_io.hpp"
#include "advbench/error.hpp"
#include "advbench/kernels.hpp"
#include "advbench/rng.hpp"

namespace advbench {

Mlp::Mlp(std::vector<std::size_t> sizes, std::vector<Tensor> weights, std::vector<Tensor> biases)
    : sizes_(std::move(sizes)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (sizes_.size() < 2) throw ShapeError("Mlp: need at least input and output sizes");
  if (weights_.size() != sizes_.size() - 1 || biases_.size() != weights_.size()) {
    throw ShapeError("Mlp: layer count does not match sizes");
  }
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (weights_[l].shape() != Shape{sizes_[l], sizes_[l + 1]}) {
      throw ShapeError("Mlp: weight " + std::to_string(l) + " has shape " + shape_str(weights_[l].shape()));
    }
    if (biases_[l].shape() != Shape{1, sizes_[l + 1]}) {
      throw ShapeError("Mlp: bias " + std::to_string(l) + " has shape " + shape_str(biases_[l].shape()));
    }
  }
}

Mlp Mlp::init(std::vector<std::size_t> sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ShapeError("Mlp::init: need at least input and output sizes");
  std::vector<Tensor> w, b;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Rng rng(derive_seed(seed, "mlp/init", l));
    Tensor wl({sizes[l], sizes[l + 1]});
    const double sd = std::sqrt(2.0 / static_cast<double>(sizes[l]));
    for (double& v : wl.data()) v = sd * rng.normal();
    w.push_back(std::move(wl));
    b.emplace_back(Shape{1, sizes[l + 1]}, 0.0);
  }
  return Mlp(std::move(sizes), std::move(w), std::move(b));
}

Tensor Mlp::logits(const Tensor& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("Mlp::logits: input has " + std::to_string(x.cols()) + " columns, expected " + std::to_string(input_dim()));
  }
  const std::size_t n = x.rows();
  Tensor h({n, input_dim()}, x.data());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const std::size_t in = sizes_[l], out = sizes_[l + 1];
    Tensor next({n, out});
    kernels::matmul(h.data(), weights_[l].data(), next.data(), n, in, out);
    const bool last = l + 1 == weights_.size();
    for (std::size_t i = 0; i < n; ++i) {
      double* row = next.raw() + i * out;
      for (std::size_t j = 0; j < out; ++j) {
        const double v = row[j] + biases_[l][j];
        row[j] = (last || v > 0.0) ? v : 0.0;
      }
    }
    h = std::move(next);
  }
  return h;
}

std::vector<double> Mlp::logits(std::span<const double> x) const {
  return logits(Tensor::row(x)).data();
}

Var Mlp::forward(Tape& tape, Var x) const {
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = affine(h, tape.constant(weights_[l]), tape.constant(biases_[l]));
    if (l + 1 < weights_.size()) h = relu(h);
  }
  return h;
}

Var Mlp::forward_trainable(Tape& tape, Var x, std::vector<Var>& params) const {
  params.clear();
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Var w = tape.leaf(weights_[l], true);
    Var b = tape.leaf(biases_[l], true);
    params.push_back(w);
    params.push_back(b);
    h = affine(h, w, b);
    if (l + 1 < weights_.size()) h = relu(h);
  }
  return h;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].numel() + biases_[l].numel();
  return n;
}

Prediction predict(const Mlp& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw ShapeError("predict: input has dimension " + std::to_string(x.size()) + ", model expects " + std::to_string(model.input_dim()));
  }
  Prediction p;
  p.logits = model.logits(x);
  p.label = argmax(p.logits);
  return p;
}

void write_layers(ByteWriter& w, const Mlp& net) {
  w.u32(static_cast<std::uint32_t>(net.sizes().size()));
  for (auto s : net.sizes()) w.u32(static_cast<std::uint32_t>(s));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    w.f64s(net.weights()[l].data());
    w.f64s(net.biases()[l].data());
  }
}

Mlp read_layers(ByteReader& r) {
  const std::uint32_t count = r.u32();
  if (count < 2 || count > 64) r.fail("implausible layer-size count " + std::to_string(count));
  std::vector<std::size_t> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t s = r.u32();
    if (s == 0) r.fail("zero layer size");
    sizes.push_back(s);
  }
  std::vector<Tensor> w, b;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    w.emplace_back(Shape{sizes[l], sizes[l + 1]}, r.f64s(sizes[l] * sizes[l + 1]));
    b.emplace_back(Shape{1, sizes[l + 1]}, r.f64s(sizes[l + 1]));
  }
  return Mlp(std::move(sizes), std::move(w), std::move(b));
}

std::vector<std::uint8_t> encode_model(const Mlp& model) {
  ByteWriter w;
  w.magic("ADVM1");
  write_layers(w, model);
  w.crc();
  return w.bytes();
}

Mlp decode_model(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("ADVM1");
  Mlp m = read_layers(r);
  r.expect_crc();
  return m;
}

void save_model(const Mlp& model, const std::filesystem::path& path) { write_file(path, encode_model(model)); }

Mlp load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("model checkpoint not found: " + path.string());
  return decode_model(read_file(path), path.string());
}

}  // namespace advbench
