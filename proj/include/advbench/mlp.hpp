#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advbench/autodiff.hpp"
#include "advbench/binary_io.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

// Affine-ReLU stack with a final affine layer: sizes = {in, h1, ..., out}.
// Weights are stored in x out so a batch X (n x in) maps to X * W + b.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> sizes, std::vector<Tensor> weights, std::vector<Tensor> biases);

  // He-normal weights, zero biases.
  static Mlp init(std::vector<std::size_t> sizes, std::uint64_t seed);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }
  std::vector<Tensor>& weights() { return weights_; }
  std::vector<Tensor>& biases() { return biases_; }

  // Tape-free batch evaluation: X (n x in) -> logits (n x out).
  Tensor logits(const Tensor& x) const;
  std::vector<double> logits(std::span<const double> x) const;

  // Forward on a tape. Parameters enter as borrowed constants, so the Mlp
  // must outlive the tape.
  Var forward(Tape& tape, Var x) const;

  // Forward with parameters as differentiable leaves; `params` receives the
  // leaves in order W0, b0, W1, b1, ...
  Var forward_trainable(Tape& tape, Var x, std::vector<Var>& params) const;

  std::size_t parameter_count() const;
  bool operator==(const Mlp& other) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// The k-class target classifier.
struct Prediction {
  std::vector<double> logits;
  std::size_t label = 0;
};

Prediction predict(const Mlp& model, std::span<const double> x);

// Layer payload shared by model and detector checkpoints: u32 layer-size
// count, u32 sizes, then float64 W/b per layer.
void write_layers(ByteWriter& w, const Mlp& net);
Mlp read_layers(ByteReader& r);

// Model checkpoint: "ADVM1", layer payload, CRC32.
std::vector<std::uint8_t> encode_model(const Mlp& model);
Mlp decode_model(std::span<const std::uint8_t> bytes, const std::string& what = "model");
void save_model(const Mlp& model, const std::filesystem::path& path);
Mlp load_model(const std::filesystem::path& path);

}  // namespace advbench
