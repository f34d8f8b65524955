#include <gtest/gtest.h>

#include <filesystem>

#include "advbench/binary_io.hpp"
#include "advbench/dataset.hpp"
#include "advbench/error.hpp"
#include "advbench/mlp.hpp"
#include "advbench/noise.hpp"
#include "advbench/training.hpp"
#include "fd_check.hpp"

using namespace advbench;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "advbench_test_model";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Synth, SameSeedSameDataset) {
  const Dataset a = synth_dataset(2, 4, 100, 7);
  const Dataset b = synth_dataset(2, 4, 100, 7);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.splits, b.splits);
  const Dataset c = synth_dataset(2, 4, 100, 8);
  EXPECT_NE(a.features, c.features);
}

TEST(Synth, CoordinatesStayInPixelRange) {
  SynthOptions wide;
  wide.center_scale = 2.0;  // forces heavy clipping
  const Dataset d = synth_dataset(3, 16, 50, 3, wide);
  for (double v : d.features) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Synth, RejectsTooFewSamplesPerClass) {
  EXPECT_THROW(synth_dataset(2, 4, 9, 1), ConfigError);
  EXPECT_THROW(synth_dataset(1, 4, 100, 1), ConfigError);
  EXPECT_THROW(synth_dataset(2, 1, 100, 1), ConfigError);
}

TEST(Synth, SplitsAreDisjointStratifiedAndCoverEverySample) {
  const Dataset d = synth_dataset(4, 8, 100, 2);
  const auto tr = d.indices(Split::train), va = d.indices(Split::validation), te = d.indices(Split::test);
  EXPECT_EQ(tr.size() + va.size() + te.size(), d.size());
  EXPECT_EQ(tr.size(), 240u);
  EXPECT_EQ(va.size(), 80u);
  std::vector<int> per_class(4, 0);
  for (auto i : te) per_class[d.labels[i]]++;
  for (int c : per_class) EXPECT_EQ(c, 20);
}

TEST(Synth, DrawsExtendTheSameGenerativeModel) {
  // Sample j of class c is identical whichever call produces it.
  const Dataset base = synth_dataset(3, 8, 20, 5);
  const Dataset more = synth_draws(3, 8, 5, 0, 20);
  EXPECT_EQ(base.features, more.features);
  const Dataset tail = synth_draws(3, 8, 5, 10, 10);
  const Dataset head = synth_draws(3, 8, 5, 0, 20);
  // tail row r is class r % 3, index 10 + r / 3
  for (std::size_t r = 0; r < tail.size(); ++r) {
    const std::size_t c = r % 3, j = 10 + r / 3;
    const auto a = tail.x(r), b = head.x(j * 3 + c);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    EXPECT_EQ(tail.ids[r], head.ids[j * 3 + c]);
  }
}

TEST(External, RoundTripIsByteIdentical) {
  const Dataset d = synth_dataset(3, 5, 12, 4);
  const auto path = temp_file("roundtrip.advd");
  save_external(d, path);
  const Dataset back = load_external(path);
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(encode_dataset(back), read_file(path));
}

TEST(External, TruncatedFileNamesExpectedAndActualLength) {
  const Dataset d = synth_dataset(2, 4, 10, 4);
  auto bytes = encode_dataset(d);
  bytes.resize(bytes.size() - 7);
  try {
    decode_dataset(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    const std::size_t payload = 20u * (4u * 8u + 4u);
    EXPECT_NE(msg.find(std::to_string(payload)), std::string::npos) << msg;
    EXPECT_NE(msg.find(std::to_string(payload - 7)), std::string::npos) << msg;
  }
}

TEST(External, HeaderWithZeroClassesIsRejected) {
  ByteWriter w;
  w.magic("ADVD1");
  w.u32(0);
  w.u32(4);
  w.u32(0);
  EXPECT_THROW(decode_dataset(w.bytes()), FormatError);
}

TEST(External, OutOfRangePixelReportsByteOffset) {
  Dataset d = synth_dataset(2, 4, 10, 4);
  d.features[5] = 1.5;  // record 1, coordinate 1
  ByteWriter w;
  w.magic("ADVD1");
  w.u32(2);
  w.u32(4);
  w.u32(static_cast<std::uint32_t>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    w.f64s(d.x(i));
    w.u32(d.labels[i]);
  }
  try {
    decode_dataset(w.bytes());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    // header 5 + 12 bytes, record 0 is 36 bytes, then one coordinate of record 1
    EXPECT_EQ(e.offset(), 17u + 36u + 8u);
  }
}

TEST(External, BadMagicIsRejected) {
  std::vector<std::uint8_t> junk{'N', 'O', 'P', 'E', '!', 0, 0, 0};
  EXPECT_THROW(decode_dataset(junk), FormatError);
}

TEST(Predict, ArgmaxWithFirstIndexTieBreak) {
  // Identity network: logits == input.
  Mlp id({3, 3}, {Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})}, {Tensor({1, 3}, 0.0)});
  EXPECT_EQ(predict(id, std::vector<double>{3, 1, 2}).label, 0u);
  Mlp id2({2, 2}, {Tensor::matrix(2, 2, {1, 0, 0, 1})}, {Tensor({1, 2}, 0.0)});
  EXPECT_EQ(predict(id2, std::vector<double>{5, 5}).label, 0u);
  EXPECT_THROW(predict(id, std::vector<double>{1, 2}), ShapeError);
}

TEST(Predict, SoftmaxArgmaxEqualsLogitArgmax) {
  const Mlp m = Mlp::init({6, 8, 5}, 3);
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Tensor x = advbench::testing::random_tensor({1, 6}, s);
    const auto p = predict(m, x.row_span(0));
    const Tensor probs = softmax_rows(Tensor::row(p.logits));
    EXPECT_EQ(argmax(probs.row_span(0)), p.label);
  }
}

TEST(Checkpoint, SaveLoadForwardIsBitwiseIdentical) {
  const Mlp m = Mlp::init({5, 7, 3}, 11);
  const auto path = temp_file("model.advm");
  save_model(m, path);
  const Mlp back = load_model(path);
  EXPECT_TRUE(back == m);
  const Tensor x = advbench::testing::random_tensor({4, 5}, 2);
  EXPECT_EQ(back.logits(x), m.logits(x));
}

TEST(Checkpoint, CorruptedPayloadFailsCrc) {
  const Mlp m = Mlp::init({3, 4, 2}, 1);
  auto bytes = encode_model(m);
  bytes[bytes.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_model(bytes), FormatError);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const Dataset d = synth_dataset(2, 4, 20, 1);
  Mlp m = Mlp::init({4, 8, 2}, 1);
  const Mlp before = m;
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainReport r = train(m, d, cfg);
  EXPECT_TRUE(r.epoch_loss.empty());
  EXPECT_TRUE(m == before);
}

TEST(Train, SameSeedGivesIdenticalParameters) {
  const Dataset d = synth_dataset(3, 8, 40, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  Mlp a = Mlp::init({8, 16, 3}, 2), b = Mlp::init({8, 16, 3}, 2);
  train(a, d, cfg);
  train(b, d, cfg);
  EXPECT_TRUE(a == b);
}

TEST(Train, LossDecreasesOnSeparableData) {
  SynthOptions easy;
  easy.center_scale = 0.3;
  const Dataset d = synth_dataset(3, 8, 60, 1, easy);
  Mlp m = Mlp::init({8, 16, 3}, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  const TrainReport r = train(m, d, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 10u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
  EXPECT_GT(r.test_accuracy, 0.9);
}

TEST(Train, DivergenceAdvisesLowerLearningRate) {
  SynthOptions easy;
  easy.center_scale = 0.3;
  easy.structure_sigma = 0.25;
  easy.pixel_sigma = 0.05;
  const Dataset d = synth_dataset(3, 8, 60, 1, easy);
  Mlp m = Mlp::init({8, 64, 3}, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e6;
  try {
    train(m, d, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("learning rate"), std::string::npos) << e.what();
  }
}
