#include <gtest/gtest.h>

#include <filesystem>

#include "advbench/config.hpp"
#include "advbench/csv.hpp"
#include "advbench/error.hpp"
#include "advbench/experiment.hpp"

using namespace advbench;

TEST(Config, DefaultsRoundTripThroughText) {
  const ExperimentConfig c = default_config();
  const ExperimentConfig back = parse_config(serialize(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(serialize(back), serialize(c));
  EXPECT_EQ(c.noise.count, 256u);
  EXPECT_EQ(c.fpr_targets, (std::vector<double>{0.01, 0.05}));
  EXPECT_EQ(c.armsrace.iterative.iterations, 10u);
  EXPECT_EQ(c.detector.fit_samples, 400u);
}

TEST(Config, EditedValuesRoundTripExactly) {
  ExperimentConfig c = default_config();
  c.noise.epsilons = {0.1, 1.0 / 3.0};
  c.attack.base.eps_max = 8.0 / 255.0;
  c.attack.base.target_rule = TargetRule::least_likely;
  c.model.hidden = {32};
  c.dataset.synth.center_scale = 0.1 + 0.2;  // not exactly representable in short form
  c.apply_seed(99);
  const ExperimentConfig back = parse_config(serialize(c));
  EXPECT_TRUE(back == c);
  EXPECT_EQ(back.noise.epsilons[1], 1.0 / 3.0);
  EXPECT_EQ(back.dataset.synth.center_scale, 0.1 + 0.2);
  EXPECT_EQ(back.attack.base.seed, c.attack.base.seed);
}

TEST(Config, CommentsBlankLinesAndPartialFiles) {
  const ExperimentConfig c = parse_config("# desk run\n\n[noise]\ncount = 64 ; fewer replicas\n[experiment]\nseed=7\n");
  EXPECT_EQ(c.noise.count, 64u);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{256, 128}));
}

TEST(Config, UnknownKeyNamesLineAndKey) {
  try {
    parse_config("[noise]\ncount = 4\nwobble = 1\n", "x.ini");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("x.ini:3"), std::string::npos) << m;
    EXPECT_NE(m.find("wobble"), std::string::npos) << m;
  }
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(parse_config("[noise]\ncount = many\n"), ConfigError);
  EXPECT_THROW(parse_config("[noise]\nepsilons = 0.1,-1\n"), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nfpr_targets = 0.9\n"), ConfigError);
  EXPECT_THROW(parse_config("[attack]\ntarget_rule = nearest\n"), ConfigError);
  EXPECT_THROW(parse_config("[attack]\nalpha = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[dataset]\nsource = external\n"), ConfigError);
  EXPECT_THROW(parse_config("[noise\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/advbench.ini"), ConfigError);
}

TEST(Config, HashTracksContentNotOutputLocation) {
  ExperimentConfig a = default_config(), b = default_config();
  b.out = "/tmp/elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.noise.count = 255;
  EXPECT_NE(config_hash(a), config_hash(b));
  ExperimentConfig s = default_config();
  s.apply_seed(2);
  EXPECT_NE(config_hash(a), config_hash(s));
}

TEST(Config, SeedFansOutToComponents) {
  ExperimentConfig a = default_config(), b = default_config();
  b.apply_seed(2);
  EXPECT_NE(a.attack.base.seed, b.attack.base.seed);
  EXPECT_NE(a.model.train.seed, b.model.train.seed);
  EXPECT_NE(a.attack.base.seed, a.detector.hyper.seed);
}

TEST(Csv, DialectAndRoundTrip) {
  CsvTable t{{"name", "value"}, {}};
  t.add({"a", csv_num(0.1)});
  t.add({"b", csv_num(std::uint64_t{42})});
  EXPECT_EQ(t.text(), "name,value\na,0.1\nb,42\n");
  const CsvTable back = parse_csv(t.text());
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(t.column("value"), 1u);
  EXPECT_THROW(t.column("nope"), Error);
  EXPECT_THROW(t.add({"too", "many", "cells"}), Error);
  EXPECT_THROW(t.add({"comma,inside", "1"}), Error);
}

TEST(Csv, NumbersUseShortestRoundTripForm) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0}) EXPECT_EQ(std::stod(csv_num(v)), v);
  EXPECT_EQ(csv_num(0.05), "0.05");
  EXPECT_EQ(csv_num(1.0), "1");
}

TEST(Results, ReferenceAnchorsAndColumns) {
  const auto ref = reference_tpr("stat", "cw", 0.1, 0.01);
  ASSERT_TRUE(ref.has_value());
  EXPECT_NEAR(*ref, 0.966, 1e-12);
  EXPECT_FALSE(reference_tpr("stat", "cw", 0.3, 0.01).has_value());
  ResultRow r{"stat", "cw", 0.1, 0.01, 0.5, 0.01, 10, 20, 1.0, ref};
  const CsvTable t = result_csv({r}, "00000000deadbeef");
  EXPECT_EQ(t.header, (std::vector<std::string>{"detector", "attack", "epsilon", "fpr_target", "tpr", "fpr",
                                                "n_adversarial", "n_benign", "attack_success", "reference_tpr",
                                                "config_hash"}));
  EXPECT_EQ(t.rows[0][t.column("reference_tpr")], csv_num(*ref));
  EXPECT_EQ(t.rows[0].back(), "00000000deadbeef");
}
