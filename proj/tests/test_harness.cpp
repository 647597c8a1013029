#include <gtest/gtest.h>

#include <sstream>

#include "silenzio/silenzio.hpp"

using namespace silenzio;

namespace {

const std::string root = SILENZIO_SOURCE_DIR;

TrainConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, root + "/configs");
}

const char* wine_cfg =
    "name = w\n"
    "dataset = ../data/wine.csv\n"
    "label_column = cultivar\n"
    "beta = 2\n"
    "alpha = 6\n"
    "architecture = 13-8-3\n"
    "epochs = 2\n";

EncodedSplit toy_split() {
  EncodedSplit s;
  s.classes = 2;
  s.features = Matrix<std::int64_t>(16, 2);
  s.real_features = Matrix<float>(16, 2);
  for (std::size_t i = 0; i < 16; ++i) {
    const int label = static_cast<int>(i % 2);
    const float x = label ? 0.5f + 0.03f * static_cast<float>(i) : -0.5f - 0.03f * static_cast<float>(i);
    s.real_features(i, 0) = x;
    s.real_features(i, 1) = 0.1f * static_cast<float>(i % 3);
    s.features(i, 0) = label ? 5 : -5;
    s.labels.push_back(label);
  }
  return s;
}

}  // namespace

TEST(Config, ParsesAndResolvesDataset) {
  const auto c = parse(std::string(wine_cfg) + "# comment\nseed = 7\nsplit_seed = 3\n");
  EXPECT_EQ(c.name, "w");
  EXPECT_EQ(c.hyper.alpha, 6u);
  EXPECT_EQ(c.hyper.beta, 2u);
  EXPECT_EQ(c.architecture, (std::vector<std::size_t>{13, 8, 3}));
  EXPECT_EQ(effective_split_seed(c), 3u);
  EXPECT_TRUE(std::filesystem::exists(c.dataset));
}

TEST(Config, SplitSeedDefaultsToRunSeed) {
  const auto c = parse(std::string(wine_cfg) + "seed = 9\n");
  EXPECT_EQ(effective_split_seed(c), 9u);
}

TEST(Config, Errors) {
  EXPECT_THROW(parse(std::string(wine_cfg) + "bogus = 1\n"), ConfigError);
  EXPECT_THROW(parse(std::string(wine_cfg) + "alpha = 4\n"), ConfigError);  // duplicate
  EXPECT_THROW(parse("name = x\n"), ConfigError);
  EXPECT_THROW(parse(std::string(wine_cfg) + "kappa = banana\n"), ConfigError);
  EXPECT_THROW(parse(std::string(wine_cfg) + "no equals sign\n"), ConfigError);
}

TEST(Config, TwentyClassesAreRejected) {
  auto c = parse(wine_cfg);
  c.architecture = {13, 8, 20};
  EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Config, OversizedLayerIsAConfigError) {
  auto c = parse(wine_cfg);
  c.architecture = {13, 4000, 3};
  c.hyper.alpha = 8;
  EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"breast_cancer", "thyroid_cancer", "diabetes", "wine", "vertebral_column", "parkinsons",
                           "heart_disease", "heart_failure"}) {
    const auto c = load_config(root + "/configs/" + name + ".cfg");
    EXPECT_NO_THROW(validate_config(c)) << name;
  }
}

TEST(Config, MismatchedInputWidth) {
  auto c = parse(wine_cfg);
  c.architecture = {12, 8, 3};
  EXPECT_THROW(prepare_run(c), ConfigError);
}

TEST(FloatReference, LearnsToySet) {
  const auto s = toy_split();
  // Linear: no bias, so a hidden layer can go dead on one class.
  FloatMlp m({2, 2}, 1);
  const auto r = float_reference_train(m, s, s, 200, 8, 1, AdamParams{0.05f});
  EXPECT_DOUBLE_EQ(r.epochs.back().train_accuracy, 1.0);
  EXPECT_EQ(r.epochs.size(), 201u);
}

TEST(FloatReference, Deterministic) {
  const auto s = toy_split();
  FloatMlp a({2, 3, 2}, 4), b({2, 3, 2}, 4);
  float_reference_train(a, s, s, 5, 8, 2);
  float_reference_train(b, s, s, 5, 8, 2);
  EXPECT_EQ(a.weights(1).data(), b.weights(1).data());
  EXPECT_EQ(a.weights(2).data(), b.weights(2).data());
}

TEST(Bench, OneLayerModelHasFourCircuits) {
  auto c = parse(wine_cfg);
  c.architecture = {13, 3};
  const auto circuits = bench_batch(prepare_run(c));
  std::vector<std::string> names;
  for (const auto& x : circuits) names.push_back(x.name);
  EXPECT_EQ(names, (std::vector<std::string>{"forward[1]", "loss", "gradient[1]", "update[1]"}));
}

TEST(Bench, SharesSumToOne) {
  const auto shares = circuit_shares(bench_batch(prepare_run(parse(wine_cfg))));
  double lookups = 0, linear = 0;
  for (const auto& s : shares) {
    lookups += s.lookup_share;
    linear += s.linear_share;
  }
  EXPECT_NEAR(lookups, 1.0, 1e-3);
  EXPECT_NEAR(linear, 1.0, 1e-3);
  double by_kind = 0;
  for (const auto& s : shares_by_kind(shares)) by_kind += s.lookup_share;
  EXPECT_NEAR(by_kind, 1.0, 1e-3);
}

TEST(Report, JsonFields) {
  auto c = parse(wine_cfg);
  c.float_baseline = true;
  const auto out = run_training(c);
  const auto j = to_json(out.report);
  EXPECT_EQ(j["format"], "silenzio-report 1");
  EXPECT_EQ(j["config"]["alpha"], "6");
  EXPECT_EQ(j["integer"]["epochs"].size(), 3u);
  EXPECT_EQ(j["float_baseline"]["epochs"].size(), 3u);
  EXPECT_EQ(j["dataset"]["train_samples"].get<std::size_t>() + j["dataset"]["test_samples"].get<std::size_t>(), 178u);
  EXPECT_EQ(j["integer"]["unsound_matmuls"], 0u);
  EXPECT_FALSE(j["op_counts_per_batch"].empty());
  EXPECT_GT(j["scaling_error"]["layers"].size(), 0u);
  std::ostringstream text;
  write_text_report(text, out.report);
  EXPECT_NE(text.str().find("best integer test accuracy"), std::string::npos);
}

TEST(Report, RepeatRunsAreIdentical) {
  auto c = parse(wine_cfg);
  c.float_baseline = false;
  const auto a = run_training(c);
  const auto b = run_training(c);
  EXPECT_EQ(model_to_string(a.model), model_to_string(b.model));
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
}

TEST(Verify, LossAndScalingSuitesPass) {
  for (const auto& s : run_verification("loss")) EXPECT_TRUE(s.passed()) << s.name;
  for (const auto& s : run_verification("scaling")) EXPECT_TRUE(s.passed()) << s.name;
}

TEST(Verify, UnknownScope) { EXPECT_THROW(run_verification("nope"), ConfigError); }
