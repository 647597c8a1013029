#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "silenzio/data.hpp"
#include "silenzio/nn.hpp"
#include "support/reference.hpp"

using namespace silenzio;

namespace {

Hyperparams hyper(unsigned alpha, unsigned beta) {
  Hyperparams hp;
  hp.alpha = alpha;
  hp.beta = beta;
  return hp;
}

reference::Params ref_params(const Hyperparams& hp, bool exact = false) {
  return {hp.alpha, hp.beta, hp.gamma, hp.relu_cap, hp.kappa, hp.moduli_width, hp.weight_min(), hp.weight_max(), exact};
}

reference::Model to_reference(const MlpModel& m) {
  reference::Model r{m.dims(), {}};
  for (std::size_t l = 1; l <= m.layers(); ++l) r.w.push_back(to_plain(m.weights(l)));
  return r;
}

Matrix<std::int64_t> random_inputs(std::size_t rows, std::size_t cols, unsigned beta, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const int lo = -(1 << (beta - 1));
  std::uniform_int_distribution<int> d(lo, -lo - 1);
  Matrix<std::int64_t> x(rows, cols);
  for (auto& v : x) v = d(gen);
  return x;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  std::vector<int> y(n);
  for (auto& v : y) v = d(gen);
  return y;
}

EncodedSplit make_split(Matrix<std::int64_t> x, std::vector<int> y, std::size_t classes) {
  EncodedSplit s;
  s.real_features = x.map([](std::int64_t v) { return static_cast<float>(v); });
  s.features = std::move(x);
  s.labels = std::move(y);
  s.classes = classes;
  return s;
}

Matrix<GadgetValue> labels_matrix(const std::vector<int>& y, std::size_t classes) {
  return to_gadget<Unsigned8>(one_hot(y, classes));
}

}  // namespace

TEST(Relu, CapExamples) {
  Evaluator ev;
  const Matrix<SignedGadgetValue> a(1, 3, std::vector<SignedGadgetValue>{SignedGadgetValue(-3), SignedGadgetValue(20), SignedGadgetValue(7)});
  const auto r = relu_cap(ev, a, 14);
  EXPECT_EQ(r[0].value(), 0);
  EXPECT_EQ(r[1].value(), 14);
  EXPECT_EQ(r[2].value(), 7);
  EXPECT_EQ(ev.stats().lookup_count, 3u);
}

TEST(Bases, BreastCancerStyleFirstLayer) {
  const MlpModel m({28, 8, 2}, hyper(5, 4));
  EXPECT_NEAR(forward_bits(m, 1), 13.81, 0.01);
  const auto& b = select_rns_base(forward_bits(m, 1), 4);
  EXPECT_EQ(std::vector<std::uint32_t>(b.moduli().begin(), b.moduli().end()),
            (std::vector<std::uint32_t>{11, 13, 15, 14}));
}

TEST(Bases, TooWideLayerIsRejected) {
  // 2^beta * 2^alpha * 4096 inputs needs more than any 4-bit catalog base.
  EXPECT_THROW(plan_bases(MlpModel({4096, 2}, hyper(8, 8)), 8), CapacityError);
}

TEST(Validate, ClassBound) {
  EXPECT_THROW(MlpModel({4, 20}, hyper(4, 4)), ConfigError);
  Hyperparams hp = hyper(4, 4);
  hp.kappa = 5;  // 8 * 32 > 255
  EXPECT_THROW(MlpModel({4, 8}, hp), ConfigError);
  EXPECT_NO_THROW(MlpModel({4, 15}, hyper(4, 4)));
}

TEST(Forward, IdentityPassesSmallInputsThrough) {
  MlpModel m({4, 4}, hyper(2, 4));
  for (std::size_t i = 0; i < 4; ++i) m.weights(1)(i, i) = SignedGadgetValue(1);
  const auto x = random_inputs(6, 4, 4, 7);
  const auto t = forward_pass(m, to_gadget<Signed8>(x));
  EXPECT_EQ(to_plain(t.logits()), x);
}

TEST(Forward, RejectsOutOfRangeInput) {
  const MlpModel m({2, 2}, hyper(2, 4));
  Matrix<std::int64_t> x(1, 2);
  x(0, 0) = 8;
  EXPECT_THROW(forward_pass(m, to_gadget<Signed8>(x)), RangeError);
}

TEST(Forward, MatchesReferenceOnRandomModels) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = MlpModel::initialize({9, 6, 5, 3}, hyper(5, 4), seed);
    const auto x = random_inputs(8, 9, 4, seed + 100);
    for (bool exact : {false, true}) {
      PassOptions opt;
      opt.scaling = exact ? ScalingMode::exact : ScalingMode::approximate;
      const auto t = forward_pass(m, to_gadget<Signed8>(x), opt);
      const auto acts = reference::forward(to_reference(m), x, ref_params(m.hyper(), exact));
      for (std::size_t l = 0; l < acts.size(); ++l) ASSERT_EQ(to_plain(t.activations[l]), acts[l]) << seed << " " << l;
    }
  }
}

TEST(Forward, EveryMatmulFitsItsBase) {
  const auto m = MlpModel::initialize({30, 8, 2}, hyper(5, 4), 3);
  const auto x = random_inputs(8, 30, 4, 3);
  // Worst case for the first layer: inputs at the negative extreme.
  Matrix<std::int64_t> worst(8, 30, -8);
  for (const auto& in : {x, worst}) {
    const auto t = forward_pass(m, to_gadget<Signed8>(in));
    for (const auto& r : t.matmuls) EXPECT_TRUE(r.sound()) << r.circuit;
  }
}

TEST(Loss, ExpEndpoints) {
  EXPECT_EQ(detail::exp_entry(63, 6, 4), 16);
  EXPECT_EQ(detail::exp_entry(0, 6, 4), 0);
  EXPECT_EQ(detail::exp_entry(62, 6, 4), 6);  // 16 / e = 5.89
}

TEST(Loss, SignOfDerivative) {
  Evaluator ev;
  Matrix<std::int64_t> logits(2, 3);
  logits(0, 0) = 63;  // confident and right
  logits(1, 2) = 63;  // confident and wrong
  const auto err = int_ce_loss_deriv(ev, to_gadget<Signed8>(logits), labels_matrix({0, 0}, 3), 7, 4);
  // Row 0: E = (16, 0, 0), E_hat = (16, 0, 0), T = 16 on the label.
  EXPECT_EQ(err(0, 0).value(), 0);
  EXPECT_EQ(err(0, 1).value(), 0);
  EXPECT_EQ(err(1, 0).value(), -1);
  EXPECT_EQ(err(1, 2).value(), 1);
}

TEST(Loss, MatchesReferenceOnRandomLogits) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> d(-63, 63);
  for (std::size_t o : {2u, 3u, 10u, 15u}) {
    for (unsigned kappa : {2u, 4u}) {
      if (o << kappa > 255) continue;
      Matrix<std::int64_t> logits(16, o);
      for (auto& v : logits) v = d(gen);
      const auto y = random_labels(16, o, o + kappa);
      Evaluator ev;
      const auto err = int_ce_loss_deriv(ev, to_gadget<Signed8>(logits), labels_matrix(y, o), 7, kappa);
      EXPECT_EQ(to_plain(err), reference::loss_sign(logits, y, 7, kappa)) << o << " " << kappa;
    }
  }
}

TEST(Loss, RejectsNonOneHotLabels) {
  Evaluator ev;
  const Matrix<std::int64_t> logits(1, 2);
  EXPECT_THROW(int_ce_loss_deriv(ev, to_gadget<Signed8>(logits), Matrix<GadgetValue>(1, 2), 7, 4), ShapeError);
}

TEST(Update, ZeroErrorLeavesWeightsUnchanged) {
  auto m = MlpModel::initialize({5, 4, 2}, hyper(5, 4), 9);
  const auto before = m;
  auto trace = forward_pass(m, to_gadget<Signed8>(random_inputs(8, 5, 4, 9)));
  backward_and_update(m, trace, Matrix<SignedGadgetValue>(8, 2));
  EXPECT_EQ(m, before);
}

TEST(Update, ClipSaturates) {
  const auto& t8 = detail::update_table(-128, 127);
  auto upd = [](const auto& t, int w, int g) { return t.at(SignedGadgetValue(w), SignedGadgetValue(g)).value(); };
  EXPECT_EQ(upd(t8, 127, -1), 127);
  EXPECT_EQ(upd(t8, -128, 1), -128);
  EXPECT_EQ(upd(t8, 5, 1), 4);
  const auto& t5 = detail::update_table(-16, 15);
  EXPECT_EQ(upd(t5, 15, -1), 15);
  EXPECT_EQ(upd(t5, -16, 1), -16);
}

TEST(Update, WeightsStayInClipRange) {
  for (auto clip : {WeightClip::alpha, WeightClip::int8}) {
    Hyperparams hp = hyper(4, 4);
    hp.weight_clip = clip;
    auto m = MlpModel::initialize({6, 5, 3}, hp, 4);
    const auto train_set = make_split(random_inputs(64, 6, 4, 1), random_labels(64, 3, 2), 3);
    TrainOptions opt;
    opt.epochs = 5;
    opt.record_scaling_error = false;
    train(m, train_set, train_set, opt);
    for (std::size_t l = 1; l <= m.layers(); ++l)
      for (auto v : m.weights(l)) {
        EXPECT_GE(v.value(), hp.weight_min());
        EXPECT_LE(v.value(), hp.weight_max());
      }
  }
}

TEST(Train, MatchesReferenceStepByStep) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (bool exact : {false, true}) {
      auto m = MlpModel::initialize({7, 6, 4, 3}, hyper(5, 4), seed);
      auto r = to_reference(m);
      PassOptions opt;
      opt.scaling = exact ? ScalingMode::exact : ScalingMode::approximate;
      for (std::size_t step = 0; step < 8; ++step) {
        const auto x = random_inputs(8, 7, 4, seed * 31 + step);
        const auto y = random_labels(8, 3, seed * 17 + step);
        train_step(m, to_gadget<Signed8>(x), labels_matrix(y, 3), opt);
        reference::train_step(r, x, y, ref_params(m.hyper(), exact));
        for (std::size_t l = 1; l <= m.layers(); ++l)
          ASSERT_EQ(to_plain(m.weights(l)), r.w[l - 1]) << "seed " << seed << " step " << step;
      }
    }
  }
}

TEST(Train, ToySeparableSetIsLearned) {
  // Class is the sign of the first feature; the second is noise.
  Matrix<std::int64_t> x(8, 2);
  const std::int64_t pts[8][2] = {{-6, 3}, {-5, -2}, {-7, 0}, {-4, 5}, {6, -3}, {5, 2}, {7, 0}, {4, -5}};
  for (std::size_t i = 0; i < 8; ++i) {
    x(i, 0) = pts[i][0];
    x(i, 1) = pts[i][1];
  }
  const auto set = make_split(x, {0, 0, 0, 0, 1, 1, 1, 1}, 2);
  auto m = MlpModel::initialize({2, 2}, hyper(4, 4), 1);
  TrainOptions opt;
  opt.epochs = 20;
  opt.batch_size = 8;
  const auto res = train(m, set, set, opt);
  EXPECT_EQ(res.batches, 20u);
  EXPECT_DOUBLE_EQ(res.epochs.back().train_accuracy, 1.0);
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  auto m = MlpModel::initialize({4, 3, 2}, hyper(4, 4), 2);
  const auto before = m;
  const auto set = make_split(random_inputs(16, 4, 4, 1), random_labels(16, 2, 1), 2);
  TrainOptions opt;
  opt.epochs = 0;
  const auto res = train(m, set, set, opt);
  EXPECT_EQ(m, before);
  EXPECT_EQ(res.batches, 0u);
  ASSERT_EQ(res.epochs.size(), 1u);
  EXPECT_EQ(res.best_test_accuracy, res.epochs[0].test_accuracy);
}

TEST(Train, Deterministic) {
  const auto set = make_split(random_inputs(40, 5, 4, 3), random_labels(40, 3, 3), 3);
  TrainOptions opt;
  opt.epochs = 3;
  auto a = MlpModel::initialize({5, 4, 3}, hyper(5, 4), 11);
  auto b = MlpModel::initialize({5, 4, 3}, hyper(5, 4), 11);
  const auto ra = train(a, set, set, opt);
  const auto rb = train(b, set, set, opt);
  EXPECT_EQ(model_to_string(a), model_to_string(b));
  EXPECT_EQ(ra.total.lookup_count, rb.total.lookup_count);
  EXPECT_EQ(ra.total.linear_op_count, rb.total.linear_op_count);
  EXPECT_TRUE(ra.unsound_matmuls.empty());
}

TEST(Train, OpCountsIndependentOfData) {
  auto m = MlpModel::initialize({5, 4, 3}, hyper(5, 4), 1);
  const auto t1 = train_step(m, to_gadget<Signed8>(random_inputs(8, 5, 4, 1)), labels_matrix(random_labels(8, 3, 1), 3));
  const auto t2 = train_step(m, to_gadget<Signed8>(random_inputs(8, 5, 4, 2)), labels_matrix(random_labels(8, 3, 2), 3));
  ASSERT_EQ(t1.circuits.size(), t2.circuits.size());
  for (std::size_t i = 0; i < t1.circuits.size(); ++i) {
    EXPECT_EQ(t1.circuits[i].name, t2.circuits[i].name);
    EXPECT_EQ(t1.circuits[i].stats.lookup_count, t2.circuits[i].stats.lookup_count);
  }
}

TEST(Predict, ZeroWeightsPickClassZero) {
  const MlpModel m({3, 4, 3}, hyper(4, 4));
  const auto pred = predict(m, random_inputs(10, 3, 4, 1), 8);
  for (int p : pred) EXPECT_EQ(p, 0);
}

TEST(Predict, EmptyDatasetIsAnError) {
  const MlpModel m({3, 2}, hyper(4, 4));
  EXPECT_THROW(predict(m, Matrix<std::int64_t>(0, 3), 8), ShapeError);
  EXPECT_THROW(accuracy({}, {}), ShapeError);
}

TEST(Predict, PartialLastChunk) {
  const auto m = MlpModel::initialize({3, 2}, hyper(4, 4), 5);
  const auto x = random_inputs(11, 3, 4, 5);
  const auto all = predict_logits(m, x, 8);
  Matrix<std::int64_t> tail(3, 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) tail(r, c) = x(8 + r, c);
  const auto t = predict_logits(m, tail, 8);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(all(8 + r, c), t(r, c));
}

TEST(Serialize, RoundTrip) {
  Hyperparams hp = hyper(6, 2);
  hp.weight_clip = WeightClip::int8;
  const auto m = MlpModel::initialize({13, 8, 3}, hp, 42);
  const auto s = model_to_string(m);
  EXPECT_EQ(model_from_string(s), m);
  EXPECT_EQ(model_to_string(model_from_string(s)), s);
}

TEST(Serialize, MalformedInputIsAParseError) {
  const auto s = model_to_string(MlpModel::initialize({2, 2}, hyper(4, 4), 1));
  EXPECT_THROW(model_from_string(""), ParseError);
  EXPECT_THROW(model_from_string("silenzio-model 2\n"), ParseError);
  EXPECT_THROW(model_from_string(s.substr(0, s.size() - 4)), ParseError);
  auto bad = s;
  bad.replace(bad.find("layer 1 2 2\n") + 12, 1, "x");
  EXPECT_THROW(model_from_string(bad), ParseError);
  // Weight outside the clip range.
  auto wide = s;
  const auto row = wide.find("layer 1 2 2\n") + 12;
  wide.replace(row, wide.find(' ', row) - row, "99");
  EXPECT_THROW(model_from_string(wide), ParseError);
}
