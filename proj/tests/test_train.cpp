#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "dvs/checkpoint.hpp"
#include "dvs/distill.hpp"
#include "dvs/optim.hpp"
#include "dvs/train.hpp"
#include "fd_check.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace dvs;
using namespace dvs::train;

namespace {

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Three classes of pure tones at well separated bins, random phase, no noise.
PreparedSet tone_set(std::size_t per_class, std::uint64_t seed) {
  PreparedSet s;
  s.paradigm = Paradigm::st;
  Rng rng(seed);
  const double bins[3] = {6.0, 30.0, 90.0};
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < 3; ++c) {
      Tensor raw(Shape{256, 11});
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t t = 0; t < 256; ++t)
        for (std::size_t x = 0; x < 11; ++x)
          raw[t * 11 + x] = static_cast<float>(std::cos(2.0 * std::numbers::pi * bins[c] * double(t) / 256.0 + phase));
      s.inputs.push_back(prepare_input(raw, Paradigm::st));
      s.labels.push_back(c);
    }
  }
  return s;
}

}  // namespace

TEST(DistillLoss, ToyInstance) {
  Tensor hint(Shape{8, 4, 1}, 1.0f);
  Regressor<float> reg{Tensor(Shape{8, 2}), Tensor(Shape{2}, std::vector<float>{0.5f, -0.5f})};
  const Tensor target(Shape{2, 4, 1});
  const std::vector<float> logits{0.0f, 0.0f, 0.0f};
  const auto t = distill_loss<float>(hint, reg, target, logits, 0, 0.5);
  EXPECT_NEAR(t.spectral, 0.25, 1e-7);
  EXPECT_NEAR(t.ce, std::log(3.0), 1e-6);
  EXPECT_NEAR(t.loss, 0.125 + 0.5 * std::log(3.0), 1e-6);
  EXPECT_NEAR(t.loss, 0.6743, 5e-5);
}

TEST(DistillLoss, BoundaryAlphasOnRandomInstances) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor64 hint = oracle::random_tensor<double>({8, 16, 5}, rng);
    const Tensor64 target = oracle::random_tensor<double>({2, 16, 5}, rng);
    const Regressor<double> reg{oracle::random_tensor<double>({8, 2}, rng), oracle::random_tensor<double>({2}, rng)};
    const std::vector<double> logits{rng.normal(), rng.normal(), rng.normal()};
    const int label = trial % 3;

    const Tensor64 pred = oracle::pointwise(hint, reg.weight, reg.bias);
    double mse = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mse += (pred[i] - target[i]) * (pred[i] - target[i]);
    mse /= double(pred.size());
    const double ce = oracle::cross_entropy(logits, label);

    EXPECT_EQ(distill_loss<double>(hint, reg, target, logits, label, 0.0).loss, nn::softmax_ce<double>(logits, label).loss);
    EXPECT_NEAR(distill_loss<double>(hint, reg, target, logits, label, 0.0).loss, ce, 1e-7);
    EXPECT_NEAR(distill_loss<double>(hint, reg, target, logits, label, 1.0).loss, mse, 1e-7);
    // Label does not matter at alpha = 1, target does not matter at alpha = 0.
    EXPECT_EQ(distill_loss<double>(hint, reg, target, logits, label, 1.0).loss,
              distill_loss<double>(hint, reg, target, logits, (label + 1) % 3, 1.0).loss);
    const Tensor64 other = oracle::random_tensor<double>({2, 16, 5}, rng);
    EXPECT_EQ(distill_loss<double>(hint, reg, target, logits, label, 0.0).loss,
              distill_loss<double>(hint, reg, other, logits, label, 0.0).loss);
    const auto mid = distill_loss<double>(hint, reg, target, logits, label, 0.3);
    EXPECT_NEAR(mid.loss, 0.3 * mse + 0.7 * ce, 1e-7);
    EXPECT_GE(mid.loss, 0.0);
  }
}

TEST(DistillLoss, ZeroOnlyAtPerfectMatch) {
  Tensor hint(Shape{8, 4, 1}, 1.0f);
  Regressor<float> reg{Tensor(Shape{8, 2}), Tensor(Shape{2}, std::vector<float>{0.5f, -0.5f})};
  Tensor target(Shape{2, 4, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    target[i] = 0.5f;
    target[4 + i] = -0.5f;
  }
  const std::vector<float> sure{100.0f, 0.0f, 0.0f};
  EXPECT_NEAR(distill_loss<float>(hint, reg, target, sure, 0, 0.5).loss, 0.0, 1e-7);
  EXPECT_GT(distill_loss<float>(hint, reg, target, sure, 1, 0.5).loss, 1.0);
  target[0] = 0.0f;
  EXPECT_GT(distill_loss<float>(hint, reg, target, sure, 0, 0.5).loss, 0.0);
}

TEST(DistillLoss, AlphaOutOfRange) {
  const Tensor hint(Shape{8, 4, 1});
  const Regressor<float> reg{Tensor(Shape{8, 2}), Tensor(Shape{2})};
  const Tensor target(Shape{2, 4, 1});
  const std::vector<float> logits{0.0f, 0.0f, 0.0f};
  for (double a : {-0.01, 1.01, std::nan("")}) {
    EXPECT_THROW(distill_loss<float>(hint, reg, target, logits, 0, a), ValueError);
  }
  TrainConfig c;
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DistillLoss, GradientMatchesFiniteDifference) {
  Rng rng(42);
  const Tensor64 hint0 = oracle::random_tensor<double>({8, 8, 3}, rng);
  const Tensor64 target = oracle::random_tensor<double>({2, 8, 3}, rng);
  Regressor<double> reg{oracle::random_tensor<double>({8, 2}, rng), oracle::random_tensor<double>({2}, rng)};
  std::vector<double> logits{0.3, -1.2, 0.8};
  DistillGrads<double> g;
  g.d_regressor = {Tensor64(Shape{8, 2}), Tensor64(Shape{2})};
  distill_loss_grad<double>(hint0, reg, target, logits, 2, 0.4, g);
  const double eps = 1e-6;
  Tensor64 hint = hint0;
  auto f = [&] { return distill_loss<double>(hint, reg, target, logits, 2, 0.4).loss; };
  for (std::size_t i = 0; i < hint.size(); i += 7) {
    const double o = hint[i];
    hint[i] = o + eps;
    const double up = f();
    hint[i] = o - eps;
    const double dn = f();
    hint[i] = o;
    EXPECT_NEAR(g.d_hint[i], (up - dn) / (2 * eps), 1e-8);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double o = logits[k];
    logits[k] = o + eps;
    const double up = f();
    logits[k] = o - eps;
    const double dn = f();
    logits[k] = o;
    EXPECT_NEAR(g.d_logits[k], (up - dn) / (2 * eps), 1e-8);
  }
  for (std::size_t i = 0; i < reg.weight.size(); ++i) {
    const double o = reg.weight[i];
    reg.weight[i] = o + eps;
    const double up = f();
    reg.weight[i] = o - eps;
    const double dn = f();
    reg.weight[i] = o;
    EXPECT_NEAR(g.d_regressor.weight[i], (up - dn) / (2 * eps), 1e-8);
  }
}

TEST(ModelBackward, FiniteDifferenceOverEveryParameter) {
  for (double alpha : {0.0, 0.5, 1.0}) {
    fdcheck::Problem p1 = fdcheck::make_problem(1, 7);
    const auto r1 = fdcheck::check(p1, alpha, 1e-3);
    EXPECT_EQ(r1.kinks, 0u) << "alpha " << alpha;
    EXPECT_LT(r1.worst_rel, 1e-5) << "depth 1 alpha " << alpha;

    fdcheck::Problem p3 = fdcheck::make_problem(3, 7);
    const auto r3 = fdcheck::check(p3, alpha, 1e-3);
    EXPECT_GT(r3.checked, 900u);
    EXPECT_LT(r3.worst_rel, 1e-5) << "depth 3 alpha " << alpha << " kinks " << r3.kinks;
  }
}

TEST(ModelBackward, DuplicatedBatchHasSameMeanGradient) {
  fdcheck::Problem p = fdcheck::make_problem(2, 8, 1);
  const Objective<double> obj{0.5, &p.regressor};
  const BatchItem<double> item{&p.inputs[0], p.labels[0], &p.targets[0]};
  const std::vector<BatchItem<double>> one{item}, two{item, item};
  const auto a = model_backward<double>(p.model, one, obj);
  const auto b = model_backward<double>(p.model, two, obj);
  EXPECT_NEAR(a.terms.loss, b.terms.loss, 1e-14);
  for (std::size_t l = 0; l < a.grads.layers.size(); ++l)
    for (std::size_t t = 0; t < a.grads.layers[l].size(); ++t)
      EXPECT_LE(oracle::max_abs_diff(a.grads.layers[l][t], b.grads.layers[l][t]), 1e-14);
  EXPECT_LE(oracle::max_abs_diff(a.grads.regressor.weight, b.grads.regressor.weight), 1e-14);
}

TEST(ModelBackward, AlphaZeroIgnoresTargets) {
  fdcheck::Problem p = fdcheck::make_problem(2, 9, 2);
  const Objective<double> obj{0.0, &p.regressor};
  std::vector<BatchItem<double>> with, without;
  for (std::size_t i = 0; i < 2; ++i) {
    with.push_back({&p.inputs[i], p.labels[i], &p.targets[i]});
    without.push_back({&p.inputs[i], p.labels[i], nullptr});
  }
  const auto a = model_backward<double>(p.model, with, obj);
  const auto b = model_backward<double>(p.model, without, Objective<double>{0.0, nullptr});
  EXPECT_EQ(a.grads.layers, b.grads.layers);
  EXPECT_EQ(a.terms.loss, b.terms.loss);
  for (double v : a.grads.regressor.weight.storage()) EXPECT_EQ(v, 0.0);
}

TEST(ModelBackward, Errors) {
  fdcheck::Problem p = fdcheck::make_problem(1, 9, 1);
  const std::vector<BatchItem<double>> none;
  EXPECT_THROW(model_backward<double>(p.model, none, Objective<double>{0.0, nullptr}), ValueError);
  const std::vector<BatchItem<double>> no_target{{&p.inputs[0], 0, nullptr}};
  EXPECT_THROW(model_backward<double>(p.model, no_target, Objective<double>{0.5, &p.regressor}), ValueError);
  const std::vector<BatchItem<double>> ok{{&p.inputs[0], 0, &p.targets[0]}};
  EXPECT_THROW(model_backward<double>(p.model, ok, Objective<double>{0.5, nullptr}), ValueError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<float> w{0.5f, -1.0f, 2.0f};
  const std::vector<float> g(3, 0.0f);
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step(w, g, s, 0.01);
  EXPECT_EQ(w, (std::vector<float>{0.5f, -1.0f, 2.0f}));
  EXPECT_EQ(s.step, 5);
}

TEST(Adam, ClosedFormFirstStep) {
  const std::vector<float> w0{0.5f, -1.0f, 2.0f, 0.0f};
  const std::vector<float> g{0.2f, -3.0f, 1e-4f, 7.0f};
  std::vector<float> w = w0;
  AdamState s;
  const double lr = 0.01;
  adam_step(w, g, s, lr);
  for (std::size_t i = 0; i < w.size(); ++i) {
    // m_hat = g, v_hat = g^2 after bias correction.
    const double expect = w0[i] - lr * double(g[i]) / (std::fabs(double(g[i])) + 1e-8);
    EXPECT_NEAR(w[i], expect, 1e-7) << i;
  }
}

TEST(Adam, RepeatedGradientMovesMonotonically) {
  std::vector<float> w{1.0f, 1.0f};
  const std::vector<float> g{0.5f, -0.5f};
  AdamState s;
  std::vector<float> prev = w;
  for (int i = 0; i < 3; ++i) {
    adam_step(w, g, s, 0.01);
    EXPECT_LT(w[0], prev[0]);
    EXPECT_GT(w[1], prev[1]);
    prev = w;
  }
  std::vector<float> bad(3);
  EXPECT_THROW(adam_step(w, bad, s, 0.01), ShapeError);
}

TEST(Plateau, DecreasingLossNeverHalves) {
  PlateauSchedule s;
  for (int e = 0; e < 30; ++e) EXPECT_FALSE(s.update(1.0 - 0.01 * e));
  EXPECT_EQ(s.lr, 0.01);
}

TEST(Plateau, ConstantLossHalvesEveryPatienceWindow) {
  PlateauSchedule s;
  // Epoch 0 sets the baseline; epochs 1..5 fail to improve.
  for (int e = 0; e <= 4; ++e) s.update(0.7);
  EXPECT_EQ(s.lr, 0.01);
  EXPECT_TRUE(s.update(0.7));
  EXPECT_DOUBLE_EQ(s.lr, 0.005);
  for (int e = 6; e <= 9; ++e) EXPECT_FALSE(s.update(0.7));
  EXPECT_TRUE(s.update(0.7));
  EXPECT_DOUBLE_EQ(s.lr, 0.0025);
}

TEST(Plateau, ImprovementBelowThresholdDoesNotCount) {
  PlateauSchedule s;
  s.update(1.0);
  for (int e = 1; e <= 4; ++e) s.update(1.0 - 1e-7 * e);
  EXPECT_TRUE(s.update(1.0 - 5e-7));
  s = PlateauSchedule{};
  s.update(1.0);
  for (int e = 1; e <= 4; ++e) s.update(1.0);
  s.update(0.5);  // real improvement resets the counter
  for (int e = 0; e < 4; ++e) EXPECT_FALSE(s.update(0.5));
  EXPECT_EQ(s.lr, 0.01);
}

TEST(Kfold, TenPerClassGivesTwoPerFold) {
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 10; ++i) labels.push_back(c);
  const auto folds = kfold_split(labels, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::size_t> seen;
  for (const Fold& f : folds) {
    int per[3] = {0, 0, 0};
    for (std::size_t i : f.val) {
      ++per[labels[i]];
      EXPECT_TRUE(seen.insert(i).second) << "index " << i << " in two folds";
    }
    for (int c = 0; c < 3; ++c) EXPECT_EQ(per[c], 2);
    EXPECT_EQ(f.train.size() + f.val.size(), labels.size());
    std::set<std::size_t> tr(f.train.begin(), f.train.end());
    for (std::size_t i : f.val) EXPECT_FALSE(tr.count(i));
  }
  EXPECT_EQ(seen.size(), labels.size());
}

TEST(Kfold, StratificationBoundAndDeterminism) {
  std::vector<int> labels;
  Rng rng(4);
  for (int i = 0; i < 223; ++i) labels.push_back(static_cast<int>(rng.below(3)));
  const auto a = kfold_split(labels, 5, 11);
  const auto b = kfold_split(labels, 5, 11);
  const auto c = kfold_split(labels, 5, 12);
  for (std::size_t f = 0; f < 5; ++f) {
    EXPECT_EQ(a[f].val, b[f].val);
    EXPECT_EQ(a[f].train, b[f].train);
  }
  bool differs = false;
  for (std::size_t f = 0; f < 5; ++f) differs = differs || a[f].val != c[f].val;
  EXPECT_TRUE(differs);
  for (int cls = 0; cls < 3; ++cls) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const Fold& f : a) {
      std::size_t n = 0;
      for (std::size_t i : f.val) n += labels[i] == cls;
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    EXPECT_LE(hi - lo, 1u);
  }
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const Fold& f : a) {
    lo = std::min(lo, f.val.size());
    hi = std::max(hi, f.val.size());
  }
  EXPECT_LE(hi - lo, 1u);
}

TEST(Kfold, TooFewSamplesPerClass) {
  const std::vector<int> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 2};
  EXPECT_THROW(kfold_split(labels, 5, 1), ValueError);
  EXPECT_THROW(kfold_split(labels, 1, 1), ValueError);
}

TEST(Metrics, PerfectAndConstantClassifiers) {
  const std::vector<int> truth{0, 0, 0, 1, 1, 1, 2, 2, 2};
  const Metrics p = tally(truth, truth, 3);
  EXPECT_EQ(p.accuracy, 1.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.confusion[i][j], i == j ? 3u : 0u);
  EXPECT_EQ(p.precision, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(p.recall, (std::vector<double>{1, 1, 1}));

  const Metrics c = tally(truth, std::vector<int>(9, 0), 3);
  EXPECT_DOUBLE_EQ(c.accuracy, 1.0 / 3.0);
  EXPECT_EQ(c.recall, (std::vector<double>{1, 0, 0}));
  EXPECT_DOUBLE_EQ(c.precision[0], 1.0 / 3.0);
  EXPECT_THROW(tally(truth, {0}, 3), ShapeError);
}

TEST(Metrics, EvaluateAgreesWithIndependentTally) {
  const synth::Dataset d = synth::gen_site({5, 6, 7}, synth::site_a_profile(), 21);
  const PreparedSet set = prepare(d, Paradigm::st);
  const nn::Model m = nn::model_build(2, 3, 5);
  const Metrics got = evaluate(m, set);

  std::size_t conf[3][3] = {};
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto logits = as_double(nn::model_forward(m, set.inputs[i]).logits);
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    ++conf[set.labels[i]][pred];
    correct += pred == set.labels[i];
    loss += oracle::cross_entropy(logits, set.labels[i]);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t row = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(got.confusion[i][j], conf[i][j]);
      row += got.confusion[i][j];
    }
    EXPECT_EQ(row, d.class_counts()[i]);
  }
  EXPECT_EQ(got.accuracy, double(correct) / double(set.size()));
  EXPECT_NEAR(got.loss, loss / double(set.size()), 1e-5);
}

TEST(Metrics, ConstantModelThroughEvaluate) {
  const synth::Dataset d = synth::gen_site({4, 4, 4}, synth::site_a_profile(), 22);
  nn::Model m = nn::model_build(1, 3, 5);
  auto& dense = m.params.back();
  dense[0].fill(0.0f);
  dense[1] = Tensor(Shape{3}, std::vector<float>{1.0f, 0.0f, 0.0f});
  const Metrics r = evaluate(m, d, Paradigm::st);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0 / 3.0);
  EXPECT_EQ(r.recall, (std::vector<double>{1, 0, 0}));
  EXPECT_THROW(evaluate(m, prepare(d, Paradigm::ss)), ShapeError);
  EXPECT_THROW(evaluate(m, PreparedSet{}), ValueError);
}

TEST(Prepare, InputsAndTargetsPerParadigm) {
  const synth::Dataset d = synth::gen_site({1, 1, 1}, synth::site_b_profile(), 23);
  const PreparedSet st = prepare(d, Paradigm::st);
  const PreparedSet ss = prepare(d, Paradigm::ss);
  const PreparedSet cd = prepare(d, Paradigm::cd, spectral::TargetMode::dft2ch);
  EXPECT_EQ(st.input_shape(), (Shape{1, 256, 11}));
  EXPECT_EQ(ss.input_shape(), (Shape{1, 128, 11}));
  EXPECT_TRUE(st.targets.empty());
  ASSERT_EQ(cd.targets.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(cd.inputs[i], st.inputs[i]);
    EXPECT_EQ(cd.targets[i], spectral::spectral_target(st.inputs[i], spectral::TargetMode::dft2ch).tensor);
    EXPECT_EQ(ss.inputs[i], synth::standardize(spectral::ss_transform(st.inputs[i])));
  }
  for (auto p : {Paradigm::st, Paradigm::ss, Paradigm::cd}) EXPECT_EQ(parse_paradigm(to_string(p)), p);
  EXPECT_THROW(parse_paradigm("xx"), ValueError);
}

TEST(Train, CdAlphaZeroMatchesStBitwise) {
  const synth::Dataset d = synth::gen_site({8, 8, 8}, synth::site_a_profile(), 24);
  const auto folds = kfold_split(d, 4, 1);
  TrainConfig st;
  st.paradigm = Paradigm::st;
  st.depth = 2;
  st.epochs = 3;
  TrainConfig cd = st;
  cd.paradigm = Paradigm::cd;
  cd.alpha = 0.0;
  const auto a = train::train(st, prepare(d, folds[0].train, Paradigm::st), prepare(d, folds[0].val, Paradigm::st));
  const auto b = train::train(cd, prepare(d, folds[0].train, Paradigm::cd), prepare(d, folds[0].val, Paradigm::cd));
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_acc, b.history[e].val_acc);
  }
  EXPECT_EQ(io::encode_model(a.model), io::encode_model(b.model));
}

TEST(Train, DeterministicAndFiniteHistory) {
  const synth::Dataset d = synth::gen_site({6, 6, 6}, synth::site_a_profile(), 25);
  const auto folds = kfold_split(d, 3, 2);
  TrainConfig c;
  c.depth = 1;
  c.epochs = 2;
  c.alpha = 0.5;
  const PreparedSet tr = prepare(d, folds[0].train, Paradigm::cd), va = prepare(d, folds[0].val, Paradigm::cd);
  int calls = 0;
  const auto a = train::train(c, tr, va, [&](const EpochRecord&) { ++calls; });
  const auto b = train::train(c, tr, va);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.regressor, b.regressor);
  for (const EpochRecord& r : a.history) {
    EXPECT_TRUE(std::isfinite(r.train_loss) && std::isfinite(r.spectral) && std::isfinite(r.ce));
    EXPECT_NEAR(r.train_loss, 0.5 * r.spectral + 0.5 * r.ce, 1e-5);
  }
  EXPECT_NEAR(a.history[0].ce, std::log(3.0), 0.3);
  EXPECT_EQ(a.regressor.weight.shape(), (Shape{8, 2}));
}

TEST(Train, PureToneCorpusIsLearned) {
  const PreparedSet tr = tone_set(10, 1), va = tone_set(4, 2);
  TrainConfig c;
  c.paradigm = Paradigm::st;
  c.depth = 1;
  c.epochs = 20;
  const auto r = train::train(c, tr, va);
  EXPECT_EQ(r.best_val.accuracy, 1.0);
  EXPECT_LT(r.best_epoch, 20);
}

TEST(Train, Errors) {
  const synth::Dataset d = synth::gen_site({3, 3, 3}, synth::site_a_profile(), 26);
  const PreparedSet st = prepare(d, Paradigm::st), cd = prepare(d, Paradigm::cd);
  TrainConfig c;
  c.epochs = 1;
  EXPECT_THROW(train::train(c, PreparedSet{}, cd), ValueError);
  EXPECT_THROW(train::train(c, st, st), ValueError);  // cd with alpha 0.5 needs targets
  EXPECT_THROW(train::train(c, cd, st), ValueError);
  c.batch = 0;
  EXPECT_THROW(train::train(c, cd, cd), ConfigError);
  c = TrainConfig{};
  c.patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.depth = 6;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Checkpoint, RoundTripAndErrors) {
  for (int depth = 1; depth <= 5; ++depth) {
    const nn::Model m = nn::model_build(depth, 3, 100 + depth);
    const auto bytes = io::encode_model(m);
    EXPECT_EQ(io::decode_model(bytes), m);
    EXPECT_EQ(io::encode_model(io::decode_model(bytes)), bytes);
  }
  const nn::Model m = nn::model_build(3, 3, 1);
  TempDir t("ckpt");
  io::save_model(m, t.file("m.dvsm"));
  EXPECT_EQ(io::load_model(t.file("m.dvsm")), m);

  auto bytes = io::encode_model(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(io::decode_model(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(io::decode_model(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  EXPECT_THROW(io::decode_model(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(io::decode_model(bad), FormatError);
  EXPECT_THROW(io::load_model(t.file("missing.dvsm")), IoError);
}
