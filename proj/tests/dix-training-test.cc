// tests/dix-training-test.cc

// Copyright 2026  The ivx Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "ivx/dix-training.h"
#include "oracles.h"
#include "test-util.h"

namespace ivx {

using namespace testing;

namespace {

struct Instance {
  std::vector<SuffStats> stats;
  std::vector<const SuffStats *> batch;
  std::vector<int> labels;
  std::vector<Mat> orig;
};

// C=4, F=3, D=2, K=3, six utterances.
Instance TinyInstance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in;
  for (int u = 0; u < 6; ++u) {
    in.stats.push_back(RandomStats(4, 3, &rng, 5.0));
    in.labels.push_back(u % 3);
  }
  for (const SuffStats &s : in.stats) in.batch.push_back(&s);
  in.orig = RandomBlocks(4, 3, 2, &rng, 0.5);
  return in;
}

DixModel RandomModel(bool factorized, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DixModel m;
  m.factorized = factorized;
  if (factorized)
    m.dictionary = FactorizedExtractor(RandomBlocks(2, 3, 2, &rng, 0.5),
                                       RandomMatrix(4, 2, &rng));
  else
    m.full = FullExtractor(RandomBlocks(4, 3, 2, &rng, 0.5));
  m.classifier = Classifier::Zero(3, 2);
  m.classifier.W = RandomMatrix(3, 2, &rng);
  m.classifier.b = RandomVector(3, &rng);
  return m;
}

// Speakers with i-vector-like statistics drawn around per-speaker centers
// through an identity-like extractor.
TrainSet ToySet(int speakers, int per_speaker, double spread,
                std::uint64_t seed, int C = 2, int F = 2) {
  std::mt19937_64 rng(seed);
  std::vector<SuffStats> stats;
  for (int k = 0; k < speakers; ++k) {
    Mat center = RandomMatrix(C, F, &rng, spread);
    for (int u = 0; u < per_speaker; ++u) {
      SuffStats s = SuffStats::Zero(C, F);
      s.n.setConstant(20.0);
      s.f_norm = 20.0 * center + RandomMatrix(C, F, &rng, std::sqrt(20.0));
      s.f = s.f_norm;
      s.total_frames = s.n.sum();
      s.speaker_id = "spk" + std::to_string(k);
      s.utterance_id = s.speaker_id + "-" + std::to_string(u);
      stats.push_back(s);
    }
  }
  return MakeTrainSet(std::move(stats), 1, speakers, seed + 1);
}

FullExtractor IdentityExtractor(int C, int F) {
  std::vector<Mat> blocks(C, Mat::Zero(F, C * F));
  for (int c = 0; c < C; ++c)
    blocks[c].middleCols(c * F, F) = Mat::Identity(F, F);
  return FullExtractor(blocks);
}

double NaiveCrossEntropy(const Mat &W, const Vec &b, const Mat &phis,
                         const std::vector<int> &labels) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < phis.cols(); ++n) {
    std::vector<double> logits;
    for (Eigen::Index k = 0; k < W.rows(); ++k) {
      double z = b(k);
      for (Eigen::Index d = 0; d < W.cols(); ++d) z += W(k, d) * phis(d, n);
      logits.push_back(z);
    }
    double norm = 0.0;
    for (double z : logits) norm += std::exp(z);
    total += -std::log(std::exp(logits[labels[n]]) / norm);
  }
  return total;
}

}  // namespace

TEST_CASE("uniform classifier costs log K per sample") {
  std::mt19937_64 rng(1);
  Classifier clf = Classifier::Zero(7, 3);
  Mat phis = RandomMatrix(3, 10, &rng);
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 0, 1, 2};
  CHECK(MeanCrossEntropy(clf, phis, labels) == doctest::Approx(std::log(7.0)).epsilon(1e-15));
}

TEST_CASE("confident correct classifier costs nearly nothing") {
  Classifier clf = Classifier::Zero(2, 1);
  clf.W(0, 0) = 50.0;
  clf.W(1, 0) = -50.0;
  Mat phi = Mat::Constant(1, 1, 1.0);
  std::vector<int> label{0};
  CHECK(CrossEntropy(clf, phi, label) < 1e-40);
  clf.W *= 1e3;
  CHECK(std::isfinite(CrossEntropy(clf, phi, std::vector<int>{1})));
}

TEST_CASE("cross-entropy matches a per-sample loop") {
  std::mt19937_64 rng(2);
  Classifier clf = Classifier::Zero(3, 2);
  clf.W = RandomMatrix(3, 2, &rng);
  clf.b = RandomVector(3, &rng);
  Mat phis = RandomMatrix(2, 5, &rng);
  std::vector<int> labels{2, 0, 1, 1, 0};
  CHECK(std::abs(CrossEntropy(clf, phis, labels) -
                 NaiveCrossEntropy(clf.W, clf.b, phis, labels)) < 1e-12);
  CHECK_THROWS_AS(CrossEntropy(clf, phis, std::vector<int>{0, 1, 2, 3, 0}),
                  Error);
  phis(0, 0) = std::nan("");
  CHECK_THROWS_AS(CrossEntropy(clf, phis, labels), Error);
}

TEST_CASE("regularizer") {
  std::mt19937_64 rng(3);
  std::vector<Mat> a = RandomBlocks(3, 2, 2, &rng);
  CHECK(Regularizer(a, a) == 0.0);
  std::vector<Mat> one{Mat::Zero(2, 2)}, ones{Mat::Ones(2, 2)};
  CHECK(Regularizer(one, ones) == 4.0);

  std::vector<Mat> b = RandomBlocks(3, 2, 2, &rng);
  double loop = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        loop += (a[c](i, j) - b[c](i, j)) * (a[c](i, j) - b[c](i, j));
  CHECK(std::abs(Regularizer(a, b) - loop) < 1e-12);
  CHECK_THROWS_AS(Regularizer(a, RandomBlocks(3, 2, 3, &rng)), Error);
  CHECK_THROWS_AS(Regularizer(a, RandomBlocks(2, 2, 2, &rng)), Error);
}

TEST_CASE("gradients match finite differences") {
  Instance in = TinyInstance(4);
  BackwardOptions all;
  for (bool factorized : {false, true}) {
    for (double lambda : {0.0, 0.3}) {
      DixModel m = RandomModel(factorized, 5);
      GradientCheck r =
          CheckGradients(m, in.batch, in.labels, lambda, in.orig, all);
      INFO("factorized=" << factorized << " lambda=" << lambda
                         << " worst=" << r.worst);
      CHECK(r.checked > 0);
      CHECK(r.failed == 0);
    }
  }
}

TEST_CASE("classifier gradients without bias") {
  Instance in = TinyInstance(6);
  DixModel m = RandomModel(true, 7);
  m.classifier.use_bias = false;
  GradientCheck r = CheckGradients(m, in.batch, in.labels, 0.0, in.orig, {});
  CHECK(r.failed == 0);
}

TEST_CASE("uniform classifier gives no extractor gradient") {
  Instance in = TinyInstance(8);
  for (bool factorized : {false, true}) {
    DixModel m = RandomModel(factorized, 9);
    m.classifier = Classifier::Zero(3, 2);
    DixGradients g;
    ForwardBackward(m, in.batch, in.labels, 0.0, in.orig, {}, &g);
    double norm = 0.0;
    for (const Mat &x : g.blocks) norm += x.squaredNorm();
    for (const Mat &x : g.bases) norm += x.squaredNorm();
    if (factorized) norm += g.coeffs.squaredNorm();
    CHECK(std::sqrt(norm) < 1e-8);

    // Numerically as well: perturbing the extractor leaves the loss at log K.
    BackwardOptions ext;
    ext.classifier = false;
    GradientCheck r = CheckGradients(m, in.batch, in.labels, 0.0, in.orig, ext);
    CHECK(r.worst < 1e-4);
  }
}

TEST_CASE("regularizer-only gradients match finite differences") {
  Instance in = TinyInstance(10);
  DixModel m = RandomModel(true, 11);
  m.classifier = Classifier::Zero(3, 2);
  BackwardOptions phase0;
  phase0.classifier = false;
  phase0.include_loss = false;
  GradientCheck r =
      CheckGradients(m, in.batch, in.labels, 1e5, in.orig, phase0, 1e-6);
  INFO("worst=" << r.worst);
  CHECK(r.failed == 0);
}

TEST_CASE("objective without regularizer equals the loss") {
  Instance in = TinyInstance(12);
  DixModel m = RandomModel(true, 13);
  ObjectiveValue v =
      ForwardBackward(m, in.batch, in.labels, 0.0, in.orig, {}, nullptr);
  CHECK(v.total == v.loss);
  CHECK(v.distance > 0.0);
  ObjectiveValue w = ForwardBackward(m, in.batch, in.labels, 0.0, {}, {}, nullptr);
  CHECK(w.total == v.total);
  CHECK_THROWS_AS(
      ForwardBackward(m, in.batch, in.labels, 1.0, {}, {}, nullptr), Error);
}

TEST_CASE("phase 1 leaves the extractor untouched") {
  TrainSet set = ToySet(4, 6, 1.0, 14);
  for (Scheme scheme : {Scheme::kScheme1, Scheme::kFull}) {
    FullExtractor orig = IdentityExtractor(2, 2);
    DixTrainConfig config;
    config.num_bases = 2;
    DixModel model = InitModel(scheme, orig, set.NumClasses(), config);
    DixModel before = model;
    TrainerState state;
    state.learning_rate = 0.1;
    for (int e = 0; e < 3; ++e)
      RunEpoch(set, Phase::kPhase1, &state, config, e, &model);
    CHECK(model.classifier.W != before.classifier.W);
    std::vector<Mat> a = model.Blocks(), b = before.Blocks();
    for (std::size_t c = 0; c < a.size(); ++c) CHECK(a[c] == b[c]);
    if (model.factorized) {
      CHECK(model.dictionary.Coeffs() == before.dictionary.Coeffs());
      for (int q = 0; q < 2; ++q)
        CHECK(model.dictionary.Bases()[q] == before.dictionary.Bases()[q]);
    }
  }
}

TEST_CASE("phase 0 leaves the classifier untouched and pulls toward the reference") {
  TrainSet set = ToySet(4, 30, 1.0, 15);
  FullExtractor orig = IdentityExtractor(2, 2);
  DixTrainConfig config;
  config.num_bases = 2;
  config.batch_size = 4;
  DixModel model = InitModel(Scheme::kScheme2, orig, set.NumClasses(), config);
  model.classifier.W.setConstant(0.25);
  model.classifier.b.setConstant(-1.0);
  const Classifier before = model.classifier;
  TrainerState state;
  state.phase = Phase::kPhase0;
  state.learning_rate = config.lr_phase0;
  state.lambda = config.lambda0;
  state.orig = orig.Blocks();
  double distance = Regularizer(model.Blocks(), state.orig);
  for (int e = 0; e < 5; ++e) {
    RunEpoch(set, Phase::kPhase0, &state, config, 99, &model);
    double next = Regularizer(model.Blocks(), state.orig);
    CHECK(next < distance);
    distance = next;
  }
  CHECK(model.classifier.W == before.W);
  CHECK(model.classifier.b == before.b);
}

TEST_CASE("one phase-0 epoch reaches the reference") {
  std::mt19937_64 rng(16);
  const int C = 4, F = 3, D = 2;
  TrainSet set = ToySet(6, 40, 1.0, 17, C, 2);
  // Reference with exactly rank-Q structure so the minimum distance is 0.
  std::vector<Mat> bases = RandomBlocks(2, F, D, &rng, 0.5);
  Mat coeffs = RandomMatrix(C, 2, &rng);
  FullExtractor orig = FactorizedExtractor(bases, coeffs).ToFull();
  for (SuffStats &s : set.stats) {
    s.f_norm = Mat(C, F);
    s.f_norm.leftCols(2) = s.f.leftCols(2);
    s.f_norm.col(2).setZero();
    s.f = s.f_norm;
  }
  DixTrainConfig config;
  config.num_bases = 2;
  config.batch_size = 1;
  config.seed = 3;
  DixModel model = InitModel(Scheme::kScheme2, orig, set.NumClasses(), config);
  TrainerState state;
  state.learning_rate = config.lr_phase0;
  state.lambda = config.lambda0;
  state.orig = orig.Blocks();
  double start = Regularizer(model.Blocks(), state.orig);
  RunEpoch(set, Phase::kPhase0, &state, config, 5, &model);
  double end = Regularizer(model.Blocks(), state.orig);
  INFO("start=" << start << " end=" << end);
  CHECK(end < 0.1 * start);
}

TEST_CASE("phase 1 separates a separable toy set") {
  TrainSet set = ToySet(5, 20, 3.0, 18);
  FullExtractor orig = IdentityExtractor(2, 2);
  DixTrainConfig config;
  config.batch_size = 8;
  DixModel model = InitModel(Scheme::kFull, orig, set.NumClasses(), config);
  TrainerState state;
  state.learning_rate = config.lr_phase1;
  double cv = CvLoss(model, set);
  CHECK(cv == doctest::Approx(std::log(5.0)));
  bool monotone = true;
  int epoch = 0;
  for (; epoch < 50 && cv >= 0.1 * std::log(5.0); ++epoch) {
    RunEpoch(set, Phase::kPhase1, &state, config, epoch, &model);
    double next = CvLoss(model, set);
    monotone = monotone && next < cv;
    cv = next;
  }
  INFO("epochs=" << epoch << " cv=" << cv);
  CHECK(monotone);
  CHECK(cv < 0.1 * std::log(5.0));
}

TEST_CASE("train set construction") {
  std::vector<SuffStats> stats;
  auto add = [&](const std::string &spk, int count) {
    for (int i = 0; i < count; ++i) {
      SuffStats s = SuffStats::Zero(1, 1);
      s.speaker_id = spk;
      s.utterance_id = spk + std::to_string(i);
      stats.push_back(s);
    }
  };
  add("b", 5);
  add("a", 6);
  add("c", 2);
  add("d", 5);
  TrainSet set = MakeTrainSet(stats, 5, 2, 1);
  CHECK(set.speakers == std::vector<std::string>{"a", "b", "d"});
  CHECK(set.stats.size() == 16);
  CHECK(set.cv.size() == 2);
  CHECK(set.train.size() == 14);
  std::set<int> held;
  for (std::size_t i : set.cv) held.insert(set.labels[i]);
  CHECK(held.size() == 2);
  for (std::size_t i = 0; i < set.stats.size(); ++i)
    CHECK(set.speakers[set.labels[i]] == set.stats[i].speaker_id);
  TrainSet again = MakeTrainSet(stats, 5, 2, 1);
  CHECK(again.cv == set.cv);
  CHECK(MakeTrainSet(stats, 5, 10, 1).cv.size() == 3);
}

TEST_CASE("training errors") {
  FullExtractor orig = IdentityExtractor(2, 2);
  DixTrainConfig config;
  config.num_bases = 2;
  TrainSet one = ToySet(1, 5, 1.0, 19);
  CHECK_THROWS_WITH_AS(TrainDiscriminative(Scheme::kScheme1, orig, one, config),
                       "need at least 2 speakers (K >= 2)", Error);
  TrainSet no_cv = ToySet(3, 5, 1.0, 20);
  no_cv.train.insert(no_cv.train.end(), no_cv.cv.begin(), no_cv.cv.end());
  no_cv.cv.clear();
  CHECK_THROWS_WITH_AS(
      TrainDiscriminative(Scheme::kScheme1, orig, no_cv, config),
      "cross-validation set is empty", Error);
  config.num_bases = 5;
  CHECK_THROWS_WITH_AS(
      TrainDiscriminative(Scheme::kScheme2, orig, ToySet(3, 5, 1.0, 21), config),
      "Q must not exceed C", Error);
}

TEST_CASE("training is deterministic and records history") {
  TrainSet set = ToySet(4, 8, 1.0, 22);
  FullExtractor orig = IdentityExtractor(2, 2);
  DixTrainConfig config;
  config.num_bases = 2;
  config.max_epochs = 4;
  config.batch_size = 5;
  config.lr_phase0 = 1e-6;
  config.seed = 7;
  for (Scheme scheme : {Scheme::kScheme1, Scheme::kScheme2, Scheme::kFull}) {
    DixTrainResult a = TrainDiscriminative(scheme, orig, set, config);
    DixTrainResult b = TrainDiscriminative(scheme, orig, set, config);
    CHECK(HistoryCsv(a.history) == HistoryCsv(b.history));
    std::vector<Mat> ba = a.model.Blocks(), bb = b.model.Blocks();
    for (std::size_t c = 0; c < ba.size(); ++c) CHECK(ba[c] == bb[c]);
    CHECK(a.model.classifier.W == b.model.classifier.W);
    REQUIRE_FALSE(a.history.empty());
    int phase0 = 0;
    for (const HistoryRow &r : a.history) phase0 += r.phase == Phase::kPhase0;
    CHECK(phase0 == (scheme == Scheme::kScheme2 ? 1 : 0));
    CHECK(a.history.back().phase == Phase::kPhase2);
    CHECK(a.model.factorized == (scheme != Scheme::kFull));
  }
}

TEST_CASE("configuration parsing") {
  DixConfigFile c = ParseDixConfig(
      "# comment\n\nscheme = 1\nQ=12\nD=30\nlr_phase1=0.2\nbatch_size=16\n"
      "seed=5\nuse_bias=0\n");
  CHECK(c.scheme == Scheme::kScheme1);
  CHECK(c.train.num_bases == 12);
  CHECK(c.ivector_dim == 30);
  CHECK(c.train.lr_phase1 == 0.2);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.seed == 5);
  CHECK_FALSE(c.train.use_bias);
  CHECK(c.train.lr_phase0 == 1e-7);
  CHECK(c.train.lambda0 == 1e5);
  CHECK_THROWS_WITH_AS(ParseDixConfig("bogus=1\n"),
                       "config line 1: unknown key \"bogus\"", Error);
  CHECK_THROWS_AS(ParseDixConfig("Q=abc\n"), Error);
  CHECK_THROWS_AS(ParseDixConfig("Q=0\n"), Error);
  CHECK_THROWS_AS(ParseDixConfig("scheme=3\n"), Error);
  CHECK_THROWS_AS(ParseDixConfig("just text\n"), Error);
}

TEST_CASE("history csv") {
  std::vector<HistoryRow> rows{{0, Phase::kPhase0, 1.5, 2.5, 3.0, 1e-7}};
  CHECK(HistoryCsv(rows) ==
        "epoch,phase,train_loss,cv_loss,reg_distance,lr\n"
        "0,phase0,1.5,2.5,3,1e-07\n");
}

}  // namespace ivx
