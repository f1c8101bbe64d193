// tests/extractor-test.cc

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

#include "ivx/extractor.h"
#include "oracles.h"
#include "test-util.h"

namespace ivx {

using namespace testing;

namespace {

struct WarningCapture {
  std::vector<std::string> messages;
  WarningHandler previous;
  WarningCapture() {
    previous = SetWarningHandler(
        [this](const std::string &m) { messages.push_back(m); });
  }
  ~WarningCapture() { SetWarningHandler(previous); }
};

double Residual(const FactorizedExtractor &fx, const FullExtractor &full) {
  return SquaredDistance(fx.MaterializeAll(), full.Blocks());
}

double TotalEnergy(const FullExtractor &full) {
  double e = 0.0;
  for (const Mat &b : full.Blocks()) e += b.squaredNorm();
  return e;
}

}  // namespace

TEST_CASE("zero subspace gives the prior") {
  std::mt19937_64 rng(1);
  FullExtractor zero(std::vector<Mat>(3, Mat::Zero(2, 4)));
  IVector iv = Extract(zero, RandomStats(3, 2, &rng), true);
  CHECK(iv.phi.norm() == 0.0);
  CHECK((iv.precision - Mat::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("empty statistics give the prior") {
  std::mt19937_64 rng(2);
  FullExtractor ex(RandomBlocks(3, 2, 4, &rng));
  IVector iv = Extract(ex, SuffStats::Zero(3, 2), true);
  CHECK(iv.phi.norm() == 0.0);
  CHECK((iv.precision - Mat::Identity(4, 4)).norm() == 0.0);
}

TEST_CASE("closed form matches the posterior mode") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int C = 8, F = 4, D = 3;
    GmmUbm ubm = trial % 2 ? RandomFullUbm(C, F, &rng)
                           : RandomDiagonalUbm(C, F, &rng);
    std::vector<Mat> blocks = RandomBlocks(C, F, D, &rng, 0.5);
    FeatureMatrix fm{"u", "s", RandomMatrix(30, F, &rng, 2.5)};
    SuffStats stats = AccumulateStats(ubm, fm);
    IVector iv = Extract(FullExtractor(blocks), stats);
    Vec oracle = PosteriorModeOracle(ubm, blocks, fm.frames,
                                     FramePosteriors(ubm, fm));
    for (int d = 0; d < D; ++d) CHECK(std::abs(iv.phi(d) - oracle(d)) < 1e-6);
  }
}

TEST_CASE("precision is symmetric and dominates the identity") {
  std::mt19937_64 rng(4);
  FullExtractor ex(RandomBlocks(5, 3, 4, &rng));
  for (int i = 0; i < 10; ++i) {
    IVector iv = Extract(ex, RandomStats(5, 3, &rng), true);
    CHECK((iv.precision - iv.precision.transpose()).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Mat> es(iv.precision);
    CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-8);
  }
}

TEST_CASE("scaling the statistics") {
  std::mt19937_64 rng(5);
  std::vector<Mat> blocks = RandomBlocks(4, 3, 2, &rng);
  FullExtractor ex(blocks);
  SuffStats s = RandomStats(4, 3, &rng);
  for (double alpha : {0.5, 2.0, 7.0}) {
    SuffStats t = s;
    t.n *= alpha;
    t.f_norm *= alpha;
    IVector iv = Extract(ex, t, true);
    Mat L = Mat::Identity(2, 2);
    Vec b = Vec::Zero(2);
    for (int c = 0; c < 4; ++c) {
      L += alpha * s.n(c) * blocks[c].transpose() * blocks[c];
      b += alpha * blocks[c].transpose() * s.f_norm.row(c).transpose();
    }
    CHECK((iv.precision - L).norm() < 1e-12 * L.norm());
    CHECK((iv.phi - L.llt().solve(b)).norm() < 1e-12);
  }
}

TEST_CASE("non-finite statistics are rejected") {
  std::mt19937_64 rng(6);
  FullExtractor ex(RandomBlocks(2, 2, 2, &rng));
  SuffStats s = RandomStats(2, 2, &rng);
  s.f_norm(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Extract(ex, s), Error);
}

TEST_CASE("gram of the identity block") {
  FullExtractor ex(std::vector<Mat>{Mat::Identity(3, 3)});
  std::vector<Mat> g = ComputeGrams(ex.Blocks());
  CHECK(g[0] == Mat::Identity(3, 3));
}

TEST_CASE("cached extraction equals uncached") {
  std::mt19937_64 rng(7);
  FullExtractor ex(RandomBlocks(6, 4, 3, &rng));
  CachedExtractor cached(ex);
  std::vector<SuffStats> stats;
  for (int i = 0; i < 20; ++i) stats.push_back(RandomStats(6, 4, &rng));
  std::vector<IVector> all = cached.ExtractAll(stats, 3);
  for (int i = 0; i < 20; ++i) {
    Vec a = Extract(ex, stats[i]).phi;
    CHECK((a - cached.Extract(stats[i]).phi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(all[i].phi == cached.Extract(stats[i]).phi);
  }
}

TEST_CASE("factorized extraction equals the materialized copy") {
  std::mt19937_64 rng(8);
  FactorizedExtractor fx(RandomBlocks(3, 4, 3, &rng), RandomMatrix(6, 3, &rng));
  FullExtractor full = fx.ToFull();
  for (int c = 0; c < 6; ++c) {
    Mat expected = Mat::Zero(4, 3);
    for (int q = 0; q < 3; ++q) expected += fx.Coeffs()(c, q) * fx.Bases()[q];
    CHECK((fx.Materialize(c) - expected).norm() < 1e-14);
  }
  CachedExtractor cached(fx);
  for (int i = 0; i < 10; ++i) {
    SuffStats s = RandomStats(6, 4, &rng);
    Vec a = Extract(fx, s).phi, b = Extract(full, s).phi;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((cached.Extract(s).phi - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("gram expansion identity") {
  std::mt19937_64 rng(9);
  FactorizedExtractor fx(RandomBlocks(4, 5, 3, &rng), RandomMatrix(7, 4, &rng));
  std::vector<Mat> direct = ComputeGrams(fx.MaterializeAll());
  std::vector<Mat> expanded = fx.GramsByExpansion();
  for (int c = 0; c < 7; ++c)
    CHECK((direct[c] - expanded[c]).norm() < 1e-10 * (1.0 + direct[c].norm()));
}

TEST_CASE("factorization with Q = C is exact") {
  std::mt19937_64 rng(10);
  FullExtractor full(RandomBlocks(6, 3, 4, &rng));
  FactorizedExtractor fx = Factorize(full, 6);
  CHECK(Residual(fx, full) / TotalEnergy(full) < 1e-8 * 1e-8);
}

TEST_CASE("factorization residual is non-increasing in Q") {
  std::mt19937_64 rng(11);
  FullExtractor full(RandomBlocks(10, 3, 2, &rng));
  double previous = std::numeric_limits<double>::infinity();
  for (int q = 1; q <= 10; ++q) {
    double r = Residual(Factorize(full, q), full);
    CHECK(r <= previous * (1.0 + 1e-12) + 1e-14);
    previous = r;
  }
  CHECK(previous < 1e-16 * TotalEnergy(full));
}

TEST_CASE("identical blocks need one basis") {
  std::mt19937_64 rng(12);
  Mat b = RandomMatrix(3, 2, &rng);
  FullExtractor full(std::vector<Mat>(5, b));
  FactorizedExtractor fx = Factorize(full, 1);
  CHECK(Residual(fx, full) < 1e-10);
  for (int c = 1; c < 5; ++c)
    CHECK(std::abs(fx.Coeffs()(c, 0) - fx.Coeffs()(0, 0)) < 1e-12);
}

TEST_CASE("bases are orthonormal, sign-fixed and ordered") {
  std::mt19937_64 rng(13);
  FullExtractor full(RandomBlocks(8, 3, 3, &rng));
  FactorizedExtractor fx = Factorize(full, 5);
  double previous_energy = std::numeric_limits<double>::infinity();
  for (int q = 0; q < 5; ++q) {
    const Mat &u = fx.Bases()[q];
    for (int r = 0; r < 5; ++r)
      CHECK(std::abs(u.cwiseProduct(fx.Bases()[r]).sum() - (q == r)) < 1e-12);
    Eigen::Index i;
    u.cwiseAbs().reshaped().maxCoeff(&i);
    CHECK(u.reshaped()(i) > 0.0);
    // With orthonormal bases the coefficients are inner products, and the
    // captured energy decreases with q.
    double energy = 0.0;
    for (int c = 0; c < 8; ++c) {
      CHECK(std::abs(fx.Coeffs()(c, q) - u.cwiseProduct(full.Block(c)).sum()) <
            1e-12);
      energy += fx.Coeffs()(c, q) * fx.Coeffs()(c, q);
    }
    CHECK(energy <= previous_energy * (1.0 + 1e-12));
    previous_energy = energy;
  }
  CHECK(SerializeExtractor(fx) == SerializeExtractor(Factorize(full, 5)));
}

TEST_CASE("Q larger than C is rejected") {
  std::mt19937_64 rng(14);
  FullExtractor full(RandomBlocks(3, 2, 2, &rng));
  CHECK_THROWS_WITH_AS(Factorize(full, 4), "Q must not exceed C", Error);
  CHECK_THROWS_AS(Factorize(full, 0), Error);
}

TEST_CASE("rank-deficient stack gets zero bases and a warning") {
  std::mt19937_64 rng(15);
  Mat a = RandomMatrix(2, 2, &rng), b = RandomMatrix(2, 2, &rng);
  std::vector<Mat> blocks{a, b, a + b, a - b};
  FullExtractor full(blocks);
  WarningCapture warnings;
  FactorizedExtractor fx = Factorize(full, 4);
  CHECK(warnings.messages.size() == 1);
  CHECK(fx.Bases()[2].norm() == 0.0);
  CHECK(fx.Bases()[3].norm() == 0.0);
  CHECK(Residual(fx, full) < 1e-20 * (1.0 + TotalEnergy(full)));
}

TEST_CASE("parameter counts") {
  FullExtractor full(std::vector<Mat>(2, Mat::Zero(3, 4)));
  CHECK(full.ParameterCount() == 24);
  FactorizedExtractor fx(std::vector<Mat>(2, Mat::Zero(3, 4)), Mat::Zero(2, 2));
  CHECK(fx.ParameterCount() == 28);

  const std::int64_t C = 2048, F = 60, D = 400, Q = 250;
  const std::int64_t factorized = Q * C + Q * F * D;
  CHECK(factorized == 6512000);
  double ratio = static_cast<double>(C * F * D) / factorized;
  CHECK(std::abs(ratio - 7.55) <= 0.1);
}

TEST_CASE("least-squares coefficients with non-orthogonal bases") {
  std::mt19937_64 rng(16);
  std::vector<Mat> bases = RandomBlocks(3, 2, 2, &rng);
  Mat coeffs = RandomMatrix(5, 3, &rng);
  FullExtractor full = FactorizedExtractor(bases, coeffs).ToFull();
  Mat fitted = FitCoefficients(bases, full);
  CHECK((fitted - coeffs).norm() < 1e-10);
}

TEST_CASE("extractor serialization round trip") {
  std::mt19937_64 rng(17);
  FullExtractor full(RandomBlocks(3, 2, 4, &rng));
  FactorizedExtractor fx(RandomBlocks(2, 2, 4, &rng), RandomMatrix(3, 2, &rng));
  ExtractorFile a = DeserializeExtractor(SerializeExtractor(full), "a");
  CHECK_FALSE(a.factorized);
  for (int c = 0; c < 3; ++c) CHECK(a.full.Block(c) == full.Block(c));
  ExtractorFile b = DeserializeExtractor(SerializeExtractor(fx), "b");
  CHECK(b.factorized);
  CHECK(b.dictionary.Coeffs() == fx.Coeffs());
  for (int q = 0; q < 2; ++q) CHECK(b.dictionary.Bases()[q] == fx.Bases()[q]);
  std::string bytes = SerializeExtractor(fx);
  CHECK(bytes.substr(0, 4) == "IVEX");
  CHECK_THROWS_AS(DeserializeExtractor(bytes.substr(0, 30), "c"), Error);
  CHECK_THROWS_AS(DeserializeExtractor(bytes + "x", "c"), Error);
}

}  // namespace ivx
