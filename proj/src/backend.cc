// ivx/backend.cc

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

#include "ivx/backend.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numeric>
#include <sstream>

#include "ivx/io.h"

namespace ivx {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::map<int, std::vector<Eigen::Index>> GroupByLabel(
    Eigen::Index n, std::span<const int> labels) {
  if (static_cast<std::size_t>(n) != labels.size())
    throw Error("one label per vector required");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  return groups;
}

Mat Symmetrize(const Mat &m) { return 0.5 * (m + m.transpose()); }

}  // namespace

Vec LengthNormalize(const Eigen::Ref<const Vec> &phi) {
  double norm = phi.norm();
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw Error("cannot length-normalize a zero or non-finite vector");
  return phi / norm;
}

Vec PreprocessChain::Project(const Eigen::Ref<const Vec> &phi) const {
  if (phi.size() != mean.size())
    throw Error("i-vector dimension does not match the preprocessing chain");
  return lda.transpose() * (phi - mean);
}

Vec PreprocessChain::Apply(const Eigen::Ref<const Vec> &phi) const {
  return LengthNormalize(Project(phi));
}

Mat PreprocessChain::ApplyAll(const Eigen::Ref<const Mat> &phis) const {
  Mat out(OutputDim(), phis.cols());
  for (Eigen::Index i = 0; i < phis.cols(); ++i) out.col(i) = Apply(phis.col(i));
  return out;
}

PreprocessChain PreprocessChain::MeanOnly(Vec mean) {
  PreprocessChain chain;
  chain.lda = Mat::Identity(mean.size(), mean.size());
  chain.mean = std::move(mean);
  return chain;
}

PreprocessChain FitPreprocess(const Eigen::Ref<const Mat> &ivectors,
                              std::span<const int> labels, int lda_dim) {
  const Eigen::Index D = ivectors.rows(), N = ivectors.cols();
  auto groups = GroupByLabel(N, labels);
  const int K = static_cast<int>(groups.size());
  if (K < 2) throw Error("FitPreprocess: need at least 2 classes");
  if (lda_dim < 1 || lda_dim > D || lda_dim > K - 1)
    throw Error("FitPreprocess: LDA dimension must be in [1, min(D, K-1)]");
  if (!ivectors.allFinite()) throw Error("FitPreprocess: non-finite input");

  PreprocessChain chain;
  chain.mean = ivectors.rowwise().mean();
  Mat centered = ivectors.colwise() - chain.mean;
  Mat within = Mat::Zero(D, D), between = Mat::Zero(D, D);
  for (const auto &[label, idx] : groups) {
    Vec m = Vec::Zero(D);
    for (Eigen::Index i : idx) m += centered.col(i);
    m /= static_cast<double>(idx.size());
    for (Eigen::Index i : idx) {
      Vec d = centered.col(i) - m;
      within.noalias() += d * d.transpose();
    }
    between.noalias() += static_cast<double>(idx.size()) * m * m.transpose();
  }
  within = Symmetrize(within / static_cast<double>(N));
  between = Symmetrize(between / static_cast<double>(N));

  Eigen::SelfAdjointEigenSolver<Mat> wes(within, Eigen::EigenvaluesOnly);
  const double avg = within.trace() / static_cast<double>(D);
  if (!(wes.eigenvalues().minCoeff() > 1e-10 * std::max(avg, 1e-300))) {
    Warn("FitPreprocess: singular within-class scatter; adding a ridge");
    within.diagonal().array() += 1e-6 * std::max(avg, 1e-12);
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(between, within);
  if (ges.info() != Eigen::Success)
    throw Error("FitPreprocess: generalized eigenproblem failed");
  const Vec &ev = ges.eigenvalues();
  std::vector<Eigen::Index> order(ev.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ev(a) > ev(b); });
  chain.lda.resize(D, lda_dim);
  for (int j = 0; j < lda_dim; ++j) {
    Vec v = ges.eigenvectors().col(order[j]);
    FixSign(v);
    chain.lda.col(j) = v;
  }
  return chain;
}

PldaModel::PldaModel(Vec mean, Mat between, Mat within)
    : mean_(std::move(mean)),
      between_(std::move(between)),
      within_(std::move(within)) {
  const Eigen::Index d = mean_.size();
  if (d < 1 || between_.rows() != d || between_.cols() != d ||
      within_.rows() != d || within_.cols() != d)
    throw Error("PldaModel: inconsistent dimensions");
  if (!mean_.allFinite() || !between_.allFinite() || !within_.allFinite())
    throw Error("PldaModel: non-finite parameters");
  ComputeDerived();
}

void PldaModel::ComputeDerived() {
  const Eigen::Index d = Dim();
  Mat total = between_ + within_;
  Mat joint(2 * d, 2 * d);
  joint << total, between_, between_, total;
  Eigen::LLT<Mat> jl(joint);
  if (jl.info() != Eigen::Success)
    throw Error("PldaModel: covariances do not define a valid model");
  Mat inv = jl.solve(Mat::Identity(2 * d, 2 * d));
  Eigen::LLT<Mat> tl(total);
  Mat total_inv = tl.solve(Mat::Identity(d, d));
  quad_ = Symmetrize(total_inv - Symmetrize(inv.topLeftCorner(d, d)));
  Mat a12 = inv.topRightCorner(d, d);
  cross_ = -Symmetrize(a12);
  double logdet_joint = 2.0 * Mat(jl.matrixL()).diagonal().array().log().sum();
  double logdet_total = 2.0 * Mat(tl.matrixL()).diagonal().array().log().sum();
  offset_ = logdet_total - 0.5 * logdet_joint;
}

double PldaModel::Score(const Eigen::Ref<const Vec> &enroll,
                        const Eigen::Ref<const Vec> &test) const {
  if (enroll.size() != Dim() || test.size() != Dim())
    throw Error("PldaModel::Score: dimension mismatch");
  if (!enroll.allFinite() || !test.allFinite())
    throw Error("PldaModel::Score: non-finite input");
  Vec a = enroll - mean_, b = test - mean_;
  return 0.5 * a.dot(quad_ * a) + 0.5 * b.dot(quad_ * b) +
         a.dot(cross_ * b) + offset_;
}

double PldaLogLikelihood(const PldaModel &model, const Eigen::Ref<const Mat> &x,
                         std::span<const int> labels) {
  const Eigen::Index d = x.rows();
  auto groups = GroupByLabel(x.cols(), labels);
  Eigen::LLT<Mat> wl(model.Within());
  if (wl.info() != Eigen::Success)
    throw Error("PldaLogLikelihood: within-class covariance not PD");
  const double logdet_w =
      2.0 * Mat(wl.matrixL()).diagonal().array().log().sum();
  double total = 0.0;
  for (const auto &[label, idx] : groups) {
    const double n = static_cast<double>(idx.size());
    Vec mean = Vec::Zero(d);
    for (Eigen::Index i : idx) mean += x.col(i);
    mean /= n;
    double scatter = 0.0;
    for (Eigen::Index i : idx) {
      Vec dev = x.col(i) - mean;
      scatter += dev.dot(wl.solve(dev));
    }
    Mat cov = model.Between() + model.Within() / n;
    Eigen::LLT<Mat> cl(cov);
    Vec centered = mean - model.Mean();
    double logdet_c = 2.0 * Mat(cl.matrixL()).diagonal().array().log().sum();
    total += -0.5 * (n - 1.0) * (static_cast<double>(d) * kLog2Pi + logdet_w) -
             0.5 * scatter - 0.5 * static_cast<double>(d) * std::log(n) -
             0.5 * (static_cast<double>(d) * kLog2Pi + logdet_c +
                    centered.dot(cl.solve(centered)));
  }
  return total;
}

PldaFitResult FitPlda(const Eigen::Ref<const Mat> &x,
                      std::span<const int> labels, int num_iters) {
  const Eigen::Index d = x.rows(), N = x.cols();
  if (!x.allFinite()) throw Error("FitPlda: non-finite input");
  auto groups = GroupByLabel(N, labels);
  if (groups.size() < 2) throw Error("FitPlda: need at least 2 speakers");
  bool any_repeat = false;
  for (const auto &[label, idx] : groups) any_repeat |= idx.size() >= 2;
  if (!any_repeat)
    throw Error("within-class covariance unidentifiable");

  std::vector<Vec> means;
  std::vector<double> counts;
  Mat within = Mat::Zero(d, d);
  for (const auto &[label, idx] : groups) {
    Vec m = Vec::Zero(d);
    for (Eigen::Index i : idx) m += x.col(i);
    m /= static_cast<double>(idx.size());
    for (Eigen::Index i : idx) {
      Vec dev = x.col(i) - m;
      within.noalias() += dev * dev.transpose();
    }
    means.push_back(std::move(m));
    counts.push_back(static_cast<double>(idx.size()));
  }
  const double S = static_cast<double>(means.size());
  double repeat_n = 0.0;
  for (double c : counts) repeat_n += c - 1.0;
  within = Symmetrize(within / repeat_n);
  Eigen::SelfAdjointEigenSolver<Mat> wes(within, Eigen::EigenvaluesOnly);
  if (!(wes.eigenvalues().minCoeff() > 0.0)) {
    Warn("FitPlda: singular within-class covariance; adding a ridge");
    within.diagonal().array() +=
        1e-6 * std::max(within.trace() / static_cast<double>(d), 1e-12);
  }
  Vec mu = Vec::Zero(d);
  for (const Vec &m : means) mu += m;
  mu /= S;
  Mat between = Mat::Zero(d, d);
  for (const Vec &m : means) between.noalias() += (m - mu) * (m - mu).transpose();
  between = Symmetrize(between / S);

  PldaFitResult result{PldaModel(mu, between, within), {}};
  for (int it = 0; it < num_iters; ++it) {
    result.log_likelihood.push_back(PldaLogLikelihood(result.model, x, labels));
    const Mat &B = result.model.Between();
    const Mat &W = result.model.Within();
    const Vec &m0 = result.model.Mean();
    std::vector<Vec> y_hat;
    std::vector<Mat> y_cov;
    std::size_t s = 0;
    for (; s < groups.size(); ++s) {
      // Posterior of the speaker variable without inverting B:
      // K = B + W/n, E[y] = m0 + B K^{-1} (xbar - m0), Cov = B - B K^{-1} B.
      Eigen::LLT<Mat> kl(B + W / counts[s]);
      y_hat.push_back(m0 + B * kl.solve(means[s] - m0));
      y_cov.push_back(Symmetrize(B - B * kl.solve(B)));
    }
    Vec new_mu = Vec::Zero(d);
    for (const Vec &y : y_hat) new_mu += y;
    new_mu /= S;
    Mat new_b = Mat::Zero(d, d), new_w = Mat::Zero(d, d);
    s = 0;
    for (const auto &[label, idx] : groups) {
      Vec dy = y_hat[s] - new_mu;
      new_b += y_cov[s] + dy * dy.transpose();
      for (Eigen::Index i : idx) {
        Vec dev = x.col(i) - y_hat[s];
        new_w.noalias() += dev * dev.transpose();
      }
      new_w += counts[s] * y_cov[s];
      ++s;
    }
    result.model = PldaModel(new_mu, Symmetrize(new_b / S),
                             Symmetrize(new_w / static_cast<double>(N)));
  }
  result.log_likelihood.push_back(PldaLogLikelihood(result.model, x, labels));
  return result;
}

double Backend::Score(const Eigen::Ref<const Vec> &enroll,
                      const Eigen::Ref<const Vec> &test) const {
  return plda.Score(chain.Apply(enroll), chain.Apply(test));
}

double Backend::ScoreMulti(std::span<const Vec> enroll,
                           const Eigen::Ref<const Vec> &test) const {
  if (enroll.empty()) throw Error("ScoreMulti: no enrollment i-vectors");
  Vec avg = Vec::Zero(chain.OutputDim());
  for (const Vec &e : enroll) avg += chain.Apply(e);
  return plda.Score(LengthNormalize(avg), chain.Apply(test));
}

Backend FitBackend(const Eigen::Ref<const Mat> &ivectors,
                   std::span<const int> labels, int lda_dim, int plda_iters) {
  Backend backend;
  backend.chain = FitPreprocess(ivectors, labels, lda_dim);
  Mat x = backend.chain.ApplyAll(ivectors);
  backend.plda = FitPlda(x, labels, plda_iters).model;
  return backend;
}

std::string SerializeBackend(const Backend &backend) {
  BinaryWriter w;
  w.Magic("PLDA");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(backend.chain.InputDim()));
  w.U32(static_cast<std::uint32_t>(backend.chain.OutputDim()));
  w.VectorF64(backend.chain.mean);
  w.MatrixF64(backend.chain.lda);
  w.VectorF64(backend.plda.Mean());
  w.MatrixF64(backend.plda.Between());
  w.MatrixF64(backend.plda.Within());
  return w.Bytes();
}

Backend DeserializeBackend(std::string bytes, const std::string &what) {
  BinaryReader r(std::move(bytes), what);
  r.ExpectMagic("PLDA");
  std::uint32_t version = r.U32();
  if (version != 1)
    throw Error(what + ": unsupported PLDA version " + std::to_string(version));
  Eigen::Index D = r.U32(), d = r.U32();
  Backend b;
  b.chain.mean = r.VectorF64(D);
  b.chain.lda = r.MatrixF64(D, d);
  Vec mean = r.VectorF64(d);
  Mat between = r.MatrixF64(d, d);
  Mat within = r.MatrixF64(d, d);
  r.ExpectEnd();
  b.plda = PldaModel(std::move(mean), std::move(between), std::move(within));
  return b;
}

void WriteBackend(const Backend &backend, const std::string &path) {
  WriteFileAtomic(path, SerializeBackend(backend));
}

Backend ReadBackend(const std::string &path) {
  return DeserializeBackend(ReadFileBytes(path), path);
}

std::vector<Trial> ParseTrials(std::string_view text, const std::string &what) {
  std::vector<Trial> trials;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw Error(what + ":" + std::to_string(lineno) +
                  ": expected enroll<TAB>test<TAB>label");
    Trial t{fields[0], fields[1], TrialLabel::kUnknown};
    if (fields[2] == "target") t.label = TrialLabel::kTarget;
    else if (fields[2] == "nontarget") t.label = TrialLabel::kNontarget;
    else if (fields[2] != "unk")
      throw Error(what + ":" + std::to_string(lineno) + ": bad label \"" +
                  fields[2] + "\"");
    trials.push_back(std::move(t));
  }
  return trials;
}

std::string FormatTrials(std::span<const Trial> trials) {
  std::string out;
  for (const Trial &t : trials) {
    out += t.enroll + '\t' + t.test + '\t';
    out += t.label == TrialLabel::kTarget      ? "target"
           : t.label == TrialLabel::kNontarget ? "nontarget"
                                               : "unk";
    out += '\n';
  }
  return out;
}

std::string FormatScores(std::span<const Trial> trials,
                         std::span<const double> scores) {
  if (trials.size() != scores.size())
    throw Error("FormatScores: one score per trial required");
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < trials.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", scores[i]);
    out += trials[i].enroll + '\t' + trials[i].test + '\t' + buf + '\n';
  }
  return out;
}

std::vector<double> ParseScores(std::string_view text,
                                std::span<const Trial> trials,
                                const std::string &what) {
  std::vector<double> scores;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = what + ":" + std::to_string(lineno);
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw Error(where + ": expected enroll<TAB>test<TAB>score");
    const std::size_t k = scores.size();
    if (k >= trials.size() || line.substr(0, t1) != trials[k].enroll ||
        line.substr(t1 + 1, t2 - t1 - 1) != trials[k].test)
      throw Error(where + ": does not match the trial list");
    const std::string value = line.substr(t2 + 1);
    char *end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0' || !std::isfinite(v))
      throw Error(where + ": bad score \"" + value + "\"");
    scores.push_back(v);
  }
  if (scores.size() != trials.size())
    throw Error(what + ": expected " + std::to_string(trials.size()) +
                " scores, found " + std::to_string(scores.size()));
  return scores;
}

}  // namespace ivx
