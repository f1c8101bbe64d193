// ivx/synth.cc

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

#include "ivx/synth.h"

#include <cmath>
#include <cstdio>
#include <random>

namespace ivx {

namespace {

std::mt19937_64 Stream(std::uint64_t seed, std::uint64_t tag,
                       std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum : std::uint64_t {
  kModelTag = 1,
  kSpeakerTag = 2,
  kUttTag = 3,
  kEvalSpeakerTag = 4,
  kEvalUttTag = 5
};

Mat GaussianMatrix(Eigen::Index rows, Eigen::Index cols, double sd,
                   std::mt19937_64 *rng) {
  if (sd == 0.0) return Mat::Zero(rows, cols);
  std::normal_distribution<double> g(0.0, sd);
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(*rng);
  return m;
}

std::string Id(const char *prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%04d", prefix, n);
  return buf;
}

FeatureMatrix Utterance(const SynthConfig &cfg, const SynthModel &model,
                        const Vec &speaker, std::mt19937_64 *rng) {
  const int C = cfg.num_components, F = cfg.feat_dim;
  const int channel_dims = cfg.true_dim - cfg.speaker_dims;
  Vec factor(cfg.true_dim);
  factor.head(cfg.speaker_dims) = speaker;
  std::normal_distribution<double> g(0.0, 1.0);
  for (int j = 0; j < channel_dims; ++j)
    factor(cfg.speaker_dims + j) = cfg.channel_scale * g(*rng);

  const GmmUbm &ubm = model.ubm;
  Mat shifted(C, F);
  Mat stddev = ubm.Variances().array().sqrt().matrix();
  for (int c = 0; c < C; ++c)
    shifted.row(c) = ubm.Means().row(c) +
                     ubm.Unwhiten(c, model.normalized_blocks[c] * factor)
                         .transpose();

  std::uniform_int_distribution<int> len(cfg.frames_min, cfg.frames_max);
  std::discrete_distribution<int> comp(ubm.Weights().data(),
                                       ubm.Weights().data() + C);
  FeatureMatrix fm;
  fm.frames.resize(len(*rng), F);
  for (Eigen::Index t = 0; t < fm.frames.rows(); ++t) {
    int c = comp(*rng);
    for (int f = 0; f < F; ++f)
      fm.frames(t, f) = shifted(c, f) + stddev(c, f) * g(*rng);
  }
  return fm;
}

void GenerateSplit(const SynthConfig &cfg, const SynthModel &model,
                   int speakers, int utts, std::uint64_t spk_tag,
                   std::uint64_t utt_tag, const char *prefix, int num_threads,
                   std::vector<FeatureMatrix> *out) {
  std::vector<Vec> factors(speakers);
  for (int s = 0; s < speakers; ++s) {
    auto rng = Stream(cfg.seed, spk_tag, static_cast<std::uint64_t>(s));
    factors[s] = GaussianMatrix(cfg.speaker_dims, 1, cfg.speaker_scale, &rng);
  }
  out->assign(static_cast<std::size_t>(speakers) * utts, FeatureMatrix{});
  ParallelFor(out->size(), num_threads, [&](std::size_t i) {
    const int s = static_cast<int>(i) / utts, u = static_cast<int>(i) % utts;
    auto rng = Stream(cfg.seed, utt_tag, i);
    FeatureMatrix fm = Utterance(cfg, model, factors[s], &rng);
    fm.speaker_id = Id(prefix, s);
    fm.utterance_id = fm.speaker_id + "-" + Id("u", u);
    (*out)[i] = std::move(fm);
  });
}

}  // namespace

void SynthConfig::Check() const {
  if (n_speakers < 1 || utts_per_speaker < 1 || eval_speakers < 0 ||
      eval_utts_per_speaker < 1 || frames_min < 1 || frames_max < frames_min ||
      num_components < 1 || feat_dim < 1 || true_dim < 1 ||
      speaker_dims < 0 || speaker_dims > true_dim || dictionary_rank < 0)
    throw Error("SynthConfig: counts must be positive and consistent");
  if (speaker_scale < 0 || channel_scale < 0 || dictionary_noise < 0 ||
      speaker_residual < 0 || !(mean_spread > 0))
    throw Error("SynthConfig: scales must be non-negative");
}

SynthModel GenerateModel(const SynthConfig &cfg) {
  cfg.Check();
  const int C = cfg.num_components, F = cfg.feat_dim, R = cfg.true_dim;
  auto rng = Stream(cfg.seed, kModelTag, 0);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Vec weights(C);
  for (int c = 0; c < C; ++c) weights(c) = u(rng);
  weights /= weights.sum();
  Mat means = GaussianMatrix(C, F, cfg.mean_spread, &rng);
  Mat vars(C, F);
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < F; ++f) vars(c, f) = u(rng);

  std::vector<Mat> blocks(C);
  const double entry_sd = 1.0 / std::sqrt(static_cast<double>(R));
  if (cfg.dictionary_rank > 0) {
    const int Q = cfg.dictionary_rank;
    std::vector<Mat> atoms;
    for (int q = 0; q < Q; ++q) atoms.push_back(GaussianMatrix(F, R, entry_sd, &rng));
    Mat coeffs = GaussianMatrix(C, Q, 1.0 / std::sqrt(static_cast<double>(Q)), &rng);
    for (int c = 0; c < C; ++c) {
      blocks[c] = cfg.dictionary_noise * GaussianMatrix(F, R, entry_sd, &rng);
      for (int q = 0; q < Q; ++q) blocks[c] += coeffs(c, q) * atoms[q];
    }
  } else {
    for (int c = 0; c < C; ++c) blocks[c] = GaussianMatrix(F, R, entry_sd, &rng);
  }
  if (cfg.speaker_residual > 0.0 && cfg.speaker_dims > 0)
    for (int c = 0; c < C; ++c)
      blocks[c].leftCols(cfg.speaker_dims) += GaussianMatrix(
          F, cfg.speaker_dims, cfg.speaker_residual * entry_sd, &rng);
  return SynthModel{GmmUbm::Diagonal(weights, means, vars), std::move(blocks)};
}

SynthCorpus GenerateCorpus(const SynthConfig &cfg, int num_threads) {
  SynthCorpus corpus{GenerateModel(cfg), {}, {}, {}};
  GenerateSplit(cfg, corpus.model, cfg.n_speakers, cfg.utts_per_speaker,
                kSpeakerTag, kUttTag, "spk", num_threads, &corpus.train);
  GenerateSplit(cfg, corpus.model, cfg.eval_speakers,
                cfg.eval_utts_per_speaker, kEvalSpeakerTag, kEvalUttTag,
                "evl", num_threads, &corpus.eval);
  for (std::size_t i = 0; i < corpus.eval.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.eval.size(); ++j)
      corpus.trials.push_back(
          {corpus.eval[i].utterance_id, corpus.eval[j].utterance_id,
           corpus.eval[i].speaker_id == corpus.eval[j].speaker_id
               ? TrialLabel::kTarget
               : TrialLabel::kNontarget});
  return corpus;
}

}  // namespace ivx
