// ivx/experiment.h

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

#ifndef IVX_EXPERIMENT_H_
#define IVX_EXPERIMENT_H_

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ivx/dix-training.h"
#include "ivx/eer.h"
#include "ivx/synth.h"

namespace ivx {

/// End-to-end desk experiment: synthetic corpus, UBM, statistics,
/// generative extractor (system B), then the discriminatively retrained
/// systems A (scheme 1), R (scheme 2) and F (full representation), each
/// scored with its own LDA + PLDA backend.
struct ExperimentConfig {
  SynthConfig synth;
  int ubm_iters = 10;
  int ivector_dim = 40;
  int tv_iters = 10;
  int lda_dim = 20;
  int plda_iters = 20;
  DixTrainConfig dix;
  /// Used by the single-scheme training stage; the experiment runs all.
  Scheme scheme = Scheme::kScheme2;
  std::uint64_t seed = 42;
  int num_threads = 1;
};

/// Parses key=value text on top of the defaults.  Besides the training
/// keys accepted by ParseDixConfig, recognized keys are
/// seed, threads, n_speakers, utts_per_speaker, eval_speakers,
/// eval_utts_per_speaker, frames_min, frames_max, C, F, true_dim,
/// speaker_dims, speaker_scale, channel_scale, dictionary_rank,
/// dictionary_noise, speaker_residual, mean_spread, ubm_iters, tv_iters, lda_dim and
/// plda_iters.
ExperimentConfig ParseExperimentConfig(std::string_view text);
void CheckExperimentConfig(const ExperimentConfig &config);

struct SystemResult {
  std::string name;
  EerResult eer;
  std::int64_t num_params = 0;
  /// Mean wall-clock seconds of a joint-training epoch (0 for B and the
  /// initial systems).
  double seconds_per_epoch = 0.0;
};

struct ExperimentResult {
  /// In report order: B, A_init, A, R_init, R, F.
  std::vector<SystemResult> systems;
  /// Scheme-2 distance to the generative extractor, before and after the
  /// regularized epoch(s).
  double phase0_initial_distance = 0.0;
  double phase0_final_distance = 0.0;
  std::string report;
  std::string metrics;

  const SystemResult &System(std::string_view name) const;
};

/// Seed offsets of the pipeline stages relative to the config seed.  The
/// corpus uses the seed itself.
enum SeedOffset : std::uint64_t {
  kUbmSeed = 1,
  kTvSeed = 2,
  kTrainSetSeed = 3,
  kDixSeed = 4
};

/// Runs the experiment.  When out_dir is non-empty, model files, training
/// histories, the report (report.tsv) and the metrics log (metrics.jsonl)
/// are written there.  Every model file and the report depend only on the
/// config; wall-clock timings appear only in the metrics log.
ExperimentResult RunExperiment(const ExperimentConfig &config,
                               const std::string &out_dir = "",
                               const std::function<void(const std::string &)>
                                   &progress = nullptr);

/// Tab-separated table with one column per system.
std::string FormatReport(const std::vector<SystemResult> &systems);

/// Scores every trial whose ids are present; unknown ids raise an error.
std::vector<double> ScoreTrials(const Backend &backend,
                                std::span<const IVector> ivectors,
                                std::span<const Trial> trials,
                                int num_threads = 1);

/// EER over labelled trials (unknown labels raise an error).
EerResult TrialEer(std::span<const Trial> trials,
                   std::span<const double> scores);

/// Fits the backend on i-vectors with their speaker labels.
Backend FitBackendOnIvectors(std::span<const IVector> ivectors, int lda_dim,
                             int plda_iters);

}  // namespace ivx

#endif  // IVX_EXPERIMENT_H_
