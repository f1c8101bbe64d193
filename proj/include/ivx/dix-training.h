// ivx/dix-training.h

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

#ifndef IVX_DIX_TRAINING_H_
#define IVX_DIX_TRAINING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ivx/extractor.h"
#include "ivx/gmm.h"

namespace ivx {

/// Multi-class logistic regression over i-vectors: p(k | phi) =
/// softmax(W phi + b)_k.  The bias can be disabled.
struct Classifier {
  Mat W;  // K x D
  Vec b;  // K
  bool use_bias = true;

  static Classifier Zero(int num_classes, int ivector_dim,
                         bool use_bias = true);
  int NumClasses() const { return static_cast<int>(W.rows()); }
  Vec Logits(const Eigen::Ref<const Vec> &phi) const;
};

/// Summed cross-entropy -sum_n log p(y_n | phi_n); phis holds one i-vector
/// per column.  Softmax is evaluated in the log domain.
double CrossEntropy(const Classifier &clf, const Eigen::Ref<const Mat> &phis,
                    std::span<const int> labels);
double MeanCrossEntropy(const Classifier &clf,
                        const Eigen::Ref<const Mat> &phis,
                        std::span<const int> labels);

/// Squared Frobenius distance between current and reference normalized
/// blocks, summed over components.
double Regularizer(std::span<const Mat> blocks, std::span<const Mat> orig);

/// The trainable extractor plus classifier.  Exactly one of `full` /
/// `dictionary` is active, selected by `factorized`.
struct DixModel {
  bool factorized = false;
  FullExtractor full;
  FactorizedExtractor dictionary;
  Classifier classifier;

  std::vector<Mat> Blocks() const {
    return factorized ? dictionary.MaterializeAll() : full.Blocks();
  }
  FullExtractor AsFull() const {
    return factorized ? dictionary.ToFull() : full;
  }
  std::int64_t ExtractorParameterCount() const {
    return factorized ? dictionary.ParameterCount() : full.ParameterCount();
  }
};

/// Gradients with the same layout as DixModel.  Only the members matching
/// the model kind (and the requested parameter groups) are filled.
struct DixGradients {
  Mat W;
  Vec b;
  std::vector<Mat> blocks;  // full extractor
  std::vector<Mat> bases;   // factorized extractor
  Mat coeffs;
};

struct ObjectiveValue {
  double loss = 0.0;      // mean cross-entropy over the batch
  double distance = 0.0;  // Regularizer(blocks, orig), 0 if orig is empty
  double total = 0.0;     // loss + lambda * distance
};

struct BackwardOptions {
  bool classifier = true;
  bool extractor = true;
  /// When false the cross-entropy term is dropped from the objective.
  bool include_loss = true;
};

/// Objective loss + lambda * Regularizer over a batch, where each i-vector
/// is recomputed in closed form from its statistics through the current
/// extractor.  With `grads` non-null, fills the requested gradients.
///
/// For phi = L^{-1} b with L = I + sum_c N_c Tbar_c' Tbar_c and
/// b = sum_c Tbar_c' fbar_c, and g = d loss / d phi, let v = L^{-1} g.
/// Then d loss / d Tbar_c = fbar_c v' - N_c Tbar_c (phi v' + v phi').
/// Dictionary gradients follow from Tbar_c = sum_q a_cq U_q.
ObjectiveValue ForwardBackward(const DixModel &model,
                               std::span<const SuffStats *const> batch,
                               std::span<const int> labels, double lambda,
                               std::span<const Mat> orig,
                               const BackwardOptions &options,
                               DixGradients *grads);

/// Utterance statistics with speaker labels and a held-out split.
struct TrainSet {
  std::vector<SuffStats> stats;
  std::vector<int> labels;
  std::vector<std::string> speakers;  // label -> speaker id
  std::vector<std::size_t> train;     // indices into stats
  std::vector<std::size_t> cv;

  int NumClasses() const { return static_cast<int>(speakers.size()); }
};

/// Keeps speakers with at least min_utts utterances, then holds out one
/// utterance from each of up to num_cv distinct (randomly chosen) speakers.
TrainSet MakeTrainSet(std::vector<SuffStats> stats, int min_utts, int num_cv,
                      std::uint64_t seed);

enum class Scheme { kScheme1, kScheme2, kFull };
enum class Phase { kPhase0, kPhase1, kPhase2 };

const char *PhaseName(Phase phase);
Scheme ParseScheme(std::string_view text);
const char *SchemeName(Scheme scheme);

/// Regularizer weight for the i-th regularized (phase-0) epoch.  Phase 0
/// lasts while the schedule returns a positive value.
using LambdaSchedule = std::function<double(int epoch)>;
LambdaSchedule SingleEpochLambda(double lambda0);

struct DixTrainConfig {
  int num_bases = 8;
  double lr_phase0 = 1e-7;
  double lr_phase1 = 0.1;
  double lr_phase2 = 0.01;
  int batch_size = 64;
  int max_epochs = 100;
  int max_phase0_epochs = 100;
  int patience = 3;
  double min_rel_improvement = 1e-4;
  std::uint64_t seed = 0;
  double lambda0 = 1e5;
  int min_utts_per_speaker = 5;
  int num_cv = 100;
  bool use_bias = true;
  /// Restore the parameters with the best CV loss at the end of a phase.
  bool restore_best = true;
  /// Overrides the default single-epoch schedule built from lambda0.
  LambdaSchedule lambda_schedule;
};

struct HistoryRow {
  int epoch = 0;
  Phase phase = Phase::kPhase1;
  double train_loss = 0.0;
  double cv_loss = 0.0;
  double reg_distance = 0.0;
  double lr = 0.0;
};

/// Mutable bookkeeping of a training run.
struct TrainerState {
  Phase phase = Phase::kPhase1;
  int epoch = 0;
  double learning_rate = 0.0;
  double lambda = 0.0;
  std::vector<Mat> orig;  // reference normalized blocks
  double best_cv = 0.0;
  int plateau = 0;
  std::uint64_t seed = 0;
};

struct DixTrainResult {
  /// Model right after initialization (after phase 0 for scheme 2).
  DixModel init;
  DixModel model;
  std::vector<HistoryRow> history;
  /// Regularizer distance of the freshly initialized extractor.
  double init_distance = 0.0;
  /// Mean wall-clock seconds of a phase-2 epoch.
  double seconds_per_epoch = 0.0;
};

/// Random dictionary for scheme 2: U entries ~ N(0, 1/sqrt(F D)) and
/// a entries ~ N(0, 1/sqrt(Q)) (standard deviations).
FactorizedExtractor RandomFactorizedExtractor(int num_components, int feat_dim,
                                              int ivector_dim, int num_bases,
                                              std::uint64_t seed);

/// Initializes a model for the given scheme (scheme 2 before phase 0).
DixModel InitModel(Scheme scheme, const FullExtractor &orig, int num_classes,
                   const DixTrainConfig &config);

/// Runs one epoch of SGD over `set.train` in the given phase and returns the
/// mean training objective.  Phase 1 only updates the classifier, phase 0
/// only the extractor.
double RunEpoch(const TrainSet &set, Phase phase, TrainerState *state,
                const DixTrainConfig &config, std::uint64_t shuffle_seed,
                DixModel *model);

/// Mean cross-entropy on the held-out utterances.
double CvLoss(const DixModel &model, const TrainSet &set);

DixTrainResult TrainDiscriminative(Scheme scheme, const FullExtractor &orig,
                                   const TrainSet &set,
                                   const DixTrainConfig &config);

/// key=value training configuration (blank lines and '#' comments
/// allowed).  Recognized keys: scheme, Q, D, lr_phase0, lr_phase1,
/// lr_phase2, batch_size, max_epochs, patience, seed, lambda0,
/// min_utts_per_speaker, num_cv, use_bias.
struct DixConfigFile {
  Scheme scheme = Scheme::kScheme2;
  int ivector_dim = 40;
  DixTrainConfig train;
};
DixConfigFile ParseDixConfig(std::string_view text);
/// Applies one recognized key; returns false for unknown keys.
bool ApplyDixKey(const std::string &key, const std::string &value,
                 DixConfigFile *config);
void CheckDixConfig(const DixConfigFile &config);

/// CSV with header epoch,phase,train_loss,cv_loss,reg_distance,lr.
std::string HistoryCsv(std::span<const HistoryRow> history);

}  // namespace ivx

#endif  // IVX_DIX_TRAINING_H_
