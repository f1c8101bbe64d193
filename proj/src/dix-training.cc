// ivx/dix-training.cc

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

#include "ivx/dix-training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "ivx/io.h"

namespace ivx {

Classifier Classifier::Zero(int num_classes, int ivector_dim, bool use_bias) {
  Classifier clf;
  clf.W = Mat::Zero(num_classes, ivector_dim);
  clf.b = Vec::Zero(num_classes);
  clf.use_bias = use_bias;
  return clf;
}

Vec Classifier::Logits(const Eigen::Ref<const Vec> &phi) const {
  Vec z = W * phi;
  if (use_bias) z += b;
  return z;
}

namespace {

double LogSumExp(const Vec &z) {
  double mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

void CheckLabels(const Classifier &clf, std::span<const int> labels) {
  for (int y : labels)
    if (y < 0 || y >= clf.NumClasses())
      throw Error("label " + std::to_string(y) + " out of range [0, " +
                  std::to_string(clf.NumClasses()) + ")");
}

}  // namespace

double CrossEntropy(const Classifier &clf, const Eigen::Ref<const Mat> &phis,
                    std::span<const int> labels) {
  if (static_cast<std::size_t>(phis.cols()) != labels.size())
    throw Error("CrossEntropy: one label per i-vector required");
  CheckLabels(clf, labels);
  if (!phis.allFinite() || !clf.W.allFinite() || !clf.b.allFinite())
    throw Error("CrossEntropy: non-finite input");
  double total = 0.0;
  for (Eigen::Index n = 0; n < phis.cols(); ++n) {
    Vec z = clf.Logits(phis.col(n));
    total += LogSumExp(z) - z(labels[n]);
  }
  return total;
}

double MeanCrossEntropy(const Classifier &clf,
                        const Eigen::Ref<const Mat> &phis,
                        std::span<const int> labels) {
  if (labels.empty()) throw Error("MeanCrossEntropy: no samples");
  return CrossEntropy(clf, phis, labels) / static_cast<double>(labels.size());
}

double Regularizer(std::span<const Mat> blocks, std::span<const Mat> orig) {
  return SquaredDistance(blocks, orig);
}

ObjectiveValue ForwardBackward(const DixModel &model,
                               std::span<const SuffStats *const> batch,
                               std::span<const int> labels, double lambda,
                               std::span<const Mat> orig,
                               const BackwardOptions &options,
                               DixGradients *grads) {
  if (batch.size() != labels.size())
    throw Error("ForwardBackward: one label per utterance required");
  if (batch.empty()) throw Error("ForwardBackward: empty batch");
  if (lambda != 0.0 && orig.empty())
    throw Error("ForwardBackward: regularizer needs reference blocks");
  const Classifier &clf = model.classifier;
  CheckLabels(clf, labels);

  const std::vector<Mat> blocks = model.Blocks();
  const int C = static_cast<int>(blocks.size());
  const Eigen::Index F = blocks[0].rows(), D = blocks[0].cols();
  const std::vector<Mat> grams = ComputeGrams(blocks);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  const bool want_clf = grads != nullptr && options.classifier;
  const bool want_ext = grads != nullptr && options.extractor;
  if (want_clf) {
    grads->W = Mat::Zero(clf.W.rows(), clf.W.cols());
    grads->b = Vec::Zero(clf.b.size());
  }
  std::vector<Mat> lin_acc, quad_acc;
  if (want_ext && options.include_loss) {
    lin_acc.assign(C, Mat::Zero(F, D));
    quad_acc.assign(C, Mat::Zero(D, D));
  }

  ObjectiveValue value;
  if (options.include_loss) {
    double loss = 0.0;
    for (std::size_t u = 0; u < batch.size(); ++u) {
      const SuffStats &s = *batch[u];
      if (s.NumComponents() != C || s.f_norm.cols() != F)
        throw Error("ForwardBackward: statistics of " + s.utterance_id +
                    " do not match the extractor");
      Mat L = Mat::Identity(D, D);
      Vec linear = Vec::Zero(D);
      for (int c = 0; c < C; ++c) {
        L += s.n(c) * grams[c];
        linear.noalias() += blocks[c].transpose() * s.f_norm.row(c).transpose();
      }
      Eigen::LLT<Mat> llt(L);
      if (llt.info() != Eigen::Success)
        throw Error("ill-conditioned precision");
      Vec phi = llt.solve(linear);
      Vec z = clf.Logits(phi);
      double lse = LogSumExp(z);
      const int y = labels[u];
      loss += lse - z(y);
      if (!want_clf && !want_ext) continue;
      Vec dz = (z.array() - lse).exp().matrix();
      dz(y) -= 1.0;
      dz *= inv_batch;
      if (want_clf) {
        grads->W.noalias() += dz * phi.transpose();
        if (clf.use_bias) grads->b += dz;
      }
      if (want_ext) {
        Vec v = llt.solve(clf.W.transpose() * dz);
        Mat sym = phi * v.transpose();
        sym += sym.transpose().eval();
        for (int c = 0; c < C; ++c) {
          lin_acc[c].noalias() += s.f_norm.row(c).transpose() * v.transpose();
          if (s.n(c) != 0.0) quad_acc[c] += s.n(c) * sym;
        }
      }
    }
    value.loss = loss * inv_batch;
  }
  if (!orig.empty()) value.distance = Regularizer(blocks, orig);
  value.total = (options.include_loss ? value.loss : 0.0) +
                lambda * value.distance;

  if (want_ext) {
    std::vector<Mat> g(C, Mat::Zero(F, D));
    for (int c = 0; c < C; ++c) {
      if (options.include_loss)
        g[c] = lin_acc[c] - blocks[c] * quad_acc[c];
      if (lambda != 0.0) g[c] += 2.0 * lambda * (blocks[c] - orig[c]);
    }
    if (model.factorized) {
      const FactorizedExtractor &dict = model.dictionary;
      const int Q = dict.NumBases();
      grads->coeffs = Mat::Zero(C, Q);
      grads->bases.assign(Q, Mat::Zero(F, D));
      for (int c = 0; c < C; ++c) {
        for (int q = 0; q < Q; ++q) {
          grads->coeffs(c, q) = g[c].cwiseProduct(dict.Bases()[q]).sum();
          grads->bases[q] += dict.Coeffs()(c, q) * g[c];
        }
      }
    } else {
      grads->blocks = std::move(g);
    }
  }
  return value;
}

TrainSet MakeTrainSet(std::vector<SuffStats> stats, int min_utts, int num_cv,
                      std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < stats.size(); ++i)
    by_speaker[stats[i].speaker_id].push_back(i);
  TrainSet set;
  std::vector<std::vector<std::size_t>> members;
  std::vector<SuffStats> kept;
  for (auto &[spk, idx] : by_speaker) {
    if (static_cast<int>(idx.size()) < min_utts) continue;
    set.speakers.push_back(spk);
    std::vector<std::size_t> mine;
    for (std::size_t i : idx) {
      mine.push_back(kept.size());
      set.labels.push_back(static_cast<int>(set.speakers.size()) - 1);
      kept.push_back(std::move(stats[i]));
    }
    members.push_back(std::move(mine));
  }
  set.stats = std::move(kept);

  std::mt19937_64 rng(seed);
  std::vector<int> order(set.speakers.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> held(set.stats.size(), false);
  const int n_cv = std::min<int>(std::max(num_cv, 0),
                                 static_cast<int>(order.size()));
  for (int j = 0; j < n_cv; ++j) {
    const auto &m = members[order[j]];
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    held[m[pick(rng)]] = true;
  }
  for (std::size_t i = 0; i < set.stats.size(); ++i)
    (held[i] ? set.cv : set.train).push_back(i);
  return set;
}

const char *PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kPhase0: return "phase0";
    case Phase::kPhase1: return "phase1";
    case Phase::kPhase2: return "phase2";
  }
  return "?";
}

Scheme ParseScheme(std::string_view text) {
  if (text == "1" || text == "scheme1") return Scheme::kScheme1;
  if (text == "2" || text == "scheme2") return Scheme::kScheme2;
  if (text == "full") return Scheme::kFull;
  throw Error("unknown scheme \"" + std::string(text) +
              "\" (expected 1, 2 or full)");
}

const char *SchemeName(Scheme scheme) {
  switch (scheme) {
    case Scheme::kScheme1: return "1";
    case Scheme::kScheme2: return "2";
    case Scheme::kFull: return "full";
  }
  return "?";
}

LambdaSchedule SingleEpochLambda(double lambda0) {
  return [lambda0](int epoch) { return epoch == 0 ? lambda0 : 0.0; };
}

FactorizedExtractor RandomFactorizedExtractor(int num_components, int feat_dim,
                                              int ivector_dim, int num_bases,
                                              std::uint64_t seed) {
  if (num_bases < 1) throw Error("Q must be at least 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> base_dist(
      0.0, 1.0 / std::sqrt(static_cast<double>(feat_dim) * ivector_dim));
  std::normal_distribution<double> coeff_dist(
      0.0, 1.0 / std::sqrt(static_cast<double>(num_bases)));
  std::vector<Mat> bases(num_bases, Mat(feat_dim, ivector_dim));
  for (Mat &u : bases)
    for (Eigen::Index j = 0; j < u.cols(); ++j)
      for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, j) = base_dist(rng);
  Mat coeffs(num_components, num_bases);
  for (Eigen::Index c = 0; c < coeffs.rows(); ++c)
    for (Eigen::Index q = 0; q < coeffs.cols(); ++q)
      coeffs(c, q) = coeff_dist(rng);
  return FactorizedExtractor(std::move(bases), std::move(coeffs));
}

DixModel InitModel(Scheme scheme, const FullExtractor &orig, int num_classes,
                   const DixTrainConfig &config) {
  DixModel model;
  switch (scheme) {
    case Scheme::kScheme1:
      model.factorized = true;
      model.dictionary = Factorize(orig, config.num_bases);
      break;
    case Scheme::kScheme2:
      if (config.num_bases > orig.NumComponents())
        throw Error("Q must not exceed C");
      model.factorized = true;
      model.dictionary = RandomFactorizedExtractor(
          orig.NumComponents(), orig.FeatDim(), orig.IvectorDim(),
          config.num_bases, config.seed ^ 0x5eed5eedULL);
      break;
    case Scheme::kFull:
      model.full = orig;
      break;
  }
  model.classifier =
      Classifier::Zero(num_classes, orig.IvectorDim(), config.use_bias);
  return model;
}

namespace {

void ApplyUpdate(const DixGradients &g, const BackwardOptions &opts,
                 double lr, DixModel *model) {
  if (opts.classifier) {
    model->classifier.W -= lr * g.W;
    if (model->classifier.use_bias) model->classifier.b -= lr * g.b;
  }
  if (opts.extractor) {
    if (model->factorized) {
      FactorizedExtractor &d = model->dictionary;
      for (int q = 0; q < d.NumBases(); ++q) d.Bases()[q] -= lr * g.bases[q];
      d.Coeffs() -= lr * g.coeffs;
    } else {
      for (int c = 0; c < model->full.NumComponents(); ++c)
        model->full.Block(c) -= lr * g.blocks[c];
    }
  }
}

BackwardOptions OptionsFor(Phase phase) {
  BackwardOptions o;
  o.classifier = phase != Phase::kPhase0;
  o.extractor = phase != Phase::kPhase1;
  return o;
}

}  // namespace

double RunEpoch(const TrainSet &set, Phase phase, TrainerState *state,
                const DixTrainConfig &config, std::uint64_t shuffle_seed,
                DixModel *model) {
  if (set.train.empty()) throw Error("training set is empty");
  std::vector<std::size_t> order = set.train;
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const BackwardOptions opts = OptionsFor(phase);
  const std::size_t bs = static_cast<std::size_t>(std::max(1, config.batch_size));
  double total = 0.0;
  std::vector<const SuffStats *> ptrs;
  std::vector<int> labels;
  DixGradients grads;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::size_t end = std::min(order.size(), start + bs);
    ptrs.clear();
    labels.clear();
    for (std::size_t i = start; i < end; ++i) {
      ptrs.push_back(&set.stats[order[i]]);
      labels.push_back(set.labels[order[i]]);
    }
    ObjectiveValue v =
        ForwardBackward(*model, ptrs, labels, state->lambda, state->orig,
                        opts, &grads);
    total += v.total * static_cast<double>(end - start);
    ApplyUpdate(grads, opts, state->learning_rate, model);
  }
  return total / static_cast<double>(order.size());
}

double CvLoss(const DixModel &model, const TrainSet &set) {
  if (set.cv.empty()) throw Error("cross-validation set is empty");
  CachedExtractor ex = model.factorized ? CachedExtractor(model.dictionary)
                                        : CachedExtractor(model.full);
  Mat phis(model.classifier.W.cols(), static_cast<Eigen::Index>(set.cv.size()));
  std::vector<int> labels;
  for (std::size_t j = 0; j < set.cv.size(); ++j) {
    phis.col(static_cast<Eigen::Index>(j)) = ex.Extract(set.stats[set.cv[j]]).phi;
    labels.push_back(set.labels[set.cv[j]]);
  }
  return MeanCrossEntropy(model.classifier, phis, labels);
}

namespace {

void RunPhase(const TrainSet &set, Phase phase, double lr,
              const DixTrainConfig &config, std::mt19937_64 *seeder,
              TrainerState *state, DixModel *model,
              std::vector<HistoryRow> *history, double *seconds,
              int *epochs_timed) {
  state->phase = phase;
  state->learning_rate = lr;
  state->best_cv = CvLoss(*model, set);
  state->plateau = 0;
  DixModel best = *model;
  for (int e = 0; e < config.max_epochs; ++e) {
    const double lr_used = state->learning_rate;
    auto t0 = std::chrono::steady_clock::now();
    double train = RunEpoch(set, phase, state, config, (*seeder)(), model);
    auto t1 = std::chrono::steady_clock::now();
    if (seconds != nullptr) {
      *seconds += std::chrono::duration<double>(t1 - t0).count();
      ++*epochs_timed;
    }
    double cv = CvLoss(*model, set);
    if (!std::isfinite(cv)) throw Error("training diverged (CV loss not finite)");
    if (cv <= state->best_cv - config.min_rel_improvement *
                                   std::abs(state->best_cv)) {
      state->best_cv = cv;
      state->plateau = 0;
      best = *model;
    } else {
      ++state->plateau;
      state->learning_rate *= 0.5;
    }
    history->push_back({state->epoch++, phase, train, cv,
                        Regularizer(model->Blocks(), state->orig), lr_used});
    if (state->plateau >= config.patience) break;
  }
  if (config.restore_best) *model = std::move(best);
}

}  // namespace

DixTrainResult TrainDiscriminative(Scheme scheme, const FullExtractor &orig,
                                   const TrainSet &set,
                                   const DixTrainConfig &config) {
  if (set.NumClasses() < 2) throw Error("need at least 2 speakers (K >= 2)");
  if (set.cv.empty()) throw Error("cross-validation set is empty");
  if (set.train.empty()) throw Error("training set is empty");
  for (std::size_t i : set.train)
    if (set.stats[i].NumComponents() != orig.NumComponents() ||
        set.stats[i].Dim() != orig.FeatDim())
      throw Error("statistics do not match the extractor dimensions");

  TrainerState state;
  state.orig = orig.Blocks();
  state.seed = config.seed;
  std::mt19937_64 seeder(config.seed);

  DixTrainResult result;
  DixModel model = InitModel(scheme, orig, set.NumClasses(), config);

  result.init_distance = Regularizer(model.Blocks(), state.orig);
  if (scheme == Scheme::kScheme2) {
    LambdaSchedule schedule = config.lambda_schedule
                                  ? config.lambda_schedule
                                  : SingleEpochLambda(config.lambda0);
    state.phase = Phase::kPhase0;
    state.learning_rate = config.lr_phase0;
    for (int e = 0; e < config.max_phase0_epochs; ++e) {
      double lambda = schedule(e);
      if (!(lambda > 0.0)) break;
      state.lambda = lambda;
      double train =
          RunEpoch(set, Phase::kPhase0, &state, config, seeder(), &model);
      result.history.push_back({state.epoch++, Phase::kPhase0, train,
                                CvLoss(model, set),
                                Regularizer(model.Blocks(), state.orig),
                                state.learning_rate});
    }
  }
  state.lambda = 0.0;
  result.init = model;

  RunPhase(set, Phase::kPhase1, config.lr_phase1, config, &seeder, &state,
           &model, &result.history, nullptr, nullptr);
  double seconds = 0.0;
  int timed = 0;
  RunPhase(set, Phase::kPhase2, config.lr_phase2, config, &seeder, &state,
           &model, &result.history, &seconds, &timed);
  result.seconds_per_epoch = timed > 0 ? seconds / timed : 0.0;
  result.model = std::move(model);
  return result;
}

bool ApplyDixKey(const std::string &key, const std::string &val,
                 DixConfigFile *out) {
  DixTrainConfig &c = out->train;
  if (key == "scheme") out->scheme = ParseScheme(val);
  else if (key == "Q") c.num_bases = ParseInt(key, val);
  else if (key == "D") out->ivector_dim = ParseInt(key, val);
  else if (key == "lr_phase0") c.lr_phase0 = ParseDouble(key, val);
  else if (key == "lr_phase1") c.lr_phase1 = ParseDouble(key, val);
  else if (key == "lr_phase2") c.lr_phase2 = ParseDouble(key, val);
  else if (key == "batch_size") c.batch_size = ParseInt(key, val);
  else if (key == "max_epochs") c.max_epochs = ParseInt(key, val);
  else if (key == "patience") c.patience = ParseInt(key, val);
  else if (key == "seed") c.seed = ParseUint64(key, val);
  else if (key == "lambda0") c.lambda0 = ParseDouble(key, val);
  else if (key == "min_utts_per_speaker") c.min_utts_per_speaker = ParseInt(key, val);
  else if (key == "num_cv") c.num_cv = ParseInt(key, val);
  else if (key == "use_bias") c.use_bias = ParseInt(key, val) != 0;
  else return false;
  return true;
}

void CheckDixConfig(const DixConfigFile &config) {
  if (config.train.batch_size < 1) throw Error("batch_size must be positive");
  if (config.train.num_bases < 1) throw Error("Q must be at least 1");
  if (config.ivector_dim < 1) throw Error("D must be at least 1");
  if (config.train.patience < 1) throw Error("patience must be positive");
}

DixConfigFile ParseDixConfig(std::string_view text) {
  DixConfigFile out;
  for (const KeyValue &kv : ParseKeyValues(text))
    if (!ApplyDixKey(kv.key, kv.value, &out))
      throw Error("config line " + std::to_string(kv.line) +
                  ": unknown key \"" + kv.key + "\"");
  CheckDixConfig(out);
  return out;
}

std::string HistoryCsv(std::span<const HistoryRow> history) {
  std::ostringstream os;
  os << "epoch,phase,train_loss,cv_loss,reg_distance,lr\n";
  os.precision(10);
  for (const HistoryRow &r : history)
    os << r.epoch << ',' << PhaseName(r.phase) << ',' << r.train_loss << ','
       << r.cv_loss << ',' << r.reg_distance << ',' << r.lr << '\n';
  return os.str();
}

}  // namespace ivx
