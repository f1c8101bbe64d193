// ivx/experiment.cc

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

#include "ivx/experiment.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <unordered_map>

#include <json.hpp>

#include "ivx/archive.h"
#include "ivx/io.h"
#include "ivx/tv-training.h"

namespace ivx {

namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool ApplySynthKey(const std::string &key, const std::string &val,
                   SynthConfig *s) {
  if (key == "n_speakers") s->n_speakers = ParseInt(key, val);
  else if (key == "utts_per_speaker") s->utts_per_speaker = ParseInt(key, val);
  else if (key == "eval_speakers") s->eval_speakers = ParseInt(key, val);
  else if (key == "eval_utts_per_speaker") s->eval_utts_per_speaker = ParseInt(key, val);
  else if (key == "frames_min") s->frames_min = ParseInt(key, val);
  else if (key == "frames_max") s->frames_max = ParseInt(key, val);
  else if (key == "C") s->num_components = ParseInt(key, val);
  else if (key == "F") s->feat_dim = ParseInt(key, val);
  else if (key == "true_dim") s->true_dim = ParseInt(key, val);
  else if (key == "speaker_dims") s->speaker_dims = ParseInt(key, val);
  else if (key == "speaker_scale") s->speaker_scale = ParseDouble(key, val);
  else if (key == "channel_scale") s->channel_scale = ParseDouble(key, val);
  else if (key == "dictionary_rank") s->dictionary_rank = ParseInt(key, val);
  else if (key == "dictionary_noise") s->dictionary_noise = ParseDouble(key, val);
  else if (key == "speaker_residual") s->speaker_residual = ParseDouble(key, val);
  else if (key == "mean_spread") s->mean_spread = ParseDouble(key, val);
  else return false;
  return true;
}

std::string FormatValue(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::vector<SuffStats> ComputeStats(const GmmUbm &ubm,
                                    std::span<const FeatureMatrix> utts,
                                    int num_threads) {
  std::vector<SuffStats> out(utts.size());
  ParallelFor(utts.size(), num_threads,
              [&](std::size_t i) { out[i] = AccumulateStats(ubm, utts[i]); });
  return out;
}

}  // namespace

ExperimentConfig ParseExperimentConfig(std::string_view text) {
  ExperimentConfig config;
  DixConfigFile dix;
  dix.train = config.dix;
  dix.ivector_dim = config.ivector_dim;
  for (const KeyValue &kv : ParseKeyValues(text)) {
    const std::string &k = kv.key, &v = kv.value;
    if (k == "seed") config.seed = ParseUint64(k, v);
    else if (k == "threads") config.num_threads = ParseInt(k, v);
    else if (k == "ubm_iters") config.ubm_iters = ParseInt(k, v);
    else if (k == "tv_iters") config.tv_iters = ParseInt(k, v);
    else if (k == "lda_dim") config.lda_dim = ParseInt(k, v);
    else if (k == "plda_iters") config.plda_iters = ParseInt(k, v);
    else if (ApplySynthKey(k, v, &config.synth)) {
    } else if (ApplyDixKey(k, v, &dix)) {
    } else {
      throw Error("config line " + std::to_string(kv.line) +
                  ": unknown key \"" + k + "\"");
    }
  }
  CheckDixConfig(dix);
  config.dix = dix.train;
  config.ivector_dim = dix.ivector_dim;
  config.scheme = dix.scheme;
  CheckExperimentConfig(config);
  return config;
}

void CheckExperimentConfig(const ExperimentConfig &config) {
  config.synth.Check();
  if (config.ubm_iters < 1) throw Error("ubm_iters must be positive");
  if (config.tv_iters < 1) throw Error("tv_iters must be positive");
  if (config.plda_iters < 1) throw Error("plda_iters must be positive");
  if (config.num_threads < 1) throw Error("threads must be positive");
  if (config.ivector_dim < 1) throw Error("D must be at least 1");
  if (config.lda_dim < 1 || config.lda_dim > config.ivector_dim)
    throw Error("lda_dim must be in [1, D]");
  if (config.dix.num_bases > config.synth.num_components)
    throw Error("Q must not exceed C");
}

const SystemResult &ExperimentResult::System(std::string_view name) const {
  for (const SystemResult &s : systems)
    if (s.name == name) return s;
  throw Error("no system named \"" + std::string(name) + "\"");
}

std::string FormatReport(const std::vector<SystemResult> &systems) {
  std::string out = "metric";
  for (const SystemResult &s : systems) out += '\t' + s.name;
  out += "\neer_percent";
  for (const SystemResult &s : systems) out += '\t' + FormatValue(s.eer.eer);
  out += "\neer_threshold";
  for (const SystemResult &s : systems)
    out += '\t' + FormatValue(s.eer.threshold);
  out += "\nextractor_params";
  for (const SystemResult &s : systems)
    out += '\t' + std::to_string(s.num_params);
  out += "\ntarget_trials";
  for (const SystemResult &s : systems)
    out += '\t' + std::to_string(s.eer.n_target);
  out += "\nnontarget_trials";
  for (const SystemResult &s : systems)
    out += '\t' + std::to_string(s.eer.n_nontarget);
  out += '\n';
  return out;
}

std::vector<double> ScoreTrials(const Backend &backend,
                                std::span<const IVector> ivectors,
                                std::span<const Trial> trials,
                                int num_threads) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ivectors.size(); ++i)
    if (!index.emplace(ivectors[i].utterance_id, i).second)
      throw Error("duplicate i-vector id \"" + ivectors[i].utterance_id + "\"");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(trials.size());
  for (const Trial &t : trials) {
    auto e = index.find(t.enroll), s = index.find(t.test);
    if (e == index.end()) throw Error("no i-vector for \"" + t.enroll + "\"");
    if (s == index.end()) throw Error("no i-vector for \"" + t.test + "\"");
    pairs.emplace_back(e->second, s->second);
  }
  std::vector<Vec> pre(ivectors.size());
  ParallelFor(ivectors.size(), num_threads, [&](std::size_t i) {
    pre[i] = backend.chain.Apply(ivectors[i].phi);
  });
  std::vector<double> scores(trials.size());
  ParallelFor(trials.size(), num_threads, [&](std::size_t i) {
    scores[i] = backend.plda.Score(pre[pairs[i].first], pre[pairs[i].second]);
  });
  return scores;
}

EerResult TrialEer(std::span<const Trial> trials,
                   std::span<const double> scores) {
  std::vector<TrialLabel> labels;
  labels.reserve(trials.size());
  for (const Trial &t : trials) labels.push_back(t.label);
  return ComputeEer(scores, labels);
}

Backend FitBackendOnIvectors(std::span<const IVector> ivectors, int lda_dim,
                             int plda_iters) {
  if (ivectors.empty()) throw Error("no i-vectors to fit the backend on");
  std::map<std::string, int> speakers;
  for (const IVector &iv : ivectors) speakers.emplace(iv.speaker_id, 0);
  int next = 0;
  for (auto &kv : speakers) kv.second = next++;
  Mat x(ivectors[0].phi.size(), static_cast<Eigen::Index>(ivectors.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < ivectors.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = ivectors[i].phi;
    labels.push_back(speakers[ivectors[i].speaker_id]);
  }
  return FitBackend(x, labels, lda_dim, plda_iters);
}

ExperimentResult RunExperiment(
    const ExperimentConfig &config, const std::string &out_dir,
    const std::function<void(const std::string &)> &progress) {
  CheckExperimentConfig(config);
  const int threads = config.num_threads;
  auto note = [&](const std::string &msg) {
    if (progress) progress(msg);
  };
  namespace fs = std::filesystem;
  const bool write = !out_dir.empty();
  if (write) fs::create_directories(out_dir);
  auto path = [&](const std::string &name) {
    return (fs::path(out_dir) / name).string();
  };

  ExperimentResult result;
  std::string metrics;
  auto log = [&](const nlohmann::json &j) { metrics += j.dump() + '\n'; };

  SynthConfig synth = config.synth;
  synth.seed = config.seed;
  auto t0 = Clock::now();
  SynthCorpus corpus = GenerateCorpus(synth, threads);
  log({{"stage", "synth"},
       {"train_utterances", corpus.train.size()},
       {"eval_utterances", corpus.eval.size()},
       {"trials", corpus.trials.size()},
       {"seconds", Seconds(t0)}});
  note("corpus generated");

  t0 = Clock::now();
  UbmTrainConfig ubm_config;
  ubm_config.num_iters = config.ubm_iters;
  ubm_config.seed = config.seed + kUbmSeed;
  ubm_config.num_threads = threads;
  UbmTrainResult ubm = TrainUbm(corpus.train, synth.num_components, ubm_config);
  log({{"stage", "ubm"},
       {"log_likelihood", ubm.log_likelihood.back()},
       {"reseeds", ubm.num_reseeds},
       {"seconds", Seconds(t0)}});
  if (write) WriteUbm(ubm.ubm, path("ubm.gubm"));
  note("UBM trained");

  t0 = Clock::now();
  std::vector<SuffStats> train_stats =
      ComputeStats(ubm.ubm, corpus.train, threads);
  std::vector<SuffStats> eval_stats =
      ComputeStats(ubm.ubm, corpus.eval, threads);
  log({{"stage", "stats"}, {"seconds", Seconds(t0)}});
  if (write) {
    WriteStatsArchive(train_stats, path("train.stats"));
    WriteStatsArchive(eval_stats, path("eval.stats"));
    WriteFileAtomic(path("trials.tsv"), FormatTrials(corpus.trials));
  }

  t0 = Clock::now();
  TvTrainConfig tv_config;
  tv_config.num_iters = config.tv_iters;
  tv_config.seed = config.seed + kTvSeed;
  tv_config.num_threads = threads;
  TvTrainResult tv =
      TrainTotalVariability(train_stats, config.ivector_dim, tv_config);
  log({{"stage", "tv"},
       {"log_likelihood", tv.log_likelihood.back()},
       {"seconds", Seconds(t0)}});
  const FullExtractor &orig = tv.extractor;
  note("generative extractor trained");

  TrainSet set = MakeTrainSet(train_stats, config.dix.min_utts_per_speaker,
                              config.dix.num_cv, config.seed + kTrainSetSeed);
  DixTrainConfig dix = config.dix;
  dix.seed = config.seed + kDixSeed;

  auto evaluate = [&](const std::string &name, const FullExtractor &extractor,
                      std::int64_t params, double sec_per_epoch) {
    auto ts = Clock::now();
    CachedExtractor cached(extractor);
    std::vector<IVector> train_iv = cached.ExtractAll(train_stats, threads);
    std::vector<IVector> eval_iv = cached.ExtractAll(eval_stats, threads);
    Backend backend =
        FitBackendOnIvectors(train_iv, config.lda_dim, config.plda_iters);
    std::vector<double> scores =
        ScoreTrials(backend, eval_iv, corpus.trials, threads);
    SystemResult sys{name, TrialEer(corpus.trials, scores), params,
                     sec_per_epoch};
    if (write) WriteBackend(backend, path("backend_" + name + ".plda"));
    log({{"stage", "evaluate"},
         {"system", name},
         {"eer_percent", sys.eer.eer},
         {"extractor_params", params},
         {"seconds_per_epoch", sec_per_epoch},
         {"seconds", Seconds(ts)}});
    note("system " + name + ": EER " + FormatValue(sys.eer.eer) + "%");
    result.systems.push_back(sys);
  };

  if (write) WriteExtractor(orig, path("extractor_B.ivex"));
  evaluate("B", orig, orig.ParameterCount(), 0.0);

  auto retrain = [&](Scheme scheme, const std::string &tag) {
    auto ts = Clock::now();
    DixTrainResult r = TrainDiscriminative(scheme, orig, set, dix);
    log({{"stage", "train_dix"},
         {"scheme", SchemeName(scheme)},
         {"epochs", r.history.size()},
         {"seconds_per_epoch", r.seconds_per_epoch},
         {"seconds", Seconds(ts)}});
    if (write)
      WriteFileAtomic(path("history_" + tag + ".csv"), HistoryCsv(r.history));
    return r;
  };
  auto write_model = [&](const DixModel &m, const std::string &name) {
    if (!write) return;
    if (m.factorized)
      WriteExtractor(m.dictionary, path("extractor_" + name + ".ivex"));
    else
      WriteExtractor(m.full, path("extractor_" + name + ".ivex"));
  };

  DixTrainResult a = retrain(Scheme::kScheme1, "A");
  write_model(a.init, "A_init");
  write_model(a.model, "A");
  evaluate("A_init", a.init.AsFull(), a.init.ExtractorParameterCount(), 0.0);
  evaluate("A", a.model.AsFull(), a.model.ExtractorParameterCount(),
           a.seconds_per_epoch);

  DixTrainResult r = retrain(Scheme::kScheme2, "R");
  result.phase0_initial_distance = r.init_distance;
  result.phase0_final_distance = Regularizer(r.init.Blocks(), orig.Blocks());
  log({{"stage", "phase0"},
       {"initial_distance", result.phase0_initial_distance},
       {"final_distance", result.phase0_final_distance}});
  write_model(r.init, "R_init");
  write_model(r.model, "R");
  evaluate("R_init", r.init.AsFull(), r.init.ExtractorParameterCount(), 0.0);
  evaluate("R", r.model.AsFull(), r.model.ExtractorParameterCount(),
           r.seconds_per_epoch);

  DixTrainResult f = retrain(Scheme::kFull, "F");
  write_model(f.model, "F");
  evaluate("F", f.model.AsFull(), f.model.ExtractorParameterCount(),
           f.seconds_per_epoch);

  if (a.seconds_per_epoch > 0.0)
    log({{"stage", "speed"},
         {"full_over_scheme1_epoch_time",
          f.seconds_per_epoch / a.seconds_per_epoch},
         {"full_over_scheme2_epoch_time",
          r.seconds_per_epoch > 0.0 ? f.seconds_per_epoch / r.seconds_per_epoch
                                    : 0.0}});

  result.report = FormatReport(result.systems);
  result.metrics = metrics;
  if (write) {
    WriteFileAtomic(path("report.tsv"), result.report);
    WriteFileAtomic(path("metrics.jsonl"), result.metrics);
  }
  return result;
}

}  // namespace ivx
