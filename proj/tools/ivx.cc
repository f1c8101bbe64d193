// tools/ivx.cc

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

// Command-line front end.  One subcommand per pipeline stage:
//
//   ivx synth       --out DIR
//   ivx train-ubm   --features MANIFEST [--C N] [--iters N] --out UBM
//   ivx stats       --ubm UBM --features MANIFEST --out STATS
//   ivx train-tv    --stats STATS [--D N] [--iters N] --out EXTRACTOR
//   ivx factorize   --extractor EXTRACTOR [--Q N] --out EXTRACTOR
//   ivx train-dix   [--scheme {1,2,full}] --extractor T_ORIG --stats STATS
//                   [--Q N] [--init-out EXTRACTOR] [--history CSV]
//                   --out EXTRACTOR
//   ivx extract     --extractor EXTRACTOR (--stats STATS | --ubm UBM
//                   --features MANIFEST) --out DIR
//   ivx backend     --ivectors MANIFEST [--lda-dim N] --out BACKEND
//   ivx eval        --backend BACKEND --ivectors MANIFEST --trials TRIALS
//                   --out SCORES
//   ivx report      --trials TRIALS --system NAME:EXTRACTOR:SCORES ...
//                   --out REPORT
//   ivx experiment  [--D N] [--Q N] --out DIR
//
// Every subcommand also takes --config (the key=value experiment config
// whose values serve as defaults), --seed and --threads.  Stage seeds are
// derived from the config seed exactly as in the experiment.  Relative
// paths are resolved against $IVX_DATA_ROOT when it is set.  Failures
// print a single "error: ..." line and exit nonzero.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ivx/archive.h"
#include "ivx/backend.h"
#include "ivx/dix-training.h"
#include "ivx/eer.h"
#include "ivx/experiment.h"
#include "ivx/extractor.h"
#include "ivx/gmm.h"
#include "ivx/io.h"
#include "ivx/synth.h"
#include "ivx/tv-training.h"

namespace {

namespace fs = std::filesystem;
using namespace ivx;

std::string Resolve(const std::string &path) {
  if (path.empty()) return path;
  const char *root = std::getenv("IVX_DATA_ROOT");
  if (root == nullptr || *root == '\0' || fs::path(path).is_absolute())
    return path;
  return (fs::path(root) / path).string();
}

std::string Input(const std::string &path) {
  std::string p = Resolve(path);
  if (!fs::exists(p)) throw Error(p + ": no such file or directory");
  return p;
}

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;
};

void AddCommon(CLI::App *cmd, Common *c) {
  cmd->add_option("--out", c->out, "Output path")->required();
  cmd->add_option("--config", c->config, "key=value config");
  cmd->add_option("--seed", c->seed, "Random seed");
  cmd->add_option("--threads", c->threads, "Worker threads")
      ->check(CLI::PositiveNumber);
}

void Ensure(bool ok, const std::string &message) {
  if (!ok) throw Error(message);
}

void CheckStats(const std::vector<SuffStats> &stats, const std::string &what) {
  Ensure(!stats.empty(), what + ": no utterances");
}

std::vector<SuffStats> StatsFromFeatures(const std::string &ubm_path,
                                         const std::string &manifest,
                                         int threads) {
  GmmUbm ubm = ReadUbm(ubm_path);
  std::vector<FeatureMatrix> feats = ReadFeatureArchive(manifest);
  std::vector<SuffStats> st(feats.size());
  ParallelFor(feats.size(), threads, [&](std::size_t i) {
    st[i] = AccumulateStats(ubm, feats[i]);
  });
  return st;
}

// NAME:EXTRACTOR:SCORES
SystemResult ReportRow(const std::string &entry,
                       const std::vector<Trial> &trials) {
  auto a = entry.find(':');
  auto b = a == std::string::npos ? a : entry.find(':', a + 1);
  Ensure(b != std::string::npos && a > 0,
         "--system expects NAME:EXTRACTOR:SCORES, got \"" + entry + "\"");
  SystemResult row;
  row.name = entry.substr(0, a);
  ExtractorFile file = ReadExtractor(Input(entry.substr(a + 1, b - a - 1)));
  row.num_params = file.factorized ? file.dictionary.ParameterCount()
                                   : file.full.ParameterCount();
  std::string scores_path = Input(entry.substr(b + 1));
  std::vector<double> scores =
      ParseScores(ReadFileBytes(scores_path), trials, scores_path);
  row.eer = TrialEer(trials, scores);
  return row;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"i-vector extraction and discriminative retraining"};
  app.require_subcommand(1);

  Common c;
  int C = 0, D = 0, Q = 0, iters = 0, lda_dim = 0, plda_iters = 0;
  std::string features, ubm_path, stats_path, extractor_path, ivectors_path,
      backend_path, trials_path, scheme_text, init_out, history_out;
  std::vector<std::string> systems;

  auto *synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  AddCommon(synth, &c);

  auto *train_ubm = app.add_subcommand("train-ubm", "Train a diagonal UBM");
  AddCommon(train_ubm, &c);
  train_ubm->add_option("--features", features, "Feature manifest")->required();
  train_ubm->add_option("--C", C, "Number of components")
      ->check(CLI::PositiveNumber);
  train_ubm->add_option("--iters", iters, "EM iterations")
      ->check(CLI::PositiveNumber);

  auto *stats = app.add_subcommand("stats", "Accumulate statistics");
  AddCommon(stats, &c);
  stats->add_option("--ubm", ubm_path, "UBM file")->required();
  stats->add_option("--features", features, "Feature manifest")->required();

  auto *train_tv = app.add_subcommand("train-tv", "Train a generative extractor");
  AddCommon(train_tv, &c);
  train_tv->add_option("--stats", stats_path, "Statistics archive")->required();
  train_tv->add_option("--D", D, "i-vector dimension")
      ->check(CLI::PositiveNumber);
  train_tv->add_option("--iters", iters, "EM iterations")
      ->check(CLI::PositiveNumber);

  auto *factorize = app.add_subcommand("factorize",
                                       "Scheme-1 dictionary factorization");
  AddCommon(factorize, &c);
  factorize->add_option("--extractor", extractor_path, "Full extractor")
      ->required();
  factorize->add_option("--Q", Q, "Number of bases");

  auto *train_dix = app.add_subcommand("train-dix", "Discriminative retraining");
  AddCommon(train_dix, &c);
  train_dix->add_option("--scheme", scheme_text, "1, 2 or full");
  train_dix->add_option("--extractor", extractor_path, "Generative extractor")
      ->required();
  train_dix->add_option("--stats", stats_path, "Training statistics")
      ->required();
  train_dix->add_option("--Q", Q, "Number of bases");
  train_dix->add_option("--init-out", init_out, "Write the initial extractor");
  train_dix->add_option("--history", history_out, "Write the training history");

  auto *extract = app.add_subcommand("extract", "Extract i-vectors");
  AddCommon(extract, &c);
  extract->add_option("--extractor", extractor_path, "Extractor")->required();
  extract->add_option("--stats", stats_path, "Statistics archive");
  extract->add_option("--ubm", ubm_path, "UBM (with --features)");
  extract->add_option("--features", features, "Feature manifest");

  auto *backend = app.add_subcommand("backend", "Fit LDA + PLDA");
  AddCommon(backend, &c);
  backend->add_option("--ivectors", ivectors_path, "i-vector manifest")
      ->required();
  backend->add_option("--lda-dim", lda_dim, "LDA dimension")
      ->check(CLI::PositiveNumber);
  backend->add_option("--plda-iters", plda_iters, "PLDA EM iterations")
      ->check(CLI::PositiveNumber);

  auto *eval = app.add_subcommand("eval", "Score trials and report the EER");
  AddCommon(eval, &c);
  eval->add_option("--backend", backend_path, "Backend file")->required();
  eval->add_option("--ivectors", ivectors_path, "i-vector manifest")
      ->required();
  eval->add_option("--trials", trials_path, "Trial list")->required();

  auto *report = app.add_subcommand("report", "Tabulate EERs of systems");
  AddCommon(report, &c);
  report->add_option("--trials", trials_path, "Trial list")->required();
  report->add_option("--system", systems, "NAME:EXTRACTOR:SCORES")
      ->required();

  auto *experiment = app.add_subcommand("experiment",
                                        "Run the full desk experiment");
  AddCommon(experiment, &c);
  experiment->add_option("--D", D, "i-vector dimension")
      ->check(CLI::PositiveNumber);
  experiment->add_option("--Q", Q, "Number of bases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::string msg = e.what();
    for (char &ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }
  CLI::App *cmd = app.get_subcommands().front();

  try {
    ExperimentConfig cfg = ParseExperimentConfig(
        c.config.empty() ? std::string() : ReadFileBytes(Input(c.config)));
    if (cmd->count("--seed") > 0) cfg.seed = c.seed;
    if (cmd->count("--threads") > 0) cfg.num_threads = c.threads;
    const int threads = cfg.num_threads;
    const std::string out = Resolve(c.out);

    if (*synth) {
      SynthConfig s = cfg.synth;
      s.seed = cfg.seed;
      SynthCorpus corpus = GenerateCorpus(s, threads);
      fs::create_directories(out);
      WriteFeatureArchive(corpus.train, (fs::path(out) / "train").string());
      WriteFeatureArchive(corpus.eval, (fs::path(out) / "eval").string());
      WriteFileAtomic(fs::path(out) / "trials.tsv",
                      FormatTrials(corpus.trials));
    } else if (*train_ubm) {
      std::vector<FeatureMatrix> feats = ReadFeatureArchive(Input(features));
      UbmTrainConfig config;
      config.seed = cfg.seed + kUbmSeed;
      config.num_threads = threads;
      config.num_iters = iters > 0 ? iters : cfg.ubm_iters;
      WriteUbm(TrainUbm(feats, C > 0 ? C : cfg.synth.num_components, config)
                   .ubm,
               out);
    } else if (*stats) {
      WriteStatsArchive(
          StatsFromFeatures(Input(ubm_path), Input(features), threads), out);
    } else if (*train_tv) {
      std::string in = Input(stats_path);
      std::vector<SuffStats> st = ReadStatsArchive(in);
      CheckStats(st, in);
      TvTrainConfig config;
      config.seed = cfg.seed + kTvSeed;
      config.num_threads = threads;
      config.num_iters = iters > 0 ? iters : cfg.tv_iters;
      WriteExtractor(
          TrainTotalVariability(st, D > 0 ? D : cfg.ivector_dim, config)
              .extractor,
          out);
    } else if (*factorize) {
      std::string in = Input(extractor_path);
      ExtractorFile file = ReadExtractor(in);
      Ensure(!file.factorized, in + ": expected a full extractor");
      WriteExtractor(Factorize(file.full, Q > 0 ? Q : cfg.dix.num_bases), out);
    } else if (*train_dix) {
      Scheme scheme =
          scheme_text.empty() ? cfg.scheme : ParseScheme(scheme_text);
      DixTrainConfig config = cfg.dix;
      if (Q > 0) config.num_bases = Q;
      config.seed = cfg.seed + kDixSeed;
      std::string ext_in = Input(extractor_path), stats_in = Input(stats_path);
      ExtractorFile file = ReadExtractor(ext_in);
      Ensure(!file.factorized,
             ext_in + ": expected a full (generative) extractor");
      if (scheme != Scheme::kFull)
        Ensure(config.num_bases <= file.full.NumComponents(),
               "Q must not exceed C");
      std::vector<SuffStats> st = ReadStatsArchive(stats_in);
      CheckStats(st, stats_in);
      TrainSet set =
          MakeTrainSet(std::move(st), config.min_utts_per_speaker,
                       config.num_cv, cfg.seed + kTrainSetSeed);
      DixTrainResult r = TrainDiscriminative(scheme, file.full, set, config);
      auto save = [&](const DixModel &m, const std::string &path) {
        if (m.factorized) WriteExtractor(m.dictionary, path);
        else WriteExtractor(m.full, path);
      };
      save(r.model, out);
      if (!init_out.empty()) save(r.init, Resolve(init_out));
      if (!history_out.empty())
        WriteFileAtomic(Resolve(history_out), HistoryCsv(r.history));
    } else if (*extract) {
      ExtractorFile file = ReadExtractor(Input(extractor_path));
      std::vector<SuffStats> st;
      if (!stats_path.empty()) {
        st = ReadStatsArchive(Input(stats_path));
      } else {
        Ensure(!features.empty() && !ubm_path.empty(),
               "extract needs --stats or both --ubm and --features");
        st = StatsFromFeatures(Input(ubm_path), Input(features), threads);
      }
      CachedExtractor cached = file.factorized
                                   ? CachedExtractor(file.dictionary)
                                   : CachedExtractor(file.full);
      WriteIvectorArchive(cached.ExtractAll(st, threads), out);
    } else if (*backend) {
      std::vector<IVector> ivs = ReadIvectorArchive(Input(ivectors_path));
      WriteBackend(FitBackendOnIvectors(ivs, lda_dim > 0 ? lda_dim : cfg.lda_dim,
                                        plda_iters > 0 ? plda_iters
                                                       : cfg.plda_iters),
                   out);
    } else if (*eval) {
      std::string b_in = Input(backend_path), iv_in = Input(ivectors_path),
                  tr_in = Input(trials_path);
      Backend b = ReadBackend(b_in);
      std::vector<IVector> ivs = ReadIvectorArchive(iv_in);
      std::vector<Trial> trials = ParseTrials(ReadFileBytes(tr_in), tr_in);
      std::vector<double> scores = ScoreTrials(b, ivs, trials, threads);
      WriteFileAtomic(out, FormatScores(trials, scores));
      bool labelled = !trials.empty();
      for (const Trial &t : trials)
        labelled &= t.label != TrialLabel::kUnknown;
      if (labelled) {
        EerResult e = TrialEer(trials, scores);
        std::printf("eer_percent=%.4f threshold=%.6f targets=%zu "
                    "nontargets=%zu\n",
                    e.eer, e.threshold, e.n_target, e.n_nontarget);
      }
    } else if (*report) {
      std::string tr_in = Input(trials_path);
      std::vector<Trial> trials = ParseTrials(ReadFileBytes(tr_in), tr_in);
      std::vector<SystemResult> rows;
      for (const std::string &entry : systems)
        rows.push_back(ReportRow(entry, trials));
      std::string table = FormatReport(rows);
      WriteFileAtomic(out, table);
      std::cout << table;
    } else if (*experiment) {
      if (D > 0) cfg.ivector_dim = D;
      if (Q > 0) cfg.dix.num_bases = Q;
      CheckExperimentConfig(cfg);
      ExperimentResult r = RunExperiment(
          cfg, out, [](const std::string &m) { std::cerr << m << "\n"; });
      std::cout << r.report;
    }
  } catch (const std::exception &e) {
    std::string msg = e.what();
    for (char &ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
