// ivx/synth.h

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

#ifndef IVX_SYNTH_H_
#define IVX_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "ivx/backend.h"
#include "ivx/gmm.h"

namespace ivx {

/// Synthetic corpus: frames from a GMM whose component means are shifted,
/// per utterance, by a speaker factor (fixed per speaker) and a channel
/// factor through a planted subspace.
struct SynthConfig {
  int n_speakers = 200;
  int utts_per_speaker = 8;
  int eval_speakers = 100;
  int eval_utts_per_speaker = 4;
  int frames_min = 300;
  int frames_max = 600;
  int num_components = 64;
  int feat_dim = 12;
  /// Planted subspace dimension; the first speaker_dims columns carry the
  /// speaker factor, the rest the channel factor.
  int true_dim = 24;
  int speaker_dims = 12;
  double speaker_scale = 1.0;
  double channel_scale = 1.0;
  /// When positive, the normalized planted blocks are combinations of this
  /// many shared matrices plus `dictionary_noise` of unstructured residual.
  int dictionary_rank = 0;
  double dictionary_noise = 0.1;
  /// Extra unstructured residual on the speaker columns only, relative to
  /// the planted entry scale.
  double speaker_residual = 0.0;
  /// Spread of the component means and range of the variances.
  double mean_spread = 3.0;
  std::uint64_t seed = 42;

  void Check() const;
};

struct SynthModel {
  GmmUbm ubm;
  /// Planted normalized blocks, F x true_dim each.
  std::vector<Mat> normalized_blocks;
};

struct SynthCorpus {
  SynthModel model;
  std::vector<FeatureMatrix> train;
  std::vector<FeatureMatrix> eval;
  /// Every unordered pair of evaluation utterances.
  std::vector<Trial> trials;
};

SynthModel GenerateModel(const SynthConfig &config);

/// Pure function of the config: the same seed gives bit-identical data.
SynthCorpus GenerateCorpus(const SynthConfig &config, int num_threads = 1);

}  // namespace ivx

#endif  // IVX_SYNTH_H_
