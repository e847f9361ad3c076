// Copyright (c) 2026 The xmodal-reid Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <random>

#include "xmr/backbone.h"
#include "xmr/config.h"
#include "xmr/tensor.h"

namespace xmr::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double std = 1.0) {
  std::normal_distribution<double> n(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline SequenceFeatures random_sequence(std::mt19937_64& rng, int frames, int tokens, int dim,
                                        Modality modality = Modality::kRgb) {
  SequenceFeatures s;
  s.modality = modality;
  for (int t = 0; t < frames; ++t) s.frames.push_back({random_matrix(rng, tokens, dim), t});
  return s;
}

inline bool same_tokens(const SequenceFeatures& a, const SequenceFeatures& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    if (a.frames[t].tokens.rows() != b.frames[t].tokens.rows()) return false;
    if (a.frames[t].tokens != b.frames[t].tokens) return false;
  }
  return true;
}

// Small model used across tests: D=16, h=4, k=2, N=8.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.dim = 16;
  c.heads = 4;
  c.temporal_heads = 2;
  c.basic_layers = 1;
  c.stg_layers = 1;
  c.frames = 4;
  c.classifier_classes = 4;
  c.prompt_tokens = 2;
  c.text_layers = 1;
  return c;
}

}  // namespace xmr::testing
