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
#include <span>
#include <vector>

#include "xmr/autograd.h"
#include "xmr/backbone.h"
#include "xmr/config.h"
#include "xmr/params.h"

namespace xmr {

// Template "A [X]1 ... [X]m person observed in both day and night conditions."
// as fixed token embeddings around m learnable per-identity tokens.
inline constexpr int kPromptPrefixTokens = 1;
inline constexpr int kPromptSuffixTokens = 9;

struct PromptSet {
  Parameter* template_tokens = nullptr;  // frozen, (prefix + suffix) x D
  Parameter* learnable = nullptr;        // trainable, (identities * m) x D
  int m = 0;
  int identities = 0;

  int length() const { return kPromptPrefixTokens + m + kPromptSuffixTokens; }
};

// Frozen text encoder: positional embedding, transformer blocks without a
// causal mask, final layer norm, and a projection of the last token to D.
struct TextEncoderParams {
  Parameter* pos = nullptr;
  std::vector<BlockParams> blocks;
  Parameter* ln_gamma = nullptr;
  Parameter* ln_beta = nullptr;
  Parameter* proj = nullptr;
  int heads = 1;
};

PromptSet make_prompt_set(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);
TextEncoderParams make_text_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng);

// One text embedding row per identity, in the given order.
ad::Var encode_prompts(ad::Tape& tape, const PromptSet& prompts, const TextEncoderParams& enc,
                       std::span<const int> identities);
RowVector encode_prompt(int identity, const PromptSet& prompts, const TextEncoderParams& enc);

struct DiffusionParams {
  Parameter* query = nullptr;
  Parameter* key = nullptr;
  Parameter* value = nullptr;
};

DiffusionParams make_diffusion_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng,
                                      double init_std = 0.02);

// text has one row per sequence of x. Prepends one diffused token per frame;
// the original rows follow unchanged and cls_index moves down by one.
SequenceBatch diffuse(ad::Tape& tape, const DiffusionParams& p, const ad::Var& text, const SequenceBatch& x);
SequenceFeatures diffuse(const RowVector& text, const SequenceFeatures& seq, const DiffusionParams& p);

}  // namespace xmr
