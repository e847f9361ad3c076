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

#include "xmr/semantic_diffusion.h"

#include <cmath>

#include "xmr/errors.h"

namespace xmr {

PromptSet make_prompt_set(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  PromptSet p;
  p.m = cfg.prompt_tokens;
  p.identities = cfg.classifier_classes;
  p.template_tokens = &store.add("text_encoder.template", kPromptPrefixTokens + kPromptSuffixTokens, cfg.dim,
                                 Init::kTruncNormal, rng, false, 0.02);
  p.learnable = &store.add("prompt.table", p.identities * p.m, cfg.dim, Init::kTruncNormal, rng, true, 0.02);
  return p;
}

TextEncoderParams make_text_encoder(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  // Xavier-scale weights so the frozen random encoder actually mixes tokens.
  const double std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  TextEncoderParams e;
  e.heads = cfg.heads;
  e.pos = &store.add("text_encoder.pos", kPromptPrefixTokens + cfg.prompt_tokens + kPromptSuffixTokens, cfg.dim,
                     Init::kTruncNormal, rng, false, 0.01);
  for (int i = 0; i < cfg.text_layers; ++i) {
    e.blocks.push_back(make_block_params(store, "text_encoder.blocks." + std::to_string(i), cfg.dim, cfg.mlp_ratio,
                                         rng, false, std));
  }
  e.ln_gamma = &store.add("text_encoder.ln_final.gamma", 1, cfg.dim, Init::kOnes, rng, false);
  e.ln_beta = &store.add("text_encoder.ln_final.beta", 1, cfg.dim, Init::kZeros, rng, false);
  e.proj = &store.add("text_encoder.proj", cfg.dim, cfg.dim, Init::kTruncNormal, rng, false, std);
  return e;
}

ad::Var encode_prompts(ad::Tape& tape, const PromptSet& prompts, const TextEncoderParams& enc,
                       std::span<const int> identities) {
  XMR_CHECK_CONFIG(!identities.empty(), "encode_prompts: no identities");
  const int len = prompts.length();
  const int n = static_cast<int>(identities.size());
  // Rows of [template; learnable] stacked, gathered into prompt order.
  const int n_template = kPromptPrefixTokens + kPromptSuffixTokens;
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(n * len));
  for (int id : identities) {
    if (id < 0 || id >= prompts.identities) {
      throw ConfigError("encode_prompts: no prompt for identity " + std::to_string(id));
    }
    for (int i = 0; i < kPromptPrefixTokens; ++i) idx.push_back(i);
    for (int j = 0; j < prompts.m; ++j) idx.push_back(n_template + id * prompts.m + j);
    for (int i = 0; i < kPromptSuffixTokens; ++i) idx.push_back(kPromptPrefixTokens + i);
  }
  std::vector<ad::Var> parts{tape.param(*prompts.template_tokens)};
  if (prompts.m > 0) parts.push_back(tape.param(*prompts.learnable));
  ad::Var tokens = ad::gather_rows(ad::vstack(parts), std::move(idx));

  std::vector<int> pos_idx(static_cast<std::size_t>(n * len));
  for (std::size_t r = 0; r < pos_idx.size(); ++r) pos_idx[r] = static_cast<int>(r) % len;
  ad::Var x = ad::add(tokens, ad::gather_rows(tape.param(*enc.pos), std::move(pos_idx)));

  ad::AttentionLayout attn;
  attn.frames = n;
  attn.query_rows = len;
  attn.key_rows = len;
  attn.heads = enc.heads;
  for (const auto& block : enc.blocks) x = transformer_block(tape, block, x, attn);
  x = ad::layer_norm(x, tape.param(*enc.ln_gamma), tape.param(*enc.ln_beta));

  std::vector<int> last(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) last[static_cast<std::size_t>(i)] = i * len + len - 1;
  return ad::matmul(ad::gather_rows(x, std::move(last)), tape.param(*enc.proj));
}

RowVector encode_prompt(int identity, const PromptSet& prompts, const TextEncoderParams& enc) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  const int ids[] = {identity};
  return encode_prompts(tape, prompts, enc, ids).value().row(0);
}

DiffusionParams make_diffusion_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng,
                                      double init_std) {
  DiffusionParams p;
  p.query = &store.add("sd.query", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  p.key = &store.add("sd.key", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  p.value = &store.add("sd.value", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  return p;
}

SequenceBatch diffuse(ad::Tape& tape, const DiffusionParams& p, const ad::Var& text, const SequenceBatch& x) {
  const TokenLayout& l = x.layout;
  XMR_CHECK_CONFIG(text.cols() == x.tokens.cols(), "diffuse: text embedding width does not match token width");
  XMR_CHECK_CONFIG(text.rows() == l.sequences, "diffuse: need one text embedding per sequence");
  const int frames = l.sequences * l.frames;

  ad::Var q = ad::matmul(text, tape.param(*p.query));
  std::vector<int> per_frame(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) per_frame[static_cast<std::size_t>(f)] = f / l.frames;
  q = ad::gather_rows(q, std::move(per_frame));
  ad::Var k = ad::matmul(x.tokens, tape.param(*p.key));
  ad::Var v = ad::matmul(x.tokens, tape.param(*p.value));

  ad::AttentionLayout attn;
  attn.frames = frames;
  attn.query_rows = 1;
  attn.key_rows = l.tokens;
  attn.heads = 1;
  ad::Var z = ad::attention(q, k, v, attn);

  // [z; tokens] -> per frame: z row first, then that frame's original rows.
  TokenLayout out_layout = l;
  out_layout.tokens = l.tokens + 1;
  out_layout.cls_index = l.cls_index + 1;
  std::vector<int> idx(static_cast<std::size_t>(out_layout.rows()));
  for (int s = 0; s < l.sequences; ++s) {
    for (int t = 0; t < l.frames; ++t) {
      idx[static_cast<std::size_t>(out_layout.row(s, t, 0))] = s * l.frames + t;
      for (int i = 0; i < l.tokens; ++i) {
        idx[static_cast<std::size_t>(out_layout.row(s, t, i + 1))] = frames + l.row(s, t, i);
      }
    }
  }
  const ad::Var parts[] = {z, x.tokens};
  return {ad::gather_rows(ad::vstack(parts), std::move(idx)), out_layout};
}

SequenceFeatures diffuse(const RowVector& text, const SequenceFeatures& seq, const DiffusionParams& p) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  SequenceBatch b = to_batch(tape, std::span(&seq, 1));
  ad::Var t = tape.constant(Matrix(text));
  return from_batch(diffuse(tape, p, t, b), seq.modality).front();
}

}  // namespace xmr
