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
#include <string>
#include <vector>

#include "xmr/autograd.h"
#include "xmr/config.h"
#include "xmr/params.h"
#include "xmr/synth_data.h"
#include "xmr/tensor.h"

namespace xmr {

enum class Modality { kRgb = 0, kIr = 1 };

// One frame's tokens, row 0 is [cls] unless noted by the owning sequence.
struct TokenGrid {
  Matrix tokens;
  int frame_index = 0;
};

struct SequenceFeatures {
  std::vector<TokenGrid> frames;
  Modality modality = Modality::kRgb;
  int cls_index = 0;
};

// Row layout of a batch of sequences stacked into one matrix: rows are ordered
// (sequence, frame, token).
struct TokenLayout {
  int sequences = 0;
  int frames = 0;
  int tokens = 0;
  int cls_index = 0;

  int rows() const { return sequences * frames * tokens; }
  int row(int s, int t, int i) const { return (s * frames + t) * tokens + i; }
};

struct SequenceBatch {
  ad::Var tokens;
  TokenLayout layout;
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct BlockParams {
  Parameter* ln1_gamma = nullptr;
  Parameter* ln1_beta = nullptr;
  Parameter* q_weight = nullptr;
  Parameter* q_bias = nullptr;
  Parameter* k_weight = nullptr;
  Parameter* k_bias = nullptr;
  Parameter* v_weight = nullptr;
  Parameter* v_bias = nullptr;
  Parameter* out_weight = nullptr;
  Parameter* out_bias = nullptr;
  Parameter* ln2_gamma = nullptr;
  Parameter* ln2_beta = nullptr;
  Parameter* fc1_weight = nullptr;
  Parameter* fc1_bias = nullptr;
  Parameter* fc2_weight = nullptr;
  Parameter* fc2_bias = nullptr;

  std::vector<const Parameter*> list() const;
  std::size_t count() const;
};

BlockParams make_block_params(ParameterStore& store, const std::string& prefix, int dim, int mlp_ratio,
                              std::mt19937_64& rng, bool trainable = true, double init_std = 0.02);

// Test hook: kIdentity makes the block return its input unchanged.
enum class BlockMode { kFull, kIdentity };

// Plain intra-frame attention for every head.
ad::AttentionLayout spatial_layout(const TokenLayout& layout, int heads);
// Heads j < offsets.size() attend frame (t + offsets[j]) mod T of the same
// sequence; the remaining heads stay intra-frame.
ad::AttentionLayout grouped_layout(const TokenLayout& layout, int heads, std::span<const int> offsets);

ad::Var transformer_block(ad::Tape& tape, const BlockParams& p, const ad::Var& x, const ad::AttentionLayout& attn,
                          BlockMode mode = BlockMode::kFull);

// Per-token temporal source offset in {-1, 0, +1}; entry 0 is [cls] and must be 0.
using ShiftSpec = std::vector<int>;

ShiftSpec default_shift_spec(int tokens, ShiftRatio ratio);
ShiftSpec inverse_shift_spec(const ShiftSpec& spec);
void validate_shift_spec(const ShiftSpec& spec, int tokens);
// Gather index realising Z[s,t,i] = X[s, (t + spec[i]) mod T, i].
std::vector<int> shift_gather_index(const TokenLayout& layout, const ShiftSpec& spec);

struct VisionParams {
  Parameter* patch_weight = nullptr;
  Parameter* patch_bias = nullptr;
  Parameter* cls = nullptr;
  Parameter* pos = nullptr;
  std::vector<BlockParams> basic;
  std::vector<BlockParams> stg;
  BlockParams tps;
};

VisionParams make_vision_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng,
                                double init_std = 0.02);

// Rows (sequence, frame, patch) of flattened patch pixels, patch pixels in
// (dy, dx, channel) order.
Matrix patchify(std::span<const std::vector<Frame>* const> sequences, const ModelConfig& cfg);

SequenceBatch patchify_and_embed(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg,
                                 std::span<const std::vector<Frame>* const> sequences);
SequenceBatch basic_encode(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg, const SequenceBatch& x);
SequenceBatch stg_block(ad::Tape& tape, const BlockParams& p, int heads, std::span<const int> offsets,
                        const SequenceBatch& x);
SequenceBatch stg_encode(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg, const SequenceBatch& x);
SequenceBatch tps_shift(const SequenceBatch& x, const ShiftSpec& spec);
SequenceBatch tps_block(ad::Tape& tape, const BlockParams& p, int heads, const ShiftSpec& spec,
                        const SequenceBatch& x, BlockMode mode = BlockMode::kFull);
// Temporal average of the rows at layout.cls_index: one D-row per sequence.
ad::Var tap_cls(const SequenceBatch& x);

// Rows [first, first + count) of the sequence axis.
SequenceBatch slice_sequences(const SequenceBatch& x, int first, int count);

// Value-level conversions used by the single-sequence API below.
SequenceBatch to_batch(ad::Tape& tape, std::span<const SequenceFeatures> seqs);
std::vector<SequenceFeatures> from_batch(const SequenceBatch& x, Modality modality);

TokenGrid patchify_and_embed(const Frame& frame, const VisionParams& p, const ModelConfig& cfg);
SequenceFeatures vanilla_block(const SequenceFeatures& seq, const BlockParams& p, int heads);
SequenceFeatures basic_encode(const SequenceFeatures& seq, const VisionParams& p, const ModelConfig& cfg);
SequenceFeatures stg_block(const SequenceFeatures& seq, int temporal_heads, std::span<const int> offsets,
                           const BlockParams& p, int heads);
SequenceFeatures tps_shift(const SequenceFeatures& seq, const ShiftSpec& spec);
SequenceFeatures tps_block(const SequenceFeatures& seq, const ShiftSpec& spec, const BlockParams& p, int heads,
                           BlockMode mode = BlockMode::kFull);
RowVector stg_sequence_feature(const SequenceFeatures& seq);

}  // namespace xmr
