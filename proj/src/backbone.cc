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

#include "xmr/backbone.h"

#include <cmath>
#include <numeric>

#include "xmr/errors.h"

namespace xmr {

namespace {

int wrap(int t, int n) { return ((t % n) + n) % n; }

}  // namespace

std::vector<const Parameter*> BlockParams::list() const {
  return {ln1_gamma, ln1_beta, q_weight, q_bias,     k_weight,  k_bias,     v_weight,   v_bias,
          out_weight, out_bias, ln2_gamma, ln2_beta, fc1_weight, fc1_bias, fc2_weight, fc2_bias};
}

std::size_t BlockParams::count() const {
  std::size_t n = 0;
  for (const Parameter* p : list()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

BlockParams make_block_params(ParameterStore& store, const std::string& prefix, int dim, int mlp_ratio,
                              std::mt19937_64& rng, bool trainable, double init_std) {
  auto add = [&](const std::string& name, int rows, int cols, Init init) {
    return &store.add(prefix + "." + name, rows, cols, init, rng, trainable, init_std);
  };
  const int hidden = dim * mlp_ratio;
  BlockParams b;
  b.ln1_gamma = add("ln1.gamma", 1, dim, Init::kOnes);
  b.ln1_beta = add("ln1.beta", 1, dim, Init::kZeros);
  b.q_weight = add("attn.q.weight", dim, dim, Init::kTruncNormal);
  b.q_bias = add("attn.q.bias", 1, dim, Init::kZeros);
  b.k_weight = add("attn.k.weight", dim, dim, Init::kTruncNormal);
  b.k_bias = add("attn.k.bias", 1, dim, Init::kZeros);
  b.v_weight = add("attn.v.weight", dim, dim, Init::kTruncNormal);
  b.v_bias = add("attn.v.bias", 1, dim, Init::kZeros);
  b.out_weight = add("attn.out.weight", dim, dim, Init::kTruncNormal);
  b.out_bias = add("attn.out.bias", 1, dim, Init::kZeros);
  b.ln2_gamma = add("ln2.gamma", 1, dim, Init::kOnes);
  b.ln2_beta = add("ln2.beta", 1, dim, Init::kZeros);
  b.fc1_weight = add("mlp.fc1.weight", dim, hidden, Init::kTruncNormal);
  b.fc1_bias = add("mlp.fc1.bias", 1, hidden, Init::kZeros);
  b.fc2_weight = add("mlp.fc2.weight", hidden, dim, Init::kTruncNormal);
  b.fc2_bias = add("mlp.fc2.bias", 1, dim, Init::kZeros);
  return b;
}

ad::AttentionLayout spatial_layout(const TokenLayout& layout, int heads) {
  ad::AttentionLayout a;
  a.frames = layout.sequences * layout.frames;
  a.query_rows = layout.tokens;
  a.key_rows = layout.tokens;
  a.heads = heads;
  return a;
}

ad::AttentionLayout grouped_layout(const TokenLayout& layout, int heads, std::span<const int> offsets) {
  XMR_CHECK_CONFIG(static_cast<int>(offsets.size()) <= heads, "grouped_layout: more temporal heads than heads");
  ad::AttentionLayout a = spatial_layout(layout, heads);
  a.key_frame.assign(static_cast<std::size_t>(heads), std::vector<int>(static_cast<std::size_t>(a.frames)));
  for (int h = 0; h < heads; ++h) {
    const int offset = h < static_cast<int>(offsets.size()) ? offsets[static_cast<std::size_t>(h)] : 0;
    for (int s = 0; s < layout.sequences; ++s) {
      for (int t = 0; t < layout.frames; ++t) {
        a.key_frame[static_cast<std::size_t>(h)][static_cast<std::size_t>(s * layout.frames + t)] =
            s * layout.frames + wrap(t + offset, layout.frames);
      }
    }
  }
  return a;
}

ad::Var transformer_block(ad::Tape& tape, const BlockParams& p, const ad::Var& x, const ad::AttentionLayout& attn,
                          BlockMode mode) {
  if (mode == BlockMode::kIdentity) return x;
  auto P = [&](Parameter* param) { return tape.param(*param); };
  ad::Var h = ad::layer_norm(x, P(p.ln1_gamma), P(p.ln1_beta));
  ad::Var q = ad::linear(h, P(p.q_weight), P(p.q_bias));
  ad::Var k = ad::linear(h, P(p.k_weight), P(p.k_bias));
  ad::Var v = ad::linear(h, P(p.v_weight), P(p.v_bias));
  ad::Var a = ad::attention(q, k, v, attn);
  ad::Var y = ad::add(x, ad::linear(a, P(p.out_weight), P(p.out_bias)));
  ad::Var m = ad::layer_norm(y, P(p.ln2_gamma), P(p.ln2_beta));
  m = ad::gelu(ad::linear(m, P(p.fc1_weight), P(p.fc1_bias)));
  return ad::add(y, ad::linear(m, P(p.fc2_weight), P(p.fc2_bias)));
}

ShiftSpec default_shift_spec(int tokens, ShiftRatio ratio) {
  ShiftSpec spec(static_cast<std::size_t>(tokens), 0);
  if (ratio.num == 0) return spec;
  for (int i = 1; i < tokens; ++i) {
    const int r = i % ratio.den;
    if (r >= 1 && r <= ratio.num) {
      spec[static_cast<std::size_t>(i)] = -1;
    } else if (r >= ratio.den - ratio.num) {
      spec[static_cast<std::size_t>(i)] = +1;
    }
  }
  return spec;
}

ShiftSpec inverse_shift_spec(const ShiftSpec& spec) {
  ShiftSpec out(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) out[i] = -spec[i];
  return out;
}

void validate_shift_spec(const ShiftSpec& spec, int tokens) {
  XMR_CHECK_CONFIG(static_cast<int>(spec.size()) == tokens, "shift spec must assign one source per token");
  XMR_CHECK_CONFIG(spec.empty() || spec[0] == 0, "shift spec must not move the [cls] token");
  for (int d : spec) XMR_CHECK_CONFIG(d >= -1 && d <= 1, "shift spec sources must be t-1, t or t+1");
}

std::vector<int> shift_gather_index(const TokenLayout& layout, const ShiftSpec& spec) {
  validate_shift_spec(spec, layout.tokens);
  std::vector<int> idx(static_cast<std::size_t>(layout.rows()));
  for (int s = 0; s < layout.sequences; ++s) {
    for (int t = 0; t < layout.frames; ++t) {
      for (int i = 0; i < layout.tokens; ++i) {
        idx[static_cast<std::size_t>(layout.row(s, t, i))] =
            layout.row(s, wrap(t + spec[static_cast<std::size_t>(i)], layout.frames), i);
      }
    }
  }
  return idx;
}

VisionParams make_vision_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng,
                                double init_std) {
  VisionParams v;
  v.patch_weight = &store.add("visual.patch.weight", cfg.patch_pixels(), cfg.dim, Init::kTruncNormal, rng, true, init_std);
  v.patch_bias = &store.add("visual.patch.bias", 1, cfg.dim, Init::kZeros, rng);
  v.cls = &store.add("visual.cls", 1, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  v.pos = &store.add("visual.pos", cfg.tokens(), cfg.dim, Init::kTruncNormal, rng, true, init_std);
  for (int i = 0; i < cfg.basic_layers; ++i) {
    v.basic.push_back(make_block_params(store, "visual.basic." + std::to_string(i), cfg.dim, cfg.mlp_ratio, rng,
                                        true, init_std));
  }
  for (int i = 0; i < cfg.stg_layers; ++i) {
    v.stg.push_back(make_block_params(store, "visual.stg." + std::to_string(i), cfg.dim, cfg.mlp_ratio, rng,
                                      true, init_std));
  }
  v.tps = make_block_params(store, "visual.tps", cfg.dim, cfg.mlp_ratio, rng, true, init_std);
  return v;
}

Matrix patchify(std::span<const std::vector<Frame>* const> sequences, const ModelConfig& cfg) {
  const int ps = cfg.patch_size;
  const int gh = cfg.frame_height / ps, gw = cfg.frame_width / ps;
  const int n = cfg.n_patches();
  const int frames = sequences.empty() ? 0 : static_cast<int>(sequences.front()->size());
  const std::size_t pixels = static_cast<std::size_t>(cfg.frame_height) * cfg.frame_width * cfg.channels;
  Matrix out(static_cast<Eigen::Index>(sequences.size()) * frames * n, cfg.patch_pixels());
  Eigen::Index row = 0;
  for (const auto* seq : sequences) {
    XMR_CHECK_CONFIG(static_cast<int>(seq->size()) == frames, "patchify: sequences must share a frame count");
    for (const Frame& f : *seq) {
      XMR_CHECK_CONFIG(f.size() == pixels, "patchify: frame size does not match the configured shape");
      for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px, ++row) {
          Eigen::Index col = 0;
          for (int dy = 0; dy < ps; ++dy) {
            const int y = py * ps + dy;
            for (int dx = 0; dx < ps; ++dx) {
              const int x = px * ps + dx;
              const std::size_t base = (static_cast<std::size_t>(y) * cfg.frame_width + x) * cfg.channels;
              for (int c = 0; c < cfg.channels; ++c) out(row, col++) = f[base + c];
            }
          }
        }
      }
    }
  }
  return out;
}

SequenceBatch patchify_and_embed(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg,
                                 std::span<const std::vector<Frame>* const> sequences) {
  XMR_CHECK_CONFIG(cfg.frame_height % cfg.patch_size == 0 && cfg.frame_width % cfg.patch_size == 0,
                   "patchify_and_embed: frame dims not divisible by patch size");
  XMR_CHECK_CONFIG(!sequences.empty(), "patchify_and_embed: no sequences");
  TokenLayout layout;
  layout.sequences = static_cast<int>(sequences.size());
  layout.frames = static_cast<int>(sequences.front()->size());
  layout.tokens = cfg.tokens();
  XMR_CHECK_CONFIG(layout.frames >= 1, "patchify_and_embed: empty sequence");

  ad::Var patches = tape.constant(patchify(sequences, cfg));
  ad::Var projected = ad::linear(patches, tape.param(*p.patch_weight), tape.param(*p.patch_bias));
  const ad::Var parts[] = {tape.param(*p.cls), projected};
  ad::Var stacked = ad::vstack(parts);

  const int n = cfg.n_patches();
  std::vector<int> token_idx(static_cast<std::size_t>(layout.rows()));
  std::vector<int> pos_idx(static_cast<std::size_t>(layout.rows()));
  for (int s = 0; s < layout.sequences; ++s) {
    for (int t = 0; t < layout.frames; ++t) {
      const int frame = s * layout.frames + t;
      for (int i = 0; i < layout.tokens; ++i) {
        const auto r = static_cast<std::size_t>(layout.row(s, t, i));
        token_idx[r] = i == 0 ? 0 : 1 + frame * n + (i - 1);
        pos_idx[r] = i;
      }
    }
  }
  ad::Var tokens = ad::add(ad::gather_rows(stacked, std::move(token_idx)),
                           ad::gather_rows(tape.param(*p.pos), std::move(pos_idx)));
  return {tokens, layout};
}

SequenceBatch basic_encode(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg, const SequenceBatch& x) {
  XMR_CHECK_CONFIG(x.layout.tokens == cfg.tokens(), "basic_encode: expected N+1 tokens per frame");
  SequenceBatch out = x;
  const auto attn = spatial_layout(x.layout, cfg.heads);
  for (const auto& block : p.basic) out.tokens = transformer_block(tape, block, out.tokens, attn);
  return out;
}

SequenceBatch stg_block(ad::Tape& tape, const BlockParams& p, int heads, std::span<const int> offsets,
                        const SequenceBatch& x) {
  SequenceBatch out = x;
  out.tokens = transformer_block(tape, p, x.tokens, grouped_layout(x.layout, heads, offsets));
  return out;
}

SequenceBatch stg_encode(ad::Tape& tape, const VisionParams& p, const ModelConfig& cfg, const SequenceBatch& x) {
  const std::vector<int> offsets = cfg.resolved_offsets();
  SequenceBatch out = x;
  for (const auto& block : p.stg) out = stg_block(tape, block, cfg.heads, offsets, out);
  return out;
}

SequenceBatch tps_shift(const SequenceBatch& x, const ShiftSpec& spec) {
  SequenceBatch out = x;
  out.tokens = ad::gather_rows(x.tokens, shift_gather_index(x.layout, spec));
  return out;
}

SequenceBatch tps_block(ad::Tape& tape, const BlockParams& p, int heads, const ShiftSpec& spec,
                        const SequenceBatch& x, BlockMode mode) {
  SequenceBatch shifted = tps_shift(x, spec);
  shifted.tokens = transformer_block(tape, p, shifted.tokens, spatial_layout(x.layout, heads), mode);
  return tps_shift(shifted, inverse_shift_spec(spec));
}

ad::Var tap_cls(const SequenceBatch& x) {
  const TokenLayout& l = x.layout;
  XMR_CHECK_CONFIG(l.frames >= 1 && l.sequences >= 1, "tap_cls: empty sequence");
  XMR_CHECK_CONFIG(l.cls_index >= 0 && l.cls_index < l.tokens, "tap_cls: cls index out of range");
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(l.sequences));
  for (int s = 0; s < l.sequences; ++s) {
    for (int t = 0; t < l.frames; ++t) groups[static_cast<std::size_t>(s)].push_back(l.row(s, t, l.cls_index));
  }
  return ad::pool_rows(x.tokens, std::move(groups));
}

SequenceBatch slice_sequences(const SequenceBatch& x, int first, int count) {
  XMR_CHECK_CONFIG(first >= 0 && count >= 1 && first + count <= x.layout.sequences, "slice_sequences: bad range");
  const int per = x.layout.frames * x.layout.tokens;
  std::vector<int> idx(static_cast<std::size_t>(count * per));
  std::iota(idx.begin(), idx.end(), first * per);
  SequenceBatch out;
  out.tokens = ad::gather_rows(x.tokens, std::move(idx));
  out.layout = x.layout;
  out.layout.sequences = count;
  return out;
}

SequenceBatch to_batch(ad::Tape& tape, std::span<const SequenceFeatures> seqs) {
  XMR_CHECK_CONFIG(!seqs.empty() && !seqs.front().frames.empty(), "to_batch: empty input");
  TokenLayout layout;
  layout.sequences = static_cast<int>(seqs.size());
  layout.frames = static_cast<int>(seqs.front().frames.size());
  layout.tokens = static_cast<int>(seqs.front().frames.front().tokens.rows());
  layout.cls_index = seqs.front().cls_index;
  const Eigen::Index dim = seqs.front().frames.front().tokens.cols();
  Matrix m(layout.rows(), dim);
  for (int s = 0; s < layout.sequences; ++s) {
    const auto& seq = seqs[static_cast<std::size_t>(s)];
    XMR_CHECK_CONFIG(static_cast<int>(seq.frames.size()) == layout.frames, "to_batch: frame count mismatch");
    XMR_CHECK_CONFIG(seq.cls_index == layout.cls_index, "to_batch: cls index mismatch");
    for (int t = 0; t < layout.frames; ++t) {
      const Matrix& grid = seq.frames[static_cast<std::size_t>(t)].tokens;
      XMR_CHECK_CONFIG(grid.rows() == layout.tokens && grid.cols() == dim, "to_batch: token grid shape mismatch");
      m.middleRows(layout.row(s, t, 0), layout.tokens) = grid;
    }
  }
  return {tape.constant(std::move(m)), layout};
}

std::vector<SequenceFeatures> from_batch(const SequenceBatch& x, Modality modality) {
  const TokenLayout& l = x.layout;
  std::vector<SequenceFeatures> out(static_cast<std::size_t>(l.sequences));
  for (int s = 0; s < l.sequences; ++s) {
    auto& seq = out[static_cast<std::size_t>(s)];
    seq.modality = modality;
    seq.cls_index = l.cls_index;
    for (int t = 0; t < l.frames; ++t) {
      seq.frames.push_back({x.tokens.value().middleRows(l.row(s, t, 0), l.tokens), t});
    }
  }
  return out;
}

TokenGrid patchify_and_embed(const Frame& frame, const VisionParams& p, const ModelConfig& cfg) {
  ad::Tape tape;
  const std::vector<Frame> seq{frame};
  const std::vector<Frame>* seqs[] = {&seq};
  SequenceBatch b = patchify_and_embed(tape, p, cfg, seqs);
  return {b.tokens.value(), 0};
}

namespace {

SequenceFeatures single(const SequenceBatch& b, Modality m) { return from_batch(b, m).front(); }

}  // namespace

SequenceFeatures vanilla_block(const SequenceFeatures& seq, const BlockParams& p, int heads) {
  ad::Tape tape;
  SequenceBatch b = to_batch(tape, std::span(&seq, 1));
  b.tokens = transformer_block(tape, p, b.tokens, spatial_layout(b.layout, heads));
  return single(b, seq.modality);
}

SequenceFeatures basic_encode(const SequenceFeatures& seq, const VisionParams& p, const ModelConfig& cfg) {
  ad::Tape tape;
  return single(basic_encode(tape, p, cfg, to_batch(tape, std::span(&seq, 1))), seq.modality);
}

SequenceFeatures stg_block(const SequenceFeatures& seq, int temporal_heads, std::span<const int> offsets,
                           const BlockParams& p, int heads) {
  XMR_CHECK_CONFIG(temporal_heads >= 0 && temporal_heads <= heads, "stg_block: need 0 <= k <= h");
  XMR_CHECK_CONFIG(static_cast<int>(offsets.size()) == temporal_heads, "stg_block: need one offset per temporal head");
  ad::Tape tape;
  return single(stg_block(tape, p, heads, offsets, to_batch(tape, std::span(&seq, 1))), seq.modality);
}

SequenceFeatures tps_shift(const SequenceFeatures& seq, const ShiftSpec& spec) {
  ad::Tape tape;
  return single(tps_shift(to_batch(tape, std::span(&seq, 1)), spec), seq.modality);
}

SequenceFeatures tps_block(const SequenceFeatures& seq, const ShiftSpec& spec, const BlockParams& p, int heads,
                           BlockMode mode) {
  ad::Tape tape;
  return single(tps_block(tape, p, heads, spec, to_batch(tape, std::span(&seq, 1)), mode), seq.modality);
}

RowVector stg_sequence_feature(const SequenceFeatures& seq) {
  XMR_CHECK_CONFIG(!seq.frames.empty(), "stg_sequence_feature: empty sequence");
  RowVector f = RowVector::Zero(seq.frames.front().tokens.cols());
  for (const auto& g : seq.frames) f += g.tokens.row(seq.cls_index);
  return f / static_cast<double>(seq.frames.size());
}

}  // namespace xmr
