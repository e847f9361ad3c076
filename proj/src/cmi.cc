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

#include "xmr/cmi.h"

#include "xmr/errors.h"

namespace xmr {

CmiParams make_cmi_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng, double init_std) {
  CmiParams p;
  p.query = &store.add("cmi.query", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  p.key = &store.add("cmi.key", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  p.value = &store.add("cmi.value", cfg.dim, cfg.dim, Init::kTruncNormal, rng, true, init_std);
  p.residual = cfg.cmi_residual;
  return p;
}

namespace {

SequenceBatch attend(ad::Tape& tape, const CmiParams& p, const SequenceBatch& query_src, const SequenceBatch& kv_src) {
  const TokenLayout& l = kv_src.layout;
  ad::AttentionLayout attn;
  attn.frames = l.sequences * l.frames;
  attn.query_rows = l.tokens;
  attn.key_rows = l.tokens;
  attn.heads = 1;
  ad::Var q = ad::matmul(query_src.tokens, tape.param(*p.query));
  ad::Var k = ad::matmul(kv_src.tokens, tape.param(*p.key));
  ad::Var v = ad::matmul(kv_src.tokens, tape.param(*p.value));
  ad::Var out = ad::attention(q, k, v, attn);
  if (p.residual) out = ad::add(out, kv_src.tokens);
  return {out, l};
}

void check_compatible(const SequenceBatch& a, const SequenceBatch& b) {
  XMR_CHECK_CONFIG(a.layout.sequences == b.layout.sequences, "cross_interact: sequence count mismatch");
  XMR_CHECK_CONFIG(a.layout.frames == b.layout.frames, "cross_interact: frame count (T) mismatch");
  XMR_CHECK_CONFIG(a.layout.tokens == b.layout.tokens, "cross_interact: token count mismatch");
  XMR_CHECK_CONFIG(a.layout.cls_index == b.layout.cls_index, "cross_interact: cls index mismatch");
  XMR_CHECK_CONFIG(a.tokens.cols() == b.tokens.cols(), "cross_interact: width mismatch");
}

}  // namespace

std::pair<SequenceBatch, SequenceBatch> cross_interact(ad::Tape& tape, const CmiParams& p, const SequenceBatch& rgb,
                                                       const SequenceBatch& ir) {
  check_compatible(rgb, ir);
  return {attend(tape, p, ir, rgb), attend(tape, p, rgb, ir)};
}

SequenceBatch self_interact(ad::Tape& tape, const CmiParams& p, const SequenceBatch& x) {
  return attend(tape, p, x, x);
}

std::pair<SequenceFeatures, SequenceFeatures> cross_interact(const SequenceFeatures& rgb, const SequenceFeatures& ir,
                                                             const CmiParams& p) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  auto [fr, fi] = cross_interact(tape, p, to_batch(tape, std::span(&rgb, 1)), to_batch(tape, std::span(&ir, 1)));
  return {from_batch(fr, Modality::kRgb).front(), from_batch(fi, Modality::kIr).front()};
}

SequenceFeatures self_interact(const SequenceFeatures& seq, const CmiParams& p) {
  ad::Tape tape;
  tape.set_grad_enabled(false);
  return from_batch(self_interact(tape, p, to_batch(tape, std::span(&seq, 1))), seq.modality).front();
}

ModalInvariantFeature tap_cls(const SequenceFeatures& seq, int cls_index) {
  XMR_CHECK_CONFIG(!seq.frames.empty(), "tap_cls: empty sequence");
  RowVector f = RowVector::Zero(seq.frames.front().tokens.cols());
  for (const auto& g : seq.frames) {
    XMR_CHECK_CONFIG(cls_index >= 0 && cls_index < g.tokens.rows(), "tap_cls: cls index out of range");
    f += g.tokens.row(cls_index);
  }
  return {f / static_cast<double>(seq.frames.size()), seq.modality};
}

}  // namespace xmr
