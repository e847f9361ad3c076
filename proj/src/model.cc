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

#include "xmr/model.h"

#include <algorithm>
#include <map>

#include "xmr/errors.h"
#include "xmr/losses.h"

namespace xmr {

int ShapeLedger::tokens_at(const std::string& stage) const {
  for (const auto& [name, n] : tokens) {
    if (name == stage) return n;
  }
  throw ConfigError("shape ledger: no stage " + stage);
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed, double init_std) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  vision_ = make_vision_params(store_, cfg_, rng, init_std);
  text_ = make_text_encoder(store_, cfg_, rng);
  prompts_ = make_prompt_set(store_, cfg_, rng);
  sd_ = make_diffusion_params(store_, cfg_, rng, init_std);
  cmi_ = make_cmi_params(store_, cfg_, rng, init_std);
  cmi_.residual = cfg_.cmi_residual;
  const int d = cfg_.dim;
  const int c = cfg_.classifier_classes;
  heads_.id_stg_weight = &store_.add("head.id_stg.weight", d, c, Init::kTruncNormal, rng, true, init_std);
  heads_.id_stg_bias = &store_.add("head.id_stg.bias", 1, c, Init::kZeros, rng);
  heads_.id_tps_weight = &store_.add("head.id_tps.weight", d, c, Init::kTruncNormal, rng, true, init_std);
  heads_.id_tps_bias = &store_.add("head.id_tps.bias", 1, c, Init::kZeros, rng);
  heads_.v2t_proj = &store_.add("head.v2t_proj", 2 * d, d, Init::kTruncNormal, rng, true, init_std);
  if (cfg_.id_after_cmi) {
    heads_.id_cmi_weight = &store_.add("head.id_cmi.weight", d, c, Init::kTruncNormal, rng, true, init_std);
    heads_.id_cmi_bias = &store_.add("head.id_cmi.bias", 1, c, Init::kZeros, rng);
  }
  shift_ = default_shift_spec(cfg_.tokens(), cfg_.tps_shift_ratio);
}

SequenceBatch Model::stfl_stg(ad::Tape& tape, std::span<const std::vector<Frame>* const> sequences,
                              ShapeLedger& ledger) {
  SequenceBatch x = patchify_and_embed(tape, vision_, cfg_, sequences);
  ledger.tokens.emplace_back("embed", x.layout.tokens);
  x = basic_encode(tape, vision_, cfg_, x);
  ledger.tokens.emplace_back("basic", x.layout.tokens);
  x = stg_encode(tape, vision_, cfg_, x);
  ledger.tokens.emplace_back("stg", x.layout.tokens);
  return x;
}

SequenceBatch Model::stfl_tps(ad::Tape& tape, const SequenceBatch& stg, ShapeLedger& ledger) {
  SequenceBatch x = tps_block(tape, vision_.tps, cfg_.heads, shift_, stg);
  ledger.tokens.emplace_back("tps", x.layout.tokens);
  return x;
}

namespace {

// Per-modality mean of a loss evaluated separately on the RGB and IR halves.
template <typename F>
ad::Var modality_mean(const ad::Var& rgb, const ad::Var& ir, F&& loss, double& value) {
  ad::Var a = loss(rgb);
  ad::Var b = loss(ir);
  ad::Var m = ad::scale(ad::add(a, b), 0.5);
  value = m.value()(0, 0);
  return m;
}

}  // namespace

TrainForward Model::forward_train(ad::Tape& tape, const Batch& batch, const LossWeights& w) {
  w.validate();
  const int s = static_cast<int>(batch.samples.size());
  XMR_CHECK_CONFIG(s == batch.ids_per_batch * batch.seqs_per_id, "forward_train: batch size is not P*K");

  // Batch samples already hold the T sampled frames: RGB sequences 0..S-1, IR
  // sequences S..2S-1.
  std::vector<const std::vector<Frame>*> ptrs(2 * static_cast<std::size_t>(s));
  std::vector<int> labels(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    const auto& smp = batch.samples[static_cast<std::size_t>(i)];
    labels[static_cast<std::size_t>(i)] = smp.label;
    ptrs[static_cast<std::size_t>(i)] = &smp.rgb_frames;
    ptrs[static_cast<std::size_t>(s + i)] = &smp.ir_frames;
  }

  TrainForward out;
  LossBreakdown& L = out.terms;
  ShapeLedger& ledger = out.ledger;

  std::vector<int> rgb_rows(static_cast<std::size_t>(s)), ir_rows(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    rgb_rows[static_cast<std::size_t>(i)] = i;
    ir_rows[static_cast<std::size_t>(i)] = s + i;
  }

  const SequenceBatch stg = stfl_stg(tape, ptrs, ledger);
  const ad::Var f_stg = tap_cls(stg);
  const ad::Var f_stg_r = ad::gather_rows(f_stg, rgb_rows);
  const ad::Var f_stg_i = ad::gather_rows(f_stg, ir_rows);

  const ad::Var w_stg = tape.param(*heads_.id_stg_weight);
  const ad::Var b_stg = tape.param(*heads_.id_stg_bias);
  auto id_stg = [&](const ad::Var& f) { return losses::id_loss(f, labels, w_stg, b_stg); };
  auto wrt = [&](const ad::Var& f) { return losses::wrt_loss(f, labels); };
  ad::Var l_id_stg = modality_mean(f_stg_r, f_stg_i, id_stg, L.id_stg);
  ad::Var l_wrt_stg = modality_mean(f_stg_r, f_stg_i, wrt, L.wrt_stg);

  // Distinct identities of the batch, in first-appearance order.
  std::vector<int> ids;
  for (int y : labels) {
    if (std::find(ids.begin(), ids.end(), y) == ids.end()) ids.push_back(y);
  }
  const bool need_text = cfg_.use_sd || w.lambda1 > 0.0;
  ad::Var text;
  if (need_text) text = encode_prompts(tape, prompts_, text_, ids);
  ad::Var l_v2t;
  if (w.lambda1 > 0.0) {
    l_v2t = losses::v2t_loss(f_stg_r, f_stg_i, text, ids, tape.param(*heads_.v2t_proj), labels);
    L.v2t = l_v2t.value()(0, 0);
  }

  const SequenceBatch tps = stfl_tps(tape, stg, ledger);
  const ad::Var f_tps = tap_cls(tps);
  const ad::Var f_tps_r = ad::gather_rows(f_tps, rgb_rows);
  const ad::Var f_tps_i = ad::gather_rows(f_tps, ir_rows);
  const ad::Var w_tps = tape.param(*heads_.id_tps_weight);
  const ad::Var b_tps = tape.param(*heads_.id_tps_bias);
  auto id_tps = [&](const ad::Var& f) { return losses::id_loss(f, labels, w_tps, b_tps); };
  ad::Var l_id_tps = modality_mean(f_tps_r, f_tps_i, id_tps, L.id_tps);
  ad::Var l_wrt_tps = modality_mean(f_tps_r, f_tps_i, wrt, L.wrt_tps);

  ad::Var stfl = ad::add(ad::add(l_id_stg, l_wrt_stg), ad::add(l_id_tps, l_wrt_tps));
  if (l_v2t.valid()) stfl = ad::add(stfl, ad::scale(l_v2t, w.lambda1));
  L.stfl = losses::stfl_loss({L.id_stg, L.wrt_stg, L.id_tps, L.wrt_tps, L.v2t}, w.lambda1);

  SequenceBatch z = tps;
  if (cfg_.use_sd) {
    std::vector<int> per_seq(2 * static_cast<std::size_t>(s));
    for (int i = 0; i < 2 * s; ++i) {
      const int y = labels[static_cast<std::size_t>(i % s)];
      per_seq[static_cast<std::size_t>(i)] = static_cast<int>(std::find(ids.begin(), ids.end(), y) - ids.begin());
    }
    z = diffuse(tape, sd_, ad::gather_rows(text, per_seq), z);
    ledger.tokens.emplace_back("sd", z.layout.tokens);
  }

  ad::Var f_r, f_i;
  if (cfg_.use_cmi) {
    auto [cr, ci] = cross_interact(tape, cmi_, slice_sequences(z, 0, s), slice_sequences(z, s, s));
    ledger.tokens.emplace_back("cmi", cr.layout.tokens);
    f_r = tap_cls(cr);
    f_i = tap_cls(ci);
  } else {
    const ad::Var f = tap_cls(z);
    f_r = ad::gather_rows(f, rgb_rows);
    f_i = ad::gather_rows(f, ir_rows);
  }
  ledger.feature_dim = static_cast<int>(f_r.cols());
  out.f_rgb = f_r.value();
  out.f_ir = f_i.value();

  ad::Var total = stfl;
  if (w.use_modality_losses) {
    ad::Var msel = losses::msel_loss(f_r, f_i, labels, batch.ids_per_batch, batch.seqs_per_id);
    const losses::MdMode mode = w.md_literal       ? losses::MdMode::kLiteral
                                : w.md_class_aware ? losses::MdMode::kClassAware
                                                   : losses::MdMode::kStandard;
    ad::Var md = losses::md_loss(f_r, f_i, w.tau, mode, labels);
    L.msel = msel.value()(0, 0);
    L.md = md.value()(0, 0);
    total = ad::add(total, ad::add(ad::scale(msel, w.lambda2), ad::scale(md, w.lambda3)));
  }
  if (cfg_.id_after_cmi) {
    const ad::Var wc = tape.param(*heads_.id_cmi_weight);
    const ad::Var bc = tape.param(*heads_.id_cmi_bias);
    auto id_cmi = [&](const ad::Var& f) { return losses::id_loss(f, labels, wc, bc); };
    ad::Var l = modality_mean(f_r, f_i, id_cmi, L.id_cmi);
    total = ad::add(total, l);
  }
  L.total = losses::total_loss(L.stfl, L.msel, L.md, w.lambda2, w.lambda3) + L.id_cmi;
  out.loss = total;
  return out;
}

Matrix Model::extract(std::span<const std::vector<Frame>* const> sequences, ShapeLedger* ledger, int chunk) {
  XMR_CHECK_CONFIG(!sequences.empty(), "extract: no sequences");
  XMR_CHECK_CONFIG(chunk >= 1, "extract: chunk must be positive");
  const auto n = static_cast<Eigen::Index>(sequences.size());
  Matrix out(n, cfg_.dim);
  for (Eigen::Index first = 0; first < n; first += chunk) {
    const auto count = std::min<Eigen::Index>(chunk, n - first);
    ad::Tape tape;
    tape.set_grad_enabled(false);
    ShapeLedger local;
    const SequenceBatch stg = stfl_stg(tape, sequences.subspan(static_cast<std::size_t>(first),
                                                               static_cast<std::size_t>(count)), local);
    SequenceBatch z = stfl_tps(tape, stg, local);
    if (cfg_.use_cmi) {
      z = self_interact(tape, cmi_, z);
      local.tokens.emplace_back("cmi", z.layout.tokens);
    }
    const ad::Var f = tap_cls(z);
    local.feature_dim = static_cast<int>(f.cols());
    out.middleRows(first, count) = f.value();
    if (ledger != nullptr && first == 0) *ledger = local;
  }
  return l2_normalize_rows(out);
}

std::vector<Frame> eval_frames(const std::vector<Frame>& full, int frames) {
  XMR_CHECK_CONFIG(static_cast<int>(full.size()) >= frames, "eval_frames: sequence shorter than T");
  std::vector<Frame> out;
  for (int t : evenly_spaced_frames(static_cast<int>(full.size()), frames)) out.push_back(full[static_cast<std::size_t>(t)]);
  return out;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double nrm = m.row(r).norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("feature row " + std::to_string(r) + " has no direction");
    out.row(r) /= nrm;
  }
  return out;
}

}  // namespace xmr
