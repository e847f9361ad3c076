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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmr/autograd.h"
#include "xmr/backbone.h"
#include "xmr/cmi.h"
#include "xmr/config.h"
#include "xmr/params.h"
#include "xmr/semantic_diffusion.h"
#include "xmr/synth_data.h"

namespace xmr {

// Token count per frame recorded at each stage of a forward pass.
struct ShapeLedger {
  std::vector<std::pair<std::string, int>> tokens;
  int feature_dim = 0;
  int tokens_at(const std::string& stage) const;
};

struct LossBreakdown {
  double id_stg = 0.0;
  double wrt_stg = 0.0;
  double id_tps = 0.0;
  double wrt_tps = 0.0;
  double v2t = 0.0;
  double stfl = 0.0;
  double msel = 0.0;
  double md = 0.0;
  double id_cmi = 0.0;
  double total = 0.0;
};

struct TrainForward {
  ad::Var loss;
  LossBreakdown terms;
  ShapeLedger ledger;
  // Sequence-level features the modality losses were computed on.
  Matrix f_rgb;
  Matrix f_ir;
};

struct HeadParams {
  Parameter* id_stg_weight = nullptr;
  Parameter* id_stg_bias = nullptr;
  Parameter* id_tps_weight = nullptr;
  Parameter* id_tps_bias = nullptr;
  Parameter* v2t_proj = nullptr;
  Parameter* id_cmi_weight = nullptr;  // only with id_after_cmi
  Parameter* id_cmi_bias = nullptr;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed, double init_std = 0.02);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Full training graph for a P x K batch: RGB sequences first, then IR.
  TrainForward forward_train(ad::Tape& tape, const Batch& batch, const LossWeights& weights);

  // Inference path: STFL, CMI self-interaction, TAP. No text, no SD. Rows are
  // L2-normalized. Sequences are processed in chunks of chunk sequences.
  Matrix extract(std::span<const std::vector<Frame>* const> sequences, ShapeLedger* ledger = nullptr,
                 int chunk = 32);

  // STFL trunk shared by both paths: embedding, basic, STG. Appends to ledger.
  SequenceBatch stfl_stg(ad::Tape& tape, std::span<const std::vector<Frame>* const> sequences, ShapeLedger& ledger);
  SequenceBatch stfl_tps(ad::Tape& tape, const SequenceBatch& stg, ShapeLedger& ledger);

  const VisionParams& vision() const { return vision_; }
  const PromptSet& prompts() const { return prompts_; }
  const TextEncoderParams& text_encoder() const { return text_; }
  const DiffusionParams& diffusion() const { return sd_; }
  const CmiParams& cmi() const { return cmi_; }
  const HeadParams& heads() const { return heads_; }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  VisionParams vision_;
  TextEncoderParams text_;
  PromptSet prompts_;
  DiffusionParams sd_;
  CmiParams cmi_;
  HeadParams heads_;
  ShiftSpec shift_;
};

// The T frames of a dataset sample used for evaluation, evenly spaced.
std::vector<Frame> eval_frames(const std::vector<Frame>& full, int frames);

Matrix l2_normalize_rows(const Matrix& m);

}  // namespace xmr
