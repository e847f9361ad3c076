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
#include <utility>

#include "xmr/autograd.h"
#include "xmr/backbone.h"
#include "xmr/config.h"
#include "xmr/params.h"

namespace xmr {

// One projection trio shared by both interaction directions.
struct CmiParams {
  Parameter* query = nullptr;
  Parameter* key = nullptr;
  Parameter* value = nullptr;
  bool residual = false;
};

CmiParams make_cmi_params(ParameterStore& store, const ModelConfig& cfg, std::mt19937_64& rng,
                          double init_std = 0.02);

struct ModalInvariantFeature {
  RowVector f;
  Modality modality = Modality::kRgb;
};

// Per frame, single head: RGB output attends with IR queries over RGB
// keys/values, IR output with RGB queries over IR keys/values.
std::pair<SequenceBatch, SequenceBatch> cross_interact(ad::Tape& tape, const CmiParams& p, const SequenceBatch& rgb,
                                                       const SequenceBatch& ir);
// Queries, keys and values all from x; used at inference with one modality.
SequenceBatch self_interact(ad::Tape& tape, const CmiParams& p, const SequenceBatch& x);

std::pair<SequenceFeatures, SequenceFeatures> cross_interact(const SequenceFeatures& rgb, const SequenceFeatures& ir,
                                                             const CmiParams& p);
SequenceFeatures self_interact(const SequenceFeatures& seq, const CmiParams& p);
ModalInvariantFeature tap_cls(const SequenceFeatures& seq, int cls_index);

}  // namespace xmr
