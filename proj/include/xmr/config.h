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
#include <vector>

#include <json.hpp>

namespace xmr {

// Fraction of patch tokens pulled from each temporal neighbour by the shift
// block, e.g. 1/4 from t-1 and 1/4 from t+1.
struct ShiftRatio {
  int num = 1;
  int den = 4;
};

struct ModelConfig {
  int dim = 64;
  int heads = 8;
  int temporal_heads = 4;
  int basic_layers = 2;
  int stg_layers = 2;
  int mlp_ratio = 4;
  int patch_size = 8;
  int frame_height = 32;
  int frame_width = 16;
  int channels = 3;
  int frames = 6;
  ShiftRatio tps_shift_ratio;
  // Temporal offsets of the temporal heads; empty selects +1, -1, +2, -2, ...
  std::vector<int> stg_offsets;
  int classifier_classes = 16;
  int prompt_tokens = 4;
  int text_layers = 2;
  bool use_sd = true;
  bool use_cmi = true;
  bool cmi_residual = true;
  // Extra classifier on the CMI output (loss-ablation baseline); off by default.
  bool id_after_cmi = false;

  int n_patches() const { return (frame_height / patch_size) * (frame_width / patch_size); }
  int tokens() const { return n_patches() + 1; }
  int head_dim() const { return dim / heads; }
  int patch_pixels() const { return patch_size * patch_size * channels; }
  std::vector<int> resolved_offsets() const;
  void validate() const;
};

struct LossWeights {
  double lambda1 = 0.1;
  double lambda2 = 0.05;
  double lambda3 = 0.5;
  double tau = 0.1;
  bool use_modality_losses = true;
  // MD denominator over j != i only, which leaves out the positive pair.
  bool md_literal = false;
  // Leave same-identity cross-modal pairs out of the MD denominator.
  bool md_class_aware = true;

  void validate() const;
};

struct SynthConfig {
  int train_ids = 16;
  int test_ids = 8;
  int seqs_per_id = 8;
  int frames_full = 12;
  double modality_gap = 0.5;
  double noise_std = 0.1;
  // Per-sequence nuisance strengths (see Nuisance in synth_data.h).
  double gain_spread = 0.075;
  double color_cast = 0.075;
  double occlusion_prob = 0.125;
  int max_shift = 1;
  // Held-out identities are generated with seed + heldout_seed_offset.
  std::uint64_t heldout_seed_offset = 1;

  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  LossWeights loss;
  SynthConfig data;
  int epochs = 40;
  double lr = 2e-3;
  int ids_per_batch = 4;  // P
  int seqs_per_id = 4;    // K
  std::uint64_t seed = 42;
  int checkpoint_every = 10;
  std::string out_dir;

  void validate() const;
};

// Learning rate for a full-size pretrained backbone; the desk default above is
// larger because the toy model starts from random weights.
inline constexpr double kPretrainedLearningRate = 2.5e-5;

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const LossWeights& c);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const TrainConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Flat "section.key" view used for --key value overrides, e.g. "model.dim".
nlohmann::json flatten(const TrainConfig& c);
TrainConfig apply_override(const TrainConfig& c, const std::string& key, const std::string& value);

}  // namespace xmr
