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

#include "xmr/config.h"

#include <cmath>
#include <string>

#include "xmr/errors.h"

namespace xmr {

using nlohmann::json;

std::vector<int> ModelConfig::resolved_offsets() const {
  if (!stg_offsets.empty()) return stg_offsets;
  std::vector<int> out;
  for (int j = 0; j < temporal_heads; ++j) {
    const int mag = j / 2 + 1;
    out.push_back(j % 2 == 0 ? mag : -mag);
  }
  return out;
}

void ModelConfig::validate() const {
  XMR_CHECK_CONFIG(dim > 0 && heads > 0, "model: dim and heads must be positive");
  XMR_CHECK_CONFIG(dim % heads == 0, "model: dim must be divisible by heads");
  XMR_CHECK_CONFIG(temporal_heads >= 0 && temporal_heads <= heads, "model: need 0 <= temporal_heads <= heads");
  XMR_CHECK_CONFIG(basic_layers >= 0 && stg_layers >= 0, "model: layer counts must be nonnegative");
  XMR_CHECK_CONFIG(mlp_ratio >= 1, "model: mlp_ratio must be >= 1");
  XMR_CHECK_CONFIG(patch_size > 0, "model: patch_size must be positive");
  XMR_CHECK_CONFIG(frame_height > 0 && frame_width > 0 && channels > 0, "model: frame shape must be positive");
  XMR_CHECK_CONFIG(frame_height % patch_size == 0 && frame_width % patch_size == 0,
                   "model: frame height/width must be divisible by patch_size");
  XMR_CHECK_CONFIG(frames >= 1, "model: frames must be >= 1");
  XMR_CHECK_CONFIG(tps_shift_ratio.num >= 0 && tps_shift_ratio.den >= 1 &&
                       2 * tps_shift_ratio.num < tps_shift_ratio.den + (tps_shift_ratio.num == 0 ? 1 : 0),
                   "model: tps_shift_ratio must satisfy 2*num < den");
  XMR_CHECK_CONFIG(stg_offsets.empty() || static_cast<int>(stg_offsets.size()) == temporal_heads,
                   "model: stg_offsets must list one offset per temporal head");
  XMR_CHECK_CONFIG(classifier_classes >= 1, "model: classifier_classes must be >= 1");
  XMR_CHECK_CONFIG(prompt_tokens >= 0 && text_layers >= 0, "model: prompt settings must be nonnegative");
}

void LossWeights::validate() const {
  XMR_CHECK_CONFIG(std::isfinite(lambda1) && std::isfinite(lambda2) && std::isfinite(lambda3),
                   "loss: weights must be finite");
  XMR_CHECK_CONFIG(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0, "loss: weights must be nonnegative");
  XMR_CHECK_CONFIG(std::isfinite(tau) && tau > 0, "loss: tau must be positive");
  XMR_CHECK_CONFIG(!(md_literal && md_class_aware), "loss: md_literal and md_class_aware are exclusive");
}

void SynthConfig::validate() const {
  XMR_CHECK_CONFIG(train_ids >= 2 && test_ids >= 2, "data: need at least 2 identities per split");
  XMR_CHECK_CONFIG(seqs_per_id >= 1 && frames_full >= 1, "data: seqs_per_id and frames_full must be >= 1");
  XMR_CHECK_CONFIG(modality_gap >= 0 && modality_gap <= 1, "data: modality_gap must be in [0,1]");
  XMR_CHECK_CONFIG(noise_std >= 0, "data: noise_std must be >= 0");
  XMR_CHECK_CONFIG(gain_spread >= 0 && gain_spread < 1, "data: gain_spread must be in [0,1)");
  XMR_CHECK_CONFIG(color_cast >= 0, "data: color_cast must be >= 0");
  XMR_CHECK_CONFIG(occlusion_prob >= 0 && occlusion_prob <= 1, "data: occlusion_prob must be in [0,1]");
  XMR_CHECK_CONFIG(max_shift >= 0, "data: max_shift must be >= 0");
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  data.validate();
  XMR_CHECK_CONFIG(epochs >= 1, "train: epochs must be >= 1");
  XMR_CHECK_CONFIG(std::isfinite(lr) && lr > 0, "train: lr must be positive");
  XMR_CHECK_CONFIG(ids_per_batch >= 2, "train: ids_per_batch (P) must be >= 2");
  XMR_CHECK_CONFIG(seqs_per_id >= 2, "train: seqs_per_id (K) must be >= 2");
  XMR_CHECK_CONFIG(ids_per_batch <= data.train_ids, "train: P exceeds number of training identities");
  XMR_CHECK_CONFIG(seqs_per_id <= data.seqs_per_id, "train: K exceeds sequences per identity");
  XMR_CHECK_CONFIG(model.frames <= data.frames_full, "train: model frames exceed generated frames");
  XMR_CHECK_CONFIG(model.classifier_classes == data.train_ids, "train: classifier_classes must equal data.train_ids");
  XMR_CHECK_CONFIG(checkpoint_every >= 0, "train: checkpoint_every must be >= 0");
}

json to_json(const ModelConfig& c) {
  return json{{"dim", c.dim},
              {"heads", c.heads},
              {"temporal_heads", c.temporal_heads},
              {"basic_layers", c.basic_layers},
              {"stg_layers", c.stg_layers},
              {"mlp_ratio", c.mlp_ratio},
              {"patch_size", c.patch_size},
              {"frame_height", c.frame_height},
              {"frame_width", c.frame_width},
              {"channels", c.channels},
              {"frames", c.frames},
              {"tps_shift_num", c.tps_shift_ratio.num},
              {"tps_shift_den", c.tps_shift_ratio.den},
              {"stg_offsets", c.stg_offsets},
              {"classifier_classes", c.classifier_classes},
              {"prompt_tokens", c.prompt_tokens},
              {"text_layers", c.text_layers},
              {"use_sd", c.use_sd},
              {"use_cmi", c.use_cmi},
              {"cmi_residual", c.cmi_residual},
              {"id_after_cmi", c.id_after_cmi}};
}

json to_json(const LossWeights& c) {
  return json{{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"lambda3", c.lambda3},
              {"tau", c.tau}, {"use_modality_losses", c.use_modality_losses}, {"md_literal", c.md_literal},
              {"md_class_aware", c.md_class_aware}};
}

json to_json(const SynthConfig& c) {
  return json{{"train_ids", c.train_ids},     {"test_ids", c.test_ids},
              {"seqs_per_id", c.seqs_per_id}, {"frames_full", c.frames_full},
              {"modality_gap", c.modality_gap}, {"noise_std", c.noise_std},
              {"gain_spread", c.gain_spread}, {"color_cast", c.color_cast},
              {"occlusion_prob", c.occlusion_prob}, {"max_shift", c.max_shift},
              {"heldout_seed_offset", c.heldout_seed_offset}};
}

json to_json(const TrainConfig& c) {
  return json{{"model", to_json(c.model)},
              {"loss", to_json(c.loss)},
              {"data", to_json(c.data)},
              {"train",
               {{"epochs", c.epochs},
                {"lr", c.lr},
                {"ids_per_batch", c.ids_per_batch},
                {"seqs_per_id", c.seqs_per_id},
                {"seed", c.seed},
                {"checkpoint_every", c.checkpoint_every},
                {"out_dir", c.out_dir}}}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const json& reference, const std::string& where) {
  XMR_CHECK_CONFIG(j.is_object(), "config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    XMR_CHECK_CONFIG(reference.contains(key), "config: unknown key '" + where + "." + key + "'");
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  check_keys(j, to_json(c), "model");
  read(j, "dim", c.dim);
  read(j, "heads", c.heads);
  read(j, "temporal_heads", c.temporal_heads);
  read(j, "basic_layers", c.basic_layers);
  read(j, "stg_layers", c.stg_layers);
  read(j, "mlp_ratio", c.mlp_ratio);
  read(j, "patch_size", c.patch_size);
  read(j, "frame_height", c.frame_height);
  read(j, "frame_width", c.frame_width);
  read(j, "channels", c.channels);
  read(j, "frames", c.frames);
  read(j, "tps_shift_num", c.tps_shift_ratio.num);
  read(j, "tps_shift_den", c.tps_shift_ratio.den);
  read(j, "stg_offsets", c.stg_offsets);
  read(j, "classifier_classes", c.classifier_classes);
  read(j, "prompt_tokens", c.prompt_tokens);
  read(j, "text_layers", c.text_layers);
  read(j, "use_sd", c.use_sd);
  read(j, "use_cmi", c.use_cmi);
  read(j, "cmi_residual", c.cmi_residual);
  read(j, "id_after_cmi", c.id_after_cmi);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const json ref = to_json(c);
  check_keys(j, ref, "config");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, ref.at("loss"), "loss");
    read(l, "lambda1", c.loss.lambda1);
    read(l, "lambda2", c.loss.lambda2);
    read(l, "lambda3", c.loss.lambda3);
    read(l, "tau", c.loss.tau);
    read(l, "use_modality_losses", c.loss.use_modality_losses);
    read(l, "md_literal", c.loss.md_literal);
    read(l, "md_class_aware", c.loss.md_class_aware);
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, ref.at("data"), "data");
    read(d, "train_ids", c.data.train_ids);
    read(d, "test_ids", c.data.test_ids);
    read(d, "seqs_per_id", c.data.seqs_per_id);
    read(d, "frames_full", c.data.frames_full);
    read(d, "modality_gap", c.data.modality_gap);
    read(d, "noise_std", c.data.noise_std);
    read(d, "gain_spread", c.data.gain_spread);
    read(d, "color_cast", c.data.color_cast);
    read(d, "occlusion_prob", c.data.occlusion_prob);
    read(d, "max_shift", c.data.max_shift);
    read(d, "heldout_seed_offset", c.data.heldout_seed_offset);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, ref.at("train"), "train");
    read(t, "epochs", c.epochs);
    read(t, "lr", c.lr);
    read(t, "ids_per_batch", c.ids_per_batch);
    read(t, "seqs_per_id", c.seqs_per_id);
    read(t, "seed", c.seed);
    read(t, "checkpoint_every", c.checkpoint_every);
    read(t, "out_dir", c.out_dir);
  }
  return c;
}

json flatten(const TrainConfig& c) {
  json flat;
  const json nested = to_json(c);
  for (const auto& [section, body] : nested.items()) {
    for (const auto& [key, value] : body.items()) flat[section + "." + key] = value;
  }
  return flat;
}

TrainConfig apply_override(const TrainConfig& c, const std::string& key, const std::string& value) {
  json nested = to_json(c);
  const json flat = flatten(c);
  // Bare keys ("epochs") resolve when unambiguous across sections.
  std::string full = key;
  if (!flat.contains(full)) {
    std::string match;
    for (const auto& [k, _] : flat.items()) {
      const auto dot = k.find('.');
      if (k.substr(dot + 1) == key) {
        XMR_CHECK_CONFIG(match.empty(), "config: ambiguous override '" + key + "'");
        match = k;
      }
    }
    XMR_CHECK_CONFIG(!match.empty(), "config: unknown override '" + key + "'");
    full = match;
  }
  const json& current = flat.at(full);
  json parsed;
  try {
    if (current.is_string()) {
      parsed = value;
    } else {
      parsed = json::parse(value);
    }
  } catch (const json::exception&) {
    throw ConfigError("config: cannot parse value '" + value + "' for '" + full + "'");
  }
  const bool same_kind = (current.is_number() && parsed.is_number()) ||
                         (current.is_boolean() && parsed.is_boolean()) ||
                         (current.is_array() && parsed.is_array()) || current.is_string();
  XMR_CHECK_CONFIG(same_kind, "config: value '" + value + "' has the wrong type for '" + full + "'");
  const auto dot = full.find('.');
  nested[full.substr(0, dot)][full.substr(dot + 1)] = parsed;
  return train_config_from_json(nested);
}

}  // namespace xmr
