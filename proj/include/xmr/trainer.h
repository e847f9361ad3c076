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
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "xmr/config.h"
#include "xmr/model.h"
#include "xmr/params.h"
#include "xmr/synth_data.h"

namespace xmr {

// Adam with bias correction. Only trainable parameters get moment buffers;
// frozen ones are never visited.
class Adam {
 public:
  explicit Adam(ParameterStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  std::int64_t steps() const { return t_; }

  struct Slot {
    Parameter* param;
    Matrix m;
    Matrix v;
  };
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

double lr_at(std::int64_t step, std::int64_t total_steps, double base_lr);

// One epoch covers the training samples once in P*K-sized batches.
std::int64_t steps_per_epoch(const TrainConfig& cfg);

GenerateOptions train_data_options(const TrainConfig& cfg);
GenerateOptions heldout_data_options(const TrainConfig& cfg);

struct CheckpointMeta {
  TrainConfig config;
  int epoch = 0;
  std::int64_t step = 0;
};

std::string serialize_checkpoint(const Model& model, const Adam* optim, const CheckpointMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optim,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<Model> model;
  std::unique_ptr<Adam> optim;  // null when the file carries no optimizer state
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

struct StepRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown terms;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<StepRecord> log;
  std::filesystem::path final_checkpoint;  // empty when out_dir is empty
  std::int64_t steps = 0;
};

// Runs the whole schedule. With a non-empty out_dir it writes train_log.jsonl,
// checkpoints/epoch_NNNN.ckpt every checkpoint_every epochs, and final.ckpt.
// on_step, when set, sees every record as it is produced.
TrainResult train(const TrainConfig& cfg, const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace xmr
