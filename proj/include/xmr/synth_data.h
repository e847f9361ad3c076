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

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "xmr/tensor.h"

namespace xmr {

// One frame, H*W*C values in (row, column, channel) order.
using Frame = std::vector<double>;

struct FrameShape {
  int height = 32;
  int width = 16;
  int channels = 3;
  int pixels() const { return height * width * channels; }
};

struct IdentityPrototype {
  int label = 0;
  std::vector<double> signature;
  std::uint64_t motion_seed = 0;
};

struct PairedSequenceSample {
  std::vector<Frame> rgb_frames;
  std::vector<Frame> ir_frames;
  int label = 0;
  int camera_id = 0;
};

struct Dataset {
  FrameShape shape;
  std::vector<PairedSequenceSample> samples;
};

struct Batch {
  std::vector<PairedSequenceSample> samples;  // K consecutive samples per identity
  int ids_per_batch = 0;                      // P
  int seqs_per_id = 0;                        // K
  // Source frame indices per sample and modality, strictly increasing.
  std::vector<std::vector<int>> rgb_frame_index;
  std::vector<std::vector<int>> ir_frame_index;
};

// Per-sequence appearance changes shared by the RGB and IR halves of a pair:
// global gain, colour cast, one occluded body band, vertical misalignment.
struct Nuisance {
  double gain_spread = 0.075;     // gain ~ U(1 - spread, 1 + spread)
  double color_cast = 0.075;      // per-channel offset ~ N(0, color_cast)
  double occlusion_prob = 0.125;  // chance one band is painted over
  int max_shift = 1;              // rows, cyclic, uniform in [-max_shift, max_shift]
  static Nuisance none() { return {0.0, 0.0, 0.0, 0}; }
};

struct GenerateOptions {
  int n_ids = 8;
  int seqs_per_id = 4;
  int frames_full = 8;
  FrameShape shape;
  int patch_size = 8;
  double modality_gap = 0.5;
  double noise_std = 0.1;
  Nuisance nuisance;
  std::uint64_t seed = 42;
};

// Per-pixel affine recoloring that turns a clean RGB pixel into its IR
// counterpart: ir = matrix * rgb + offset. Identity at gap 0, invertible for
// every gap in [0, 1].
struct Recoloring {
  Eigen::Matrix3d matrix;
  Eigen::Vector3d offset;
};
Recoloring ir_recoloring(double modality_gap);

std::vector<IdentityPrototype> make_prototypes(int n_ids, const FrameShape& shape, std::uint64_t seed);

Dataset generate_dataset(const GenerateOptions& options);

Batch sample_batch(const Dataset& dataset, int ids_per_batch, int seqs_per_id, int frames,
                   std::mt19937_64& rng);

// T evenly spaced indices into a sequence of frames_full frames.
std::vector<int> evenly_spaced_frames(int frames_full, int frames);

// Directory layout: manifest.jsonl plus one raw little-endian float64 file per
// sample and modality.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace xmr
