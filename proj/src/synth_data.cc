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

#include "xmr/synth_data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "xmr/errors.h"

namespace xmr {

namespace {

constexpr int kBands = 4;
constexpr int kCameras = 3;
constexpr double kDriftAmplitude = 0.3;

int band_of(int y, int height) { return std::min(kBands - 1, y * kBands / height); }

}  // namespace

Recoloring ir_recoloring(double modality_gap) {
  // Luminance-like mixing plus a damped identity; eigenvalues of
  // (1-g)I + g*mix stay >= 1 - 0.75g > 0, so the map is invertible on [0, 1].
  Eigen::Matrix3d mix;
  mix << 0.3, 0.5, 0.2,
         0.3, 0.5, 0.2,
         0.3, 0.5, 0.2;
  mix += 0.25 * Eigen::Matrix3d::Identity();
  const double contrast = 1.0 - 0.4 * modality_gap;
  Recoloring r;
  r.matrix = contrast * ((1.0 - modality_gap) * Eigen::Matrix3d::Identity() + modality_gap * mix);
  r.offset = Eigen::Vector3d::Constant(0.3 * modality_gap);
  return r;
}

std::vector<IdentityPrototype> make_prototypes(int n_ids, const FrameShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<IdentityPrototype> out;
  out.reserve(static_cast<std::size_t>(n_ids));
  for (int id = 0; id < n_ids; ++id) {
    IdentityPrototype p;
    p.label = id;
    // Body-part colour bands, a left/right variation per band, and fine texture.
    std::vector<double> band(static_cast<std::size_t>(kBands * shape.channels));
    std::vector<double> side(static_cast<std::size_t>(kBands * shape.channels));
    for (double& v : band) v = normal(rng);
    for (double& v : side) v = 0.5 * normal(rng);
    p.signature.resize(static_cast<std::size_t>(shape.pixels()));
    std::size_t i = 0;
    for (int y = 0; y < shape.height; ++y) {
      const int b = band_of(y, shape.height);
      for (int x = 0; x < shape.width; ++x) {
        const double sgn = x < shape.width / 2 ? 1.0 : -1.0;
        for (int c = 0; c < shape.channels; ++c, ++i) {
          const std::size_t bc = static_cast<std::size_t>(b * shape.channels + c);
          p.signature[i] = band[bc] + sgn * side[bc] + 0.3 * normal(rng);
        }
      }
    }
    p.motion_seed = rng();
    out.push_back(std::move(p));
  }
  return out;
}

Dataset generate_dataset(const GenerateOptions& o) {
  XMR_CHECK_CONFIG(o.n_ids >= 2, "generate_dataset: need at least 2 identities");
  XMR_CHECK_CONFIG(o.seqs_per_id >= 1, "generate_dataset: seqs_per_id must be >= 1");
  XMR_CHECK_CONFIG(o.frames_full >= 1, "generate_dataset: frames_full must be >= 1");
  XMR_CHECK_CONFIG(o.shape.height > 0 && o.shape.width > 0 && o.shape.channels > 0,
                   "generate_dataset: frame shape must be positive");
  XMR_CHECK_CONFIG(o.patch_size > 0 && o.shape.height % o.patch_size == 0 && o.shape.width % o.patch_size == 0,
                   "generate_dataset: frame height/width must be divisible by the patch size");
  XMR_CHECK_CONFIG(o.modality_gap >= 0.0 && o.modality_gap <= 1.0, "generate_dataset: modality_gap must be in [0,1]");
  XMR_CHECK_CONFIG(o.noise_std >= 0.0, "generate_dataset: noise_std must be >= 0");
  XMR_CHECK_CONFIG(o.shape.channels == 3, "generate_dataset: the IR recoloring needs 3 channels");

  const auto prototypes = make_prototypes(o.n_ids, o.shape, o.seed);
  const Recoloring recolor = ir_recoloring(o.modality_gap);
  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  Dataset ds;
  ds.shape = o.shape;
  const Nuisance& nz = o.nuisance;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& proto : prototypes) {
    // Identity-specific gait frequency, in cycles per full sequence.
    std::mt19937_64 motion(proto.motion_seed);
    const double freq = std::uniform_real_distribution<double>(0.5, 1.5)(motion);
    for (int s = 0; s < o.seqs_per_id; ++s) {
      PairedSequenceSample sample;
      sample.label = proto.label;
      sample.camera_id = s % kCameras;
      const double phase = phase_dist(rng);
      const double gain = 1.0 + nz.gain_spread * (2.0 * unit(rng) - 1.0);
      Eigen::Vector3d cast;
      for (int c = 0; c < 3; ++c) cast(c) = nz.color_cast * normal(rng);
      const int occluded = unit(rng) < nz.occlusion_prob ? static_cast<int>(unit(rng) * kBands) : -1;
      Eigen::Vector3d occluder;
      for (int c = 0; c < 3; ++c) occluder(c) = normal(rng);
      const int shift = nz.max_shift > 0 ? static_cast<int>(rng() % static_cast<std::uint64_t>(2 * nz.max_shift + 1)) -
                                               nz.max_shift
                                         : 0;
      // Appearance of this capture before motion, noise and recoloring.
      std::vector<double> base(proto.signature.size());
      for (int y = 0; y < o.shape.height; ++y) {
        const int src_y = ((y - shift) % o.shape.height + o.shape.height) % o.shape.height;
        const bool hidden = band_of(src_y, o.shape.height) == occluded;
        for (int x = 0; x < o.shape.width; ++x) {
          const std::size_t dst = static_cast<std::size_t>((y * o.shape.width + x) * 3);
          const std::size_t src = static_cast<std::size_t>((src_y * o.shape.width + x) * 3);
          for (int c = 0; c < 3; ++c) {
            base[dst + c] = hidden ? occluder(c) : gain * proto.signature[src + c] + cast(c);
          }
        }
      }
      for (int t = 0; t < o.frames_full; ++t) {
        Frame rgb(base.size());
        Frame ir(base.size());
        for (int y = 0; y < o.shape.height; ++y) {
          const double drift =
              kDriftAmplitude * std::sin(2.0 * std::numbers::pi * (freq * t / o.frames_full +
                                                                   static_cast<double>(y) / o.shape.height) +
                                         phase);
          for (int x = 0; x < o.shape.width; ++x) {
            const std::size_t px = static_cast<std::size_t>((y * o.shape.width + x) * 3);
            Eigen::Vector3d clean;
            for (int c = 0; c < 3; ++c) clean(c) = base[px + c] + drift;
            const Eigen::Vector3d mapped = recolor.matrix * clean + recolor.offset;
            for (int c = 0; c < 3; ++c) {
              rgb[px + c] = clean(c) + o.noise_std * normal(rng);
              ir[px + c] = mapped(c) + o.noise_std * normal(rng);
            }
          }
        }
        sample.rgb_frames.push_back(std::move(rgb));
        sample.ir_frames.push_back(std::move(ir));
      }
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

std::vector<int> evenly_spaced_frames(int frames_full, int frames) {
  XMR_CHECK_CONFIG(frames >= 1 && frames <= frames_full, "evenly_spaced_frames: need 1 <= frames <= frames_full");
  std::vector<int> idx(static_cast<std::size_t>(frames));
  for (int j = 0; j < frames; ++j) idx[static_cast<std::size_t>(j)] = j * frames_full / frames;
  return idx;
}

Batch sample_batch(const Dataset& dataset, int ids_per_batch, int seqs_per_id, int frames, std::mt19937_64& rng) {
  if (ids_per_batch < 1 || seqs_per_id < 1 || frames < 1) throw SamplingError("sample_batch: P, K, T must be >= 1");
  std::map<int, std::vector<int>> by_label;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_label[dataset.samples[i].label].push_back(static_cast<int>(i));
  }
  std::vector<int> eligible;
  for (const auto& [label, idx] : by_label) {
    if (static_cast<int>(idx.size()) >= seqs_per_id) eligible.push_back(label);
  }
  if (static_cast<int>(eligible.size()) < ids_per_batch) {
    throw SamplingError("sample_batch: only " + std::to_string(eligible.size()) + " identities have >= " +
                        std::to_string(seqs_per_id) + " samples, need " + std::to_string(ids_per_batch));
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);

  Batch batch;
  batch.ids_per_batch = ids_per_batch;
  batch.seqs_per_id = seqs_per_id;
  for (int p = 0; p < ids_per_batch; ++p) {
    std::vector<int> idx = by_label[eligible[static_cast<std::size_t>(p)]];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < seqs_per_id; ++k) {
      const PairedSequenceSample& src = dataset.samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
      const int full = static_cast<int>(src.rgb_frames.size());
      if (full < frames || static_cast<int>(src.ir_frames.size()) < frames) {
        throw SamplingError("sample_batch: sample has " + std::to_string(full) + " frames, need " +
                            std::to_string(frames));
      }
      std::vector<int> all(static_cast<std::size_t>(full));
      std::iota(all.begin(), all.end(), 0);
      // std::sample keeps the relative order of a forward range.
      std::vector<int> rgb_idx, ir_idx;
      std::sample(all.begin(), all.end(), std::back_inserter(rgb_idx), frames, rng);
      std::sample(all.begin(), all.end(), std::back_inserter(ir_idx), frames, rng);
      PairedSequenceSample out;
      out.label = src.label;
      out.camera_id = src.camera_id;
      for (int t : rgb_idx) out.rgb_frames.push_back(src.rgb_frames[static_cast<std::size_t>(t)]);
      for (int t : ir_idx) out.ir_frames.push_back(src.ir_frames[static_cast<std::size_t>(t)]);
      batch.samples.push_back(std::move(out));
      batch.rgb_frame_index.push_back(std::move(rgb_idx));
      batch.ir_frame_index.push_back(std::move(ir_idx));
    }
  }
  return batch;
}

namespace {

static_assert(std::endian::native == std::endian::little, "dataset files are little-endian");

void write_frames(const std::filesystem::path& path, const std::vector<Frame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& f : frames) {
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  }
}

std::vector<Frame> read_frames(const std::filesystem::path& path, int frames, int pixels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<Frame> out(static_cast<std::size_t>(frames), Frame(static_cast<std::size_t>(pixels)));
  for (auto& f : out) {
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
    if (!in) throw ConfigError("truncated frame file " + path.string());
  }
  return out;
}

std::string sample_file(std::size_t i, const char* modality) {
  std::ostringstream name;
  name << "sample_";
  name.width(6);
  name.fill('0');
  name << i << "_" << modality << ".bin";
  return name.str();
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw ConfigError("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    for (const char* modality : {"rgb", "ir"}) {
      const bool is_rgb = modality[0] == 'r';
      const auto& frames = is_rgb ? s.rgb_frames : s.ir_frames;
      const std::string file = sample_file(i, modality);
      write_frames(dir / file, frames);
      nlohmann::json line = {{"sample", i},
                             {"label", s.label},
                             {"camera", s.camera_id},
                             {"modality", modality},
                             {"frames", frames.size()},
                             {"height", dataset.shape.height},
                             {"width", dataset.shape.width},
                             {"channels", dataset.shape.channels},
                             {"file", file}};
      manifest << line.dump() << "\n";
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw ConfigError("no manifest.jsonl in " + dir.string());
  Dataset ds;
  std::map<std::size_t, PairedSequenceSample> samples;
  bool have_shape = false;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad manifest line: ") + e.what());
    }
    FrameShape shape{j.at("height").get<int>(), j.at("width").get<int>(), j.at("channels").get<int>()};
    if (!have_shape) {
      ds.shape = shape;
      have_shape = true;
    }
    XMR_CHECK_CONFIG(shape.height == ds.shape.height && shape.width == ds.shape.width &&
                         shape.channels == ds.shape.channels,
                     "dataset frames must share one shape");
    auto& s = samples[j.at("sample").get<std::size_t>()];
    s.label = j.at("label").get<int>();
    s.camera_id = j.at("camera").get<int>();
    auto frames = read_frames(dir / j.at("file").get<std::string>(), j.at("frames").get<int>(), shape.pixels());
    if (j.at("modality").get<std::string>() == "rgb") {
      s.rgb_frames = std::move(frames);
    } else {
      s.ir_frames = std::move(frames);
    }
  }
  for (auto& [_, s] : samples) {
    XMR_CHECK_CONFIG(!s.rgb_frames.empty() && s.rgb_frames.size() == s.ir_frames.size(),
                     "dataset sample is missing a modality or has unequal lengths");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace xmr
