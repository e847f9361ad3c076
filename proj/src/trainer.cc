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

#include "xmr/trainer.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "xmr/errors.h"

namespace xmr {

Adam::Adam(ParameterStore& store, double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Parameter* p : store.all()) {
    if (!p->trainable) continue;
    slots_.push_back({p, Matrix::Zero(p->value.rows(), p->value.cols()), Matrix::Zero(p->value.rows(), p->value.cols())});
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Slot& s : slots_) {
    const Matrix& g = s.param->grad;
    if (g.size() == 0) continue;
    s.m = beta1_ * s.m + (1.0 - beta1_) * g;
    s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
    s.param->value.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + eps_);
  }
}

double lr_at(std::int64_t step, std::int64_t total_steps, double base_lr) {
  XMR_CHECK_CONFIG(total_steps > 0 && step >= 0 && step <= total_steps, "lr_at: step outside [0, total_steps]");
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

std::int64_t steps_per_epoch(const TrainConfig& cfg) {
  const std::int64_t samples = static_cast<std::int64_t>(cfg.data.train_ids) * cfg.data.seqs_per_id;
  const std::int64_t batch = static_cast<std::int64_t>(cfg.ids_per_batch) * cfg.seqs_per_id;
  return (samples + batch - 1) / batch;
}

namespace {

GenerateOptions data_options(const TrainConfig& cfg, int ids, std::uint64_t seed) {
  GenerateOptions o;
  o.n_ids = ids;
  o.seqs_per_id = cfg.data.seqs_per_id;
  o.frames_full = cfg.data.frames_full;
  o.shape = {cfg.model.frame_height, cfg.model.frame_width, cfg.model.channels};
  o.patch_size = cfg.model.patch_size;
  o.modality_gap = cfg.data.modality_gap;
  o.noise_std = cfg.data.noise_std;
  o.nuisance = {cfg.data.gain_spread, cfg.data.color_cast, cfg.data.occlusion_prob, cfg.data.max_shift};
  o.seed = seed;
  return o;
}

constexpr char kMagic[8] = {'X', 'M', 'R', 'C', 'K', 'P', 'T', '1'};

}  // namespace

GenerateOptions train_data_options(const TrainConfig& cfg) { return data_options(cfg, cfg.data.train_ids, cfg.seed); }

GenerateOptions heldout_data_options(const TrainConfig& cfg) {
  return data_options(cfg, cfg.data.test_ids, cfg.seed + cfg.data.heldout_seed_offset);
}

std::string serialize_checkpoint(const Model& model, const Adam* optim, const CheckpointMeta& meta) {
  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (const Parameter* p : model.params().all()) tensors.emplace_back(p->name, &p->value);
  if (optim != nullptr) {
    for (const auto& s : optim->slots()) tensors.emplace_back("optim.m/" + s.param->name, &s.m);
    for (const auto& s : optim->slots()) tensors.emplace_back("optim.v/" + s.param->name, &s.v);
  }
  nlohmann::json h;
  // The output directory is not part of the run; leaving it out keeps
  // checkpoints from identical runs byte-identical.
  TrainConfig stored = meta.config;
  stored.out_dir.clear();
  h["config"] = to_json(stored);
  h["epoch"] = meta.epoch;
  h["step"] = meta.step;
  h["optimizer_steps"] = optim != nullptr ? optim->steps() : 0;
  h["has_optimizer"] = optim != nullptr;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    table.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m->size()) * sizeof(double);
  }
  h["tensors"] = table;
  const std::string header = h.dump();
  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = header.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += header;
  for (const auto& [name, m] : tensors) {
    out.append(reinterpret_cast<const char*>(m->data()), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam* optim,
                     const CheckpointMeta& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(model, optim, meta);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ConfigError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path.string() + ": not a checkpoint");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  const std::size_t body = sizeof(kMagic) + sizeof(len) + len;
  if (bytes.size() < body) throw ConfigError(path.string() + ": truncated header");
  const auto h = nlohmann::json::parse(bytes.substr(sizeof(kMagic) + sizeof(len), len));

  LoadedCheckpoint out;
  out.meta.config = train_config_from_json(h.at("config"));
  out.meta.epoch = h.at("epoch").get<int>();
  out.meta.step = h.at("step").get<std::int64_t>();
  out.model = std::make_unique<Model>(out.meta.config.model, out.meta.config.seed);

  std::map<std::string, Matrix*> targets;
  for (Parameter* p : out.model->params().all()) targets[p->name] = &p->value;
  if (h.at("has_optimizer").get<bool>()) {
    out.optim = std::make_unique<Adam>(out.model->params());
    out.optim->set_steps(h.at("optimizer_steps").get<std::int64_t>());
    for (auto& s : out.optim->slots()) {
      targets["optim.m/" + s.param->name] = &s.m;
      targets["optim.v/" + s.param->name] = &s.v;
    }
  }
  std::size_t seen = 0;
  for (const auto& t : h.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    auto it = targets.find(name);
    if (it == targets.end()) throw ConfigError("checkpoint tensor " + name + " does not exist in the model");
    Matrix& m = *it->second;
    if (m.rows() != t.at("rows").get<Eigen::Index>() || m.cols() != t.at("cols").get<Eigen::Index>()) {
      throw ConfigError("checkpoint tensor " + name + " has the wrong shape for this config");
    }
    const auto offset = t.at("offset").get<std::uint64_t>();
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    if (body + offset + n > bytes.size()) throw ConfigError(path.string() + ": truncated tensor " + name);
    std::memcpy(m.data(), bytes.data() + body + offset, n);
    ++seen;
  }
  if (seen != targets.size()) throw ConfigError(path.string() + ": checkpoint is missing tensors for this config");
  return out;
}

namespace {

nlohmann::json record_json(const StepRecord& r) {
  const LossBreakdown& t = r.terms;
  return {{"step", r.step},      {"epoch", r.epoch},  {"lr", r.lr},         {"id_stg", t.id_stg},
          {"wrt_stg", t.wrt_stg}, {"id_tps", t.id_tps}, {"wrt_tps", t.wrt_tps}, {"v2t", t.v2t},
          {"stfl", t.stfl},      {"msel", t.msel},    {"md", t.md},         {"id_cmi", t.id_cmi},
          {"total", t.total}};
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::function<void(const StepRecord&)>& on_step) {
  cfg.validate();
  const Dataset data = generate_dataset(train_data_options(cfg));
  TrainResult result;
  result.model = std::make_unique<Model>(cfg.model, cfg.seed);
  Model& model = *result.model;
  Adam adam(model.params());
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  const std::filesystem::path out = cfg.out_dir;
  std::ofstream log;
  if (!out.empty()) {
    std::filesystem::create_directories(out / "checkpoints");
    log.open(out / "train_log.jsonl");
    if (!log) throw ConfigError("cannot write " + (out / "train_log.jsonl").string());
  }
  std::string last_good = "none";

  const std::int64_t per_epoch = steps_per_epoch(cfg);
  const std::int64_t total = per_epoch * cfg.epochs;
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::int64_t i = 0; i < per_epoch; ++i, ++step) {
      const Batch batch = sample_batch(data, cfg.ids_per_batch, cfg.seqs_per_id, cfg.model.frames, rng);
      model.params().zero_grad();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr_at(step, total, cfg.lr);
      {
        ad::Tape tape;
        TrainForward fw;
        try {
          fw = model.forward_train(tape, batch, cfg.loss);
        } catch (const NumericalError& e) {
          throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step) +
                               "; last good checkpoint: " + last_good);
        }
        if (!std::isfinite(fw.terms.total)) {
          throw NumericalError("non-finite loss at step " + std::to_string(step) + "; last good checkpoint: " +
                               last_good);
        }
        tape.backward(fw.loss);
        rec.terms = fw.terms;
      }
      adam.step(rec.lr);
      if (log.is_open()) log << record_json(rec).dump() << "\n";
      if (on_step) on_step(rec);
      result.log.push_back(rec);
    }
    if (!out.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
      save_checkpoint(out / "checkpoints" / name, model, &adam, {cfg, epoch, step});
      last_good = (out / "checkpoints" / name).string();
    }
  }
  result.steps = step;
  if (!out.empty()) {
    result.final_checkpoint = out / "final.ckpt";
    save_checkpoint(result.final_checkpoint, model, &adam, {cfg, cfg.epochs, step});
  }
  return result;
}

}  // namespace xmr
