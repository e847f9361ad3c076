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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmr/config.h"
#include "xmr/errors.h"
#include "xmr/gradcheck.h"
#include "xmr/oracle_suite.h"
#include "xmr/retrieval.h"
#include "xmr/synth_data.h"
#include "xmr/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

// Registers --section.key for every config field and the bare --key when that
// name is unique across sections. Values are applied in command-line order.
struct OverrideFlags {
  std::vector<std::pair<std::string, std::string>> values;

  void attach(CLI::App* app) {
    const json flat = xmr::flatten(xmr::TrainConfig{});
    std::map<std::string, int> bare_count;
    for (const auto& [key, _] : flat.items()) ++bare_count[key.substr(key.find('.') + 1)];
    for (const auto& [key, value] : flat.items()) {
      const std::string bare = key.substr(key.find('.') + 1);
      std::string names = "--" + key;
      if (bare_count[bare] == 1) names += ",--" + bare;
      if (key == "train.out_dir") names += ",--out";
      app->add_option_function<std::string>(
             names, [this, key](const std::string& v) { values.emplace_back(key, v); },
             "override " + key + " (default " + value.dump() + ")")
          ->group("Config overrides");
    }
  }

  xmr::TrainConfig apply(xmr::TrainConfig cfg) const {
    for (const auto& [k, v] : values) cfg = xmr::apply_override(cfg, k, v);
    return cfg;
  }
};

xmr::TrainConfig load_config(const std::string& path) {
  if (path.empty()) return xmr::TrainConfig{};
  std::ifstream f(path);
  if (!f) throw xmr::ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw xmr::ConfigError("config " + path + ": " + e.what());
  }
  return xmr::train_config_from_json(j);
}

void print_report(const xmr::RetrievalReport& r) {
  std::printf("%s  rank1 %.2f  rank5 %.2f  rank10 %.2f  rank20 %.2f  mAP %.2f  delta %.4f  (queries %d, gallery %d)\n",
              xmr::to_string(r.direction).c_str(), r.cmc.at(1), r.cmc.at(5), r.cmc.at(10), r.cmc.at(20),
              r.map_score, r.distributions.delta, r.n_query, r.n_gallery);
}

int run_train(const std::string& config_path, const OverrideFlags& flags) {
  const xmr::TrainConfig cfg = flags.apply(load_config(config_path));
  cfg.validate();
  XMR_CHECK_CONFIG(!cfg.out_dir.empty(), "train: --out is required");
  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "config.json");
    f << xmr::to_json(cfg).dump(2) << "\n";
  }
  const std::int64_t per_epoch = xmr::steps_per_epoch(cfg);
  auto result = xmr::train(cfg, [&](const xmr::StepRecord& r) {
    if ((r.step + 1) % per_epoch == 0) {
      std::printf("epoch %3d  step %5lld  lr %.3e  loss %.4f  (stfl %.4f  msel %.4f  md %.4f)\n", r.epoch,
                  static_cast<long long>(r.step + 1), r.lr, r.terms.total, r.terms.stfl, r.terms.msel, r.terms.md);
      std::fflush(stdout);
    }
  });
  std::printf("checkpoint: %s\n", result.final_checkpoint.string().c_str());
  const xmr::Dataset heldout = xmr::generate_dataset(xmr::heldout_data_options(cfg));
  for (auto dir : {xmr::Direction::kI2V, xmr::Direction::kV2I}) {
    const auto report = xmr::evaluate(*result.model, heldout, dir);
    xmr::write_report(report, fs::path(cfg.out_dir) / ("heldout_" + xmr::to_string(dir)));
    print_report(report);
  }
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, const std::string& direction,
             const std::string& out, bool camera_filter, bool dump_features) {
  auto ckpt = xmr::load_checkpoint(checkpoint);
  const xmr::Dataset ds = xmr::load_dataset(data);
  const xmr::Direction dir = xmr::parse_direction(direction);
  auto [rgb, ir] = xmr::extract_features(*ckpt.model, ds);
  const auto& query = dir == xmr::Direction::kI2V ? ir : rgb;
  const auto& gallery = dir == xmr::Direction::kI2V ? rgb : ir;
  const auto report = xmr::evaluate_features(query, gallery, dir, camera_filter);
  xmr::write_report(report, out);
  if (dump_features) {
    xmr::write_feature_dump(rgb, fs::path(out) / "features_rgb.bin");
    xmr::write_feature_dump(ir, fs::path(out) / "features_ir.bin");
  }
  print_report(report);
  if (report.excluded_queries > 0) {
    std::fprintf(stderr, "warning: %d queries have no same-label gallery item\n", report.excluded_queries);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visible-infrared video re-identification: training, evaluation and checks"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train on synthetic data and evaluate on held-out identities");
  std::string config_path;
  train->add_option("--config", config_path, "JSON config file");
  OverrideFlags flags;
  flags.attach(train);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset directory");
  std::string checkpoint, data_dir, direction = "i2v", eval_out;
  bool camera_filter = false, dump_features = false;
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--direction", direction)->check(CLI::IsMember({"i2v", "v2i"}));
  eval->add_option("--out", eval_out)->required();
  eval->add_flag("--camera-filter", camera_filter, "drop same-camera gallery entries");
  eval->add_flag("--dump-features", dump_features, "write feature dumps next to the report");

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic paired RGB/IR dataset");
  xmr::GenerateOptions gen;
  xmr::SynthConfig sdef;
  gen.n_ids = sdef.test_ids;
  gen.seqs_per_id = sdef.seqs_per_id;
  gen.frames_full = sdef.frames_full;
  gen.modality_gap = sdef.modality_gap;
  gen.noise_std = sdef.noise_std;
  gen.nuisance = {sdef.gain_spread, sdef.color_cast, sdef.occlusion_prob, sdef.max_shift};
  std::string synth_out;
  synth->add_option("--ids", gen.n_ids)->capture_default_str();
  synth->add_option("--seqs-per-id", gen.seqs_per_id)->capture_default_str();
  synth->add_option("--frames", gen.frames_full)->capture_default_str();
  synth->add_option("--height", gen.shape.height)->capture_default_str();
  synth->add_option("--width", gen.shape.width)->capture_default_str();
  synth->add_option("--patch-size", gen.patch_size)->capture_default_str();
  synth->add_option("--gap", gen.modality_gap)->capture_default_str();
  synth->add_option("--noise", gen.noise_std)->capture_default_str();
  synth->add_option("--gain-spread", gen.nuisance.gain_spread)->capture_default_str();
  synth->add_option("--color-cast", gen.nuisance.color_cast)->capture_default_str();
  synth->add_option("--occlusion-prob", gen.nuisance.occlusion_prob)->capture_default_str();
  synth->add_option("--max-shift", gen.nuisance.max_shift)->capture_default_str();
  synth->add_option("--seed", gen.seed)->capture_default_str();
  synth->add_option("--out", synth_out)->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss and a micro model");
  xmr::GradcheckOptions gco;
  gc->add_option("--seed", gco.seed)->capture_default_str();
  gc->add_option("--tolerance", gco.tolerance)->capture_default_str();
  gc->add_option("--corrupt", gco.corrupt, "scale one component's analytic gradient (negative control)");

  auto* oc = app.add_subcommand("losscheck-oracle", "compare losses and metrics with brute-force oracles");
  std::uint64_t oracle_seed = 42;
  int batches = 100, metric_instances = 200;
  oc->add_option("--seed", oracle_seed)->capture_default_str();
  oc->add_option("--batches", batches)->capture_default_str();
  oc->add_option("--metric-instances", metric_instances)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return run_train(config_path, flags);
    if (*eval) return run_eval(checkpoint, data_dir, direction, eval_out, camera_filter, dump_features);
    if (*synth) {
      const xmr::Dataset ds = xmr::generate_dataset(gen);
      xmr::save_dataset(ds, synth_out);
      std::printf("wrote %zu samples to %s\n", ds.samples.size(), synth_out.c_str());
      return 0;
    }
    if (*gc) {
      const auto report = xmr::gradcheck(gco);
      std::cout << xmr::to_json(report).dump(2) << "\n";
      return report.pass() ? 0 : kExitNumerical;
    }
    if (*oc) {
      const auto losses = xmr::oracle::run_loss_suite(oracle_seed, batches);
      const auto metrics = xmr::oracle::run_metric_suite(oracle_seed, metric_instances);
      std::cout << json{{"losses", xmr::oracle::to_json(losses)}, {"metrics", xmr::oracle::to_json(metrics)}}.dump(2)
                << "\n";
      return losses.pass() && metrics.pass() ? 0 : kExitNumerical;
    }
  } catch (const xmr::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const xmr::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const xmr::SamplingError& e) {
    std::fprintf(stderr, "sampling error: %s\n", e.what());
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
