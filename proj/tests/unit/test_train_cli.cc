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

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.h"
#include "xmr/errors.h"
#include "xmr/gradcheck.h"
#include "xmr/retrieval.h"
#include "xmr/trainer.h"

using namespace xmr;

namespace {

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model = xmr::testing::tiny_config();
  c.model.frames = 2;
  c.data.train_ids = 4;
  c.data.test_ids = 2;
  c.data.seqs_per_id = 4;
  c.data.frames_full = 4;
  c.ids_per_batch = 2;
  c.seqs_per_id = 2;
  c.epochs = 2;
  c.checkpoint_every = 1;
  c.lr = 1e-3;
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xmr_test_train_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(XMR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cosine learning rate schedule") {
  CHECK(lr_at(0, 100, 2.0) == 2.0);
  CHECK(lr_at(50, 100, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(lr_at(100, 100, 2.0) == doctest::Approx(0.0));
  CHECK(lr_at(25, 100, 2.0) == doctest::Approx(1.0 + std::sqrt(0.5)).epsilon(1e-15));
  CHECK_THROWS_AS(lr_at(101, 100, 1.0), ConfigError);
  CHECK_THROWS_AS(lr_at(0, 0, 1.0), ConfigError);
}

TEST_CASE("steps per epoch cover the training set once") {
  TrainConfig c;
  CHECK(steps_per_epoch(c) == 8);
  c.data.train_ids = 17;
  CHECK(steps_per_epoch(c) == 9);
}

TEST_CASE("config JSON round trip") {
  TrainConfig c = tiny_train_config();
  c.model.stg_offsets = {1, 2};
  c.loss.tau = 0.25;
  c.out_dir = "somewhere";
  const TrainConfig d = train_config_from_json(to_json(c));
  CHECK(to_json(d) == to_json(c));
  CHECK(flatten(d) == flatten(c));
}

TEST_CASE("config rejects unknown keys and wrong types") {
  nlohmann::json j = to_json(TrainConfig{});
  j["model"]["dims"] = 3;
  CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
  j = to_json(TrainConfig{});
  j["optimizer"] = nlohmann::json::object();
  CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
  j = to_json(TrainConfig{});
  j["model"]["dim"] = "wide";
  CHECK_THROWS_AS(train_config_from_json(j), ConfigError);
}

TEST_CASE("overrides: qualified, bare, ambiguous, unknown, typed") {
  const TrainConfig base;
  CHECK(apply_override(base, "train.epochs", "3").epochs == 3);
  CHECK(apply_override(base, "epochs", "5").epochs == 5);
  CHECK(apply_override(base, "tau", "0.2").loss.tau == 0.2);
  CHECK(apply_override(base, "use_cmi", "false").model.use_cmi == false);
  CHECK(apply_override(base, "data.seqs_per_id", "6").data.seqs_per_id == 6);
  CHECK_THROWS_AS(apply_override(base, "seqs_per_id", "6"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "epochs", "many"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "use_sd", "1"), ConfigError);
}

TEST_CASE("training config validation") {
  TrainConfig c = tiny_train_config();
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train_config();
  c.ids_per_batch = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train_config();
  c.model.classifier_classes = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train_config();
  c.loss.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("held-out data uses disjoint seeds and the test identity count") {
  const TrainConfig c = tiny_train_config();
  const GenerateOptions a = train_data_options(c), b = heldout_data_options(c);
  CHECK(a.seed != b.seed);
  CHECK(a.n_ids == c.data.train_ids);
  CHECK(b.n_ids == c.data.test_ids);
}

TEST_CASE("one optimizer step leaves frozen parameters untouched") {
  const TrainConfig c = tiny_train_config();
  Model model(c.model, c.seed);
  std::vector<std::pair<std::string, Matrix>> frozen;
  for (const Parameter* p : std::as_const(model.params()).all()) {
    if (!p->trainable) frozen.emplace_back(p->name, p->value);
  }
  REQUIRE(!frozen.empty());
  Adam adam(model.params());
  for (const auto& s : adam.slots()) CHECK(s.param->trainable);

  const Dataset data = generate_dataset(train_data_options(c));
  std::mt19937_64 rng(1);
  const Batch batch = sample_batch(data, c.ids_per_batch, c.seqs_per_id, c.model.frames, rng);
  const Matrix before = model.params().at("cmi.query").value;
  model.params().zero_grad();
  ad::Tape tape;
  const TrainForward fw = model.forward_train(tape, batch, c.loss);
  tape.backward(fw.loss);
  adam.step(c.lr);
  CHECK(adam.steps() == 1);
  for (const auto& [name, value] : frozen) CHECK(model.params().at(name).value == value);
  CHECK(model.params().at("cmi.query").value != before);
}

TEST_CASE("checkpoint round trip reproduces the model exactly") {
  const auto dir = scratch("ckpt");
  TrainConfig c = tiny_train_config();
  c.epochs = 1;
  c.out_dir = dir.string();
  const TrainResult r = train(c);
  REQUIRE(std::filesystem::exists(r.final_checkpoint));
  const LoadedCheckpoint ck = load_checkpoint(r.final_checkpoint);
  CHECK(ck.meta.epoch == 1);
  CHECK(ck.meta.step == r.steps);
  REQUIRE(ck.optim != nullptr);
  CHECK(ck.optim->steps() == r.steps);

  const Dataset held = generate_dataset(heldout_data_options(c));
  const auto [a_r, a_i] = extract_features(*r.model, held);
  const auto [b_r, b_i] = extract_features(*ck.model, held);
  CHECK(a_r.features == b_r.features);
  CHECK(a_i.features == b_i.features);

  // Re-serializing gives the same bytes.
  CHECK(serialize_checkpoint(*ck.model, ck.optim.get(), ck.meta) == slurp(r.final_checkpoint));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "epoch_0001.ckpt"));
  CHECK(std::filesystem::exists(dir / "train_log.jsonl"));

  // Corrupt magic and truncated files are rejected.
  std::string bytes = slurp(r.final_checkpoint);
  {
    std::ofstream f(dir / "bad.ckpt", std::ios::binary);
    f << "NOTACKPT" << bytes.substr(8);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), ConfigError);
  {
    std::ofstream f(dir / "short.ckpt", std::ios::binary);
    f << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic") {
  const auto d1 = scratch("det1"), d2 = scratch("det2");
  TrainConfig c = tiny_train_config();
  c.out_dir = d1.string();
  const TrainResult a = train(c);
  c.out_dir = d2.string();
  const TrainResult b = train(c);
  REQUIRE(a.log.size() == b.log.size());
  CHECK(a.log.size() == 8);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].terms.total == b.log[i].terms.total);
  CHECK(slurp(a.final_checkpoint) == slurp(b.final_checkpoint));
  CHECK(slurp(d1 / "train_log.jsonl") == slurp(d2 / "train_log.jsonl"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("training logs every loss term") {
  TrainConfig c = tiny_train_config();
  c.epochs = 1;
  std::vector<StepRecord> seen;
  train(c, [&](const StepRecord& r) { seen.push_back(r); });
  REQUIRE(seen.size() == 4);
  for (const auto& r : seen) {
    CHECK(r.terms.id_stg > 0.0);
    CHECK(r.terms.wrt_tps > 0.0);
    CHECK(r.terms.v2t > 0.0);
    CHECK(r.terms.md > 0.0);
    CHECK(std::isfinite(r.terms.msel));
    CHECK(r.terms.total == doctest::Approx(r.terms.stfl + c.loss.lambda2 * r.terms.msel + c.loss.lambda3 * r.terms.md));
  }
  CHECK(seen.front().lr == c.lr);
  CHECK(seen.back().lr < c.lr);
}

TEST_CASE("gradient check covers every component and catches a corrupted one") {
  GradcheckOptions o;
  const GradcheckReport ok = gradcheck(o);
  CHECK(ok.pass());
  CHECK(ok.entries.size() == gradcheck_components().size());
  o.corrupt = "md_loss";
  const GradcheckReport bad = gradcheck(o);
  CHECK(!bad.pass());
  for (const auto& e : bad.entries) CHECK(e.pass == (e.component != "md_loss"));
}

TEST_CASE("cli exit codes") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("train --epochs 0") == 1);
  CHECK(run_cli("train --bogus-flag 1") == 1);
  CHECK(run_cli("gradcheck --corrupt wrt_loss") == 2);
  CHECK(run_cli("losscheck-oracle --batches 5 --metric-instances 5") == 0);
  CHECK(run_cli("eval --checkpoint /nonexistent/x.ckpt --data /nonexistent --direction i2v --out /tmp/x") == 1);
}

TEST_CASE("cli synth-data writes a loadable dataset") {
  const auto dir = scratch("cli_data");
  CHECK(run_cli("synth-data --ids 3 --seqs-per-id 2 --frames 3 --out " + dir.string()) == 0);
  const Dataset d = load_dataset(dir);
  CHECK(d.samples.size() == 6);
  std::filesystem::remove_all(dir);
}
