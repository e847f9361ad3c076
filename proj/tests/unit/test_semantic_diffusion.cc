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

#include <cmath>
#include <random>

#include "helpers.h"
#include "xmr/errors.h"
#include "xmr/semantic_diffusion.h"

using namespace xmr;
using xmr::testing::random_matrix;
using xmr::testing::random_sequence;
using xmr::testing::tiny_config;

namespace {

DiffusionParams identity_params(ParameterStore& store, int dim) {
  std::mt19937_64 rng(0);
  DiffusionParams p = make_diffusion_params(store, tiny_config(), rng);
  for (Parameter* w : {p.query, p.key, p.value}) w->value = Matrix::Identity(dim, dim);
  return p;
}

}  // namespace

TEST_CASE("diffuse prepends one row per frame and keeps the originals") {
  ModelConfig cfg = tiny_config();
  ParameterStore store;
  std::mt19937_64 rng(1);
  const DiffusionParams p = make_diffusion_params(store, cfg, rng, 0.3);
  const SequenceFeatures seq = random_sequence(rng, 3, cfg.tokens(), cfg.dim);
  const RowVector text = random_matrix(rng, 1, cfg.dim);
  const SequenceFeatures out = diffuse(text, seq, p);
  REQUIRE(out.frames.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(out.frames[t].tokens.rows() == cfg.tokens() + 1);
    CHECK(out.frames[t].tokens.bottomRows(cfg.tokens()) == seq.frames[t].tokens);
  }
  // Frames are handled independently.
  SequenceFeatures rev = seq;
  std::swap(rev.frames[0], rev.frames[2]);
  const SequenceFeatures out_rev = diffuse(text, rev, p);
  CHECK(out_rev.frames[0].tokens == out.frames[2].tokens);
  CHECK(out_rev.frames[1].tokens == out.frames[1].tokens);
}

TEST_CASE("diffuse hand example: scores (ln 3, 0) weight values 3:1") {
  ParameterStore store;
  const DiffusionParams p = identity_params(store, 16);
  Matrix tokens = Matrix::Zero(2, 16);
  tokens(0, 0) = std::log(3.0) * 4.0;  // scale 1/sqrt(16)
  SequenceFeatures seq;
  seq.frames = {{tokens, 0}};
  RowVector text = RowVector::Zero(16);
  text(0) = 1.0;
  const SequenceFeatures out = diffuse(text, seq, p);
  CHECK(out.frames[0].tokens(0, 0) == doctest::Approx(0.75 * std::log(3.0) * 4.0).epsilon(1e-14));
  CHECK(out.frames[0].tokens.row(0).tail(15).norm() == 0.0);
}

TEST_CASE("diffuse with identical value rows returns that row") {
  ParameterStore store;
  const DiffusionParams p = identity_params(store, 16);
  std::mt19937_64 rng(2);
  const RowVector row = random_matrix(rng, 1, 16);
  SequenceFeatures seq;
  seq.frames = {{row.replicate(5, 1), 0}};
  const SequenceFeatures out = diffuse(random_matrix(rng, 1, 16), seq, p);
  CHECK((out.frames[0].tokens.row(0) - row).norm() < 1e-14);
}

TEST_CASE("diffuse checks widths and sequence counts") {
  ModelConfig cfg = tiny_config();
  ParameterStore store;
  std::mt19937_64 rng(3);
  const DiffusionParams p = make_diffusion_params(store, cfg, rng);
  const SequenceFeatures seq = random_sequence(rng, 2, cfg.tokens(), cfg.dim);
  CHECK_THROWS_AS(diffuse(RowVector::Zero(cfg.dim + 1), seq, p), ConfigError);
  ad::Tape tape;
  const SequenceFeatures two[] = {seq, seq};
  const SequenceBatch b = to_batch(tape, two);
  CHECK_THROWS_AS(diffuse(tape, p, tape.constant(Matrix::Zero(1, cfg.dim)), b), ConfigError);
}

TEST_CASE("diffusion cost is one query per frame") {
  ModelConfig cfg = tiny_config();
  ParameterStore store;
  std::mt19937_64 rng(4);
  const DiffusionParams p = make_diffusion_params(store, cfg, rng);
  for (int frames : {1, 2, 4, 8}) {
    ad::Tape tape;
    const SequenceFeatures seq = random_sequence(rng, frames, cfg.tokens(), cfg.dim);
    const SequenceBatch b = to_batch(tape, std::span(&seq, 1));
    diffuse(tape, p, tape.constant(random_matrix(rng, 1, cfg.dim)), b);
    CHECK(tape.attention_stats().calls == 1);
    CHECK(tape.attention_stats().score_evals == static_cast<std::int64_t>(frames) * cfg.tokens());
  }
}

TEST_CASE("prompt encoder: shapes, sharing and errors") {
  ModelConfig cfg = tiny_config();
  ParameterStore store;
  std::mt19937_64 rng(5);
  PromptSet prompts = make_prompt_set(store, cfg, rng);
  const TextEncoderParams enc = make_text_encoder(store, cfg, rng);
  CHECK(prompts.length() == 1 + cfg.prompt_tokens + 9);
  CHECK(prompts.learnable->value.rows() == cfg.classifier_classes * cfg.prompt_tokens);
  CHECK(!prompts.template_tokens->trainable);
  CHECK(prompts.learnable->trainable);

  const RowVector a = encode_prompt(0, prompts, enc);
  const RowVector b = encode_prompt(1, prompts, enc);
  CHECK(a.cols() == cfg.dim);
  CHECK(a != b);
  // Same learnable rows, same embedding.
  prompts.learnable->value.middleRows(cfg.prompt_tokens, cfg.prompt_tokens) =
      prompts.learnable->value.topRows(cfg.prompt_tokens);
  CHECK(encode_prompt(1, prompts, enc) == encode_prompt(0, prompts, enc));

  ad::Tape tape;
  const int ids[] = {2, 0, 2};
  const Matrix batch = encode_prompts(tape, prompts, enc, ids).value();
  CHECK(batch.rows() == 3);
  CHECK(batch.row(0) == batch.row(2));
  CHECK(batch.row(1) == a);

  CHECK_THROWS_AS(encode_prompt(cfg.classifier_classes, prompts, enc), ConfigError);
  CHECK_THROWS_AS(encode_prompt(-1, prompts, enc), ConfigError);
  CHECK_THROWS_AS(encode_prompts(tape, prompts, enc, std::span<const int>{}), ConfigError);
}

TEST_CASE("with no learnable prompt tokens every identity shares one embedding") {
  ModelConfig cfg = tiny_config();
  cfg.prompt_tokens = 0;
  ParameterStore store;
  std::mt19937_64 rng(6);
  const PromptSet prompts = make_prompt_set(store, cfg, rng);
  const TextEncoderParams enc = make_text_encoder(store, cfg, rng);
  const RowVector a = encode_prompt(0, prompts, enc);
  for (int i = 1; i < cfg.classifier_classes; ++i) CHECK(encode_prompt(i, prompts, enc) == a);
}
