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

#include <algorithm>
#include <random>

#include "helpers.h"
#include "xmr/backbone.h"
#include "xmr/errors.h"

using namespace xmr;
using xmr::testing::random_matrix;
using xmr::testing::random_sequence;
using xmr::testing::same_tokens;
using xmr::testing::tiny_config;

namespace {

struct Fixture {
  ModelConfig cfg = tiny_config();
  ParameterStore store;
  std::mt19937_64 rng{5};
  VisionParams vision;
  Fixture() { vision = make_vision_params(store, cfg, rng, 0.2); }
};

Frame random_frame(std::mt19937_64& rng, const ModelConfig& cfg) {
  std::normal_distribution<double> n(0.0, 1.0);
  Frame f(static_cast<std::size_t>(cfg.frame_height * cfg.frame_width * cfg.channels));
  for (double& v : f) v = n(rng);
  return f;
}

}  // namespace

TEST_CASE("patchify_and_embed token counts") {
  std::mt19937_64 rng(1);
  for (auto [h, w, p, rows] : {std::tuple{288, 144, 16, 163}, std::tuple{32, 16, 8, 9}}) {
    ModelConfig cfg = tiny_config();
    cfg.frame_height = h;
    cfg.frame_width = w;
    cfg.patch_size = p;
    ParameterStore store;
    const VisionParams v = make_vision_params(store, cfg, rng);
    const TokenGrid g = patchify_and_embed(random_frame(rng, cfg), v, cfg);
    CHECK(g.tokens.rows() == rows);
    CHECK(g.tokens.cols() == cfg.dim);
    CHECK(cfg.tokens() == rows);
  }
}

TEST_CASE("patchify orders pixels as (dy, dx, channel) within row-major patches") {
  ModelConfig cfg = tiny_config();
  cfg.frame_height = 4;
  cfg.frame_width = 4;
  cfg.patch_size = 2;
  Frame f(48);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i);
  const std::vector<Frame> seq{f};
  const std::vector<Frame>* seqs[] = {&seq};
  const Matrix p = patchify(seqs, cfg);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 12);
  // Patch 1 is the top-right 2x2 block: pixels (0,2), (0,3), (1,2), (1,3).
  const double expect[] = {6, 7, 8, 9, 10, 11, 18, 19, 20, 21, 22, 23};
  for (int c = 0; c < 12; ++c) CHECK(p(1, c) == expect[c]);
}

TEST_CASE("zero frame embeds to [cls] + pos and bias + pos") {
  Fixture fx;
  const Frame zero(static_cast<std::size_t>(fx.cfg.frame_height * fx.cfg.frame_width * fx.cfg.channels), 0.0);
  const TokenGrid a = patchify_and_embed(zero, fx.vision, fx.cfg);
  const TokenGrid b = patchify_and_embed(zero, fx.vision, fx.cfg);
  CHECK(a.tokens == b.tokens);
  const Matrix& pos = fx.vision.pos->value;
  CHECK((a.tokens.row(0) - (fx.vision.cls->value.row(0) + pos.row(0))).norm() < 1e-14);
  for (int i = 1; i < fx.cfg.tokens(); ++i) {
    CHECK((a.tokens.row(i) - (fx.vision.patch_bias->value.row(0) + pos.row(i))).norm() < 1e-14);
  }
}

TEST_CASE("basic_encode: empty stack, single frame, frame permutation") {
  Fixture fx;
  std::mt19937_64 rng(2);
  const SequenceFeatures seq = random_sequence(rng, 4, fx.cfg.tokens(), fx.cfg.dim);

  ModelConfig none = fx.cfg;
  none.basic_layers = 0;
  VisionParams empty = fx.vision;
  empty.basic.clear();
  CHECK(same_tokens(basic_encode(seq, empty, none), seq));

  SequenceFeatures one;
  one.frames = {seq.frames[2]};
  const SequenceFeatures enc_one = basic_encode(one, fx.vision, fx.cfg);
  const SequenceFeatures by_block = vanilla_block(one, fx.vision.basic[0], fx.cfg.heads);
  CHECK(same_tokens(enc_one, by_block));

  SequenceFeatures perm = seq;
  std::reverse(perm.frames.begin(), perm.frames.end());
  const SequenceFeatures a = basic_encode(seq, fx.vision, fx.cfg);
  const SequenceFeatures b = basic_encode(perm, fx.vision, fx.cfg);
  for (std::size_t t = 0; t < 4; ++t) CHECK(a.frames[t].tokens == b.frames[3 - t].tokens);
}

TEST_CASE("stg_block degeneracies are bit-exact") {
  Fixture fx;
  std::mt19937_64 rng(3);
  const SequenceFeatures seq = random_sequence(rng, 4, fx.cfg.tokens(), fx.cfg.dim);
  const BlockParams& p = fx.vision.stg[0];
  const SequenceFeatures vanilla = vanilla_block(seq, p, fx.cfg.heads);

  CHECK(same_tokens(stg_block(seq, 0, {}, p, fx.cfg.heads), vanilla));
  const std::vector<int> zeros(static_cast<std::size_t>(fx.cfg.heads), 0);
  CHECK(same_tokens(stg_block(seq, fx.cfg.heads, zeros, p, fx.cfg.heads), vanilla));

  SequenceFeatures single;
  single.frames = {seq.frames[0]};
  const std::vector<int> offsets{1, -1};
  CHECK(same_tokens(stg_block(single, 2, offsets, p, fx.cfg.heads), vanilla_block(single, p, fx.cfg.heads)));

  // With real offsets the output of frame 0 depends on its neighbours.
  SequenceFeatures other = seq;
  other.frames[1].tokens = random_matrix(rng, fx.cfg.tokens(), fx.cfg.dim);
  const auto a = stg_block(seq, 2, offsets, p, fx.cfg.heads);
  const auto b = stg_block(other, 2, offsets, p, fx.cfg.heads);
  CHECK(a.frames[0].tokens != b.frames[0].tokens);
  CHECK(a.frames[2].tokens != b.frames[2].tokens);
  CHECK(a.frames[3].tokens == b.frames[3].tokens);  // frame 3 sees 0 and 2 only
}

TEST_CASE("stg_block rejects bad head groups") {
  Fixture fx;
  std::mt19937_64 rng(4);
  const SequenceFeatures seq = random_sequence(rng, 2, fx.cfg.tokens(), fx.cfg.dim);
  const std::vector<int> one{1};
  CHECK_THROWS_AS(stg_block(seq, 2, one, fx.vision.stg[0], fx.cfg.heads), ConfigError);
  const std::vector<int> many(5, 1);
  CHECK_THROWS_AS(stg_block(seq, 5, many, fx.vision.stg[0], fx.cfg.heads), ConfigError);
}

TEST_CASE("grouped layout wraps offsets cyclically per head") {
  TokenLayout l{2, 3, 5, 0};
  const std::vector<int> offsets{1, -1, 2};
  const ad::AttentionLayout a = grouped_layout(l, 4, offsets);
  REQUIRE(a.key_frame.size() == 4);
  // Sequence 1 frames occupy 3..5.
  CHECK(a.key_frame[0] == std::vector<int>{1, 2, 0, 4, 5, 3});
  CHECK(a.key_frame[1] == std::vector<int>{2, 0, 1, 5, 3, 4});
  CHECK(a.key_frame[2] == std::vector<int>{2, 0, 1, 5, 3, 4});
  CHECK(a.key_frame[3] == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("default STG offsets alternate sign and grow") {
  ModelConfig c = tiny_config();
  c.heads = 8;
  c.temporal_heads = 5;
  c.dim = 16;
  CHECK(c.resolved_offsets() == std::vector<int>{1, -1, 2, -2, 3});
  c.stg_offsets = {0, 0, 1, 1, 1};
  CHECK(c.resolved_offsets() == std::vector<int>{0, 0, 1, 1, 1});
  c.stg_offsets = {1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("tps_shift hand trace, identity and inverse") {
  std::mt19937_64 rng(6);
  // T=2, 2 tokens; token 1 pulled from t-1.
  SequenceFeatures seq = random_sequence(rng, 2, 2, 3);
  const ShiftSpec spec{0, -1};
  const SequenceFeatures z = tps_shift(seq, spec);
  CHECK(z.frames[0].tokens.row(0) == seq.frames[0].tokens.row(0));
  CHECK(z.frames[1].tokens.row(0) == seq.frames[1].tokens.row(0));
  CHECK(z.frames[0].tokens.row(1) == seq.frames[1].tokens.row(1));
  CHECK(z.frames[1].tokens.row(1) == seq.frames[0].tokens.row(1));

  const SequenceFeatures big = random_sequence(rng, 5, 9, 4);
  CHECK(same_tokens(tps_shift(big, ShiftSpec(9, 0)), big));
  const ShiftSpec def = default_shift_spec(9, {1, 4});
  CHECK(def == ShiftSpec{0, -1, 0, 1, 0, -1, 0, 1, 0});
  CHECK(same_tokens(tps_shift(tps_shift(big, def), inverse_shift_spec(def)), big));
  CHECK(!same_tokens(tps_shift(big, def), big));
}

TEST_CASE("tps_shift is a permutation of token rows") {
  const TokenLayout l{2, 4, 9, 0};
  auto idx = shift_gather_index(l, default_shift_spec(9, {1, 4}));
  std::sort(idx.begin(), idx.end());
  for (int i = 0; i < l.rows(); ++i) CHECK(idx[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("tps_shift rejects invalid specs") {
  std::mt19937_64 rng(7);
  const SequenceFeatures seq = random_sequence(rng, 3, 4, 2);
  CHECK_THROWS_AS(tps_shift(seq, ShiftSpec{1, 0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(tps_shift(seq, ShiftSpec{0, 2, 0, 0}), ConfigError);
  CHECK_THROWS_AS(tps_shift(seq, ShiftSpec{0, 0, 0}), ConfigError);
}

TEST_CASE("tps_block degeneracies are bit-exact") {
  Fixture fx;
  std::mt19937_64 rng(8);
  const SequenceFeatures seq = random_sequence(rng, 4, fx.cfg.tokens(), fx.cfg.dim);
  const ShiftSpec def = default_shift_spec(fx.cfg.tokens(), fx.cfg.tps_shift_ratio);
  const BlockParams& p = fx.vision.tps;
  CHECK(same_tokens(tps_block(seq, def, p, fx.cfg.heads, BlockMode::kIdentity), seq));
  CHECK(same_tokens(tps_block(seq, ShiftSpec(static_cast<std::size_t>(fx.cfg.tokens()), 0), p, fx.cfg.heads),
                    vanilla_block(seq, p, fx.cfg.heads)));
  SequenceFeatures single;
  single.frames = {seq.frames[1]};
  CHECK(same_tokens(tps_block(single, def, p, fx.cfg.heads), vanilla_block(single, p, fx.cfg.heads)));
  CHECK(!same_tokens(tps_block(seq, def, p, fx.cfg.heads), vanilla_block(seq, p, fx.cfg.heads)));
}

TEST_CASE("stg_sequence_feature averages [cls] rows") {
  SequenceFeatures s;
  Matrix a(2, 2), b(2, 2);
  a << 0, 2, 9, 9;
  b << 2, 0, 7, 7;
  s.frames = {{a, 0}, {b, 1}};
  const RowVector f = stg_sequence_feature(s);
  CHECK(f(0) == 1.0);
  CHECK(f(1) == 1.0);

  std::mt19937_64 rng(9);
  SequenceFeatures same;
  const Matrix g = random_matrix(rng, 3, 4);
  same.frames = {{g, 0}, {g, 1}, {g, 2}};
  CHECK((stg_sequence_feature(same) - g.row(0)).norm() < 1e-15);

  SequenceFeatures r = random_sequence(rng, 4, 3, 4);
  SequenceFeatures perm = r;
  std::swap(perm.frames[0], perm.frames[3]);
  CHECK((stg_sequence_feature(r) - stg_sequence_feature(perm)).norm() < 1e-15);
  CHECK_THROWS_AS(stg_sequence_feature(SequenceFeatures{}), ConfigError);
}

TEST_CASE("STG block has exactly the parameters of a vanilla block") {
  Fixture fx;
  const std::size_t d = static_cast<std::size_t>(fx.cfg.dim);
  CHECK(fx.vision.stg[0].count() == fx.vision.basic[0].count());
  CHECK(fx.store.count("visual.stg.0.") == fx.store.count("visual.basic.0."));
  CHECK(fx.vision.stg[0].count() == 12 * d * d + 13 * d);
}

TEST_CASE("modality tags do not change numerics") {
  Fixture fx;
  std::mt19937_64 rng(10);
  SequenceFeatures rgb = random_sequence(rng, 3, fx.cfg.tokens(), fx.cfg.dim, Modality::kRgb);
  SequenceFeatures ir = rgb;
  ir.modality = Modality::kIr;
  const std::vector<int> offsets{1, -1};
  CHECK(same_tokens(stg_block(rgb, 2, offsets, fx.vision.stg[0], fx.cfg.heads),
                    stg_block(ir, 2, offsets, fx.vision.stg[0], fx.cfg.heads)));
  CHECK(same_tokens(basic_encode(rgb, fx.vision, fx.cfg), basic_encode(ir, fx.vision, fx.cfg)));
}

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.dim = 18;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.temporal_heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.frame_width = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
