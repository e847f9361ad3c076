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
#include "xmr/cmi.h"
#include "xmr/errors.h"

using namespace xmr;
using xmr::testing::random_matrix;
using xmr::testing::random_sequence;
using xmr::testing::same_tokens;
using xmr::testing::tiny_config;

namespace {

CmiParams params(ParameterStore& store, std::uint64_t seed, double std = 0.3) {
  std::mt19937_64 rng(seed);
  CmiParams p = make_cmi_params(store, tiny_config(), rng, std);
  p.residual = false;  // plain attention; the residual has its own case
  return p;
}

}  // namespace

TEST_CASE("cross interaction of a sequence with itself equals self interaction") {
  ParameterStore store;
  const CmiParams p = params(store, 1);
  std::mt19937_64 rng(2);
  const SequenceFeatures x = random_sequence(rng, 3, 9, 16);
  const auto [a, b] = cross_interact(x, x, p);
  const SequenceFeatures s = self_interact(x, p);
  CHECK(same_tokens(a, s));
  CHECK(same_tokens(b, s));
}

TEST_CASE("swapping modalities swaps the outputs") {
  ParameterStore store;
  const CmiParams p = params(store, 3);
  std::mt19937_64 rng(4);
  const SequenceFeatures r = random_sequence(rng, 2, 9, 16, Modality::kRgb);
  const SequenceFeatures i = random_sequence(rng, 2, 9, 16, Modality::kIr);
  const auto [ar, ai] = cross_interact(r, i, p);
  const auto [br, bi] = cross_interact(i, r, p);
  CHECK(same_tokens(ar, bi));
  CHECK(same_tokens(ai, br));
  CHECK(!same_tokens(ar, ai));
}

TEST_CASE("a single key returns its value row") {
  ParameterStore store;
  const CmiParams p = params(store, 5);
  std::mt19937_64 rng(6);
  const SequenceFeatures r = random_sequence(rng, 2, 1, 16);
  const SequenceFeatures i = random_sequence(rng, 2, 1, 16);
  const auto [fr, fi] = cross_interact(r, i, p);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK((fr.frames[t].tokens - r.frames[t].tokens * p.value->value).norm() < 1e-14);
    CHECK((fi.frames[t].tokens - i.frames[t].tokens * p.value->value).norm() < 1e-14);
  }
}

TEST_CASE("2x2 hand example") {
  ParameterStore store;
  CmiParams p = params(store, 7);
  p.query->value = Matrix::Identity(16, 16);
  p.key->value = Matrix::Identity(16, 16);
  p.value->value = Matrix::Identity(16, 16);
  // Query rows come from the other modality; scores are scaled by 1/4.
  Matrix rgb = Matrix::Zero(2, 16), ir = Matrix::Zero(2, 16);
  rgb(0, 0) = 4.0 * std::log(3.0);
  rgb(1, 1) = 1.0;
  ir(0, 0) = 1.0;
  ir(1, 1) = 4.0 * std::log(2.0);
  SequenceFeatures r, i;
  r.frames = {{rgb, 0}};
  i.frames = {{ir, 0}};
  const auto [fr, fi] = cross_interact(r, i, p);
  // ir row 0 scores rgb rows (ln 3, 0): weights 3/4, 1/4.
  CHECK(fr.frames[0].tokens(0, 0) == doctest::Approx(0.75 * 4.0 * std::log(3.0)).epsilon(1e-14));
  CHECK(fr.frames[0].tokens(0, 1) == doctest::Approx(0.25).epsilon(1e-14));
  // ir row 1 scores rgb rows (0, ln 2): weights 1/3, 2/3.
  CHECK(fr.frames[0].tokens(1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(fr.frames[0].tokens(1, 0) == doctest::Approx(4.0 * std::log(3.0) / 3.0).epsilon(1e-14));
  // rgb row 0 scores ir rows (ln 3, 0).
  CHECK(fi.frames[0].tokens(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(fi.frames[0].tokens(0, 1) == doctest::Approx(0.25 * 4.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("works with and without the diffused row") {
  ParameterStore store;
  const CmiParams p = params(store, 8);
  std::mt19937_64 rng(9);
  for (int tokens : {9, 10}) {
    const SequenceFeatures r = random_sequence(rng, 3, tokens, 16);
    const SequenceFeatures i = random_sequence(rng, 3, tokens, 16);
    const auto [fr, fi] = cross_interact(r, i, p);
    CHECK(fr.frames[2].tokens.rows() == tokens);
    CHECK(self_interact(r, p).frames[0].tokens.rows() == tokens);
  }
}

TEST_CASE("cross interaction rejects mismatched sequences") {
  ParameterStore store;
  const CmiParams p = params(store, 10);
  std::mt19937_64 rng(11);
  const SequenceFeatures a = random_sequence(rng, 3, 9, 16);
  CHECK_THROWS_AS(cross_interact(a, random_sequence(rng, 2, 9, 16), p), ConfigError);
  CHECK_THROWS_AS(cross_interact(a, random_sequence(rng, 3, 10, 16), p), ConfigError);
}

TEST_CASE("residual adds the key/value source") {
  ParameterStore store;
  CmiParams p = params(store, 12);
  std::mt19937_64 rng(13);
  const SequenceFeatures x = random_sequence(rng, 2, 9, 16);
  const SequenceFeatures plain = self_interact(x, p);
  p.residual = true;
  const SequenceFeatures res = self_interact(x, p);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK((res.frames[t].tokens - plain.frames[t].tokens - x.frames[t].tokens).norm() < 1e-13);
  }
}

TEST_CASE("tap_cls averages the chosen row") {
  SequenceFeatures s;
  Matrix a(3, 2), b(3, 2);
  a << 9, 9, 1, 3, 9, 9;
  b << 9, 9, 3, 1, 9, 9;
  s.frames = {{a, 0}, {b, 1}};
  s.modality = Modality::kIr;
  const ModalInvariantFeature f = tap_cls(s, 1);
  CHECK(f.f(0) == 2.0);
  CHECK(f.f(1) == 2.0);
  CHECK(f.modality == Modality::kIr);
  CHECK_THROWS_AS(tap_cls(s, 3), ConfigError);
  CHECK_THROWS_AS(tap_cls(SequenceFeatures{}, 0), ConfigError);
}
