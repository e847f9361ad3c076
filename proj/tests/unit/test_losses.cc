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
#include <functional>
#include <random>

#include "helpers.h"
#include "xmr/errors.h"
#include "xmr/losses.h"
#include "xmr/oracles.h"

using namespace xmr;
using xmr::testing::random_matrix;

namespace {

const std::vector<int> kPk = {7, 7, 3, 3, 11, 11};  // P=3, K=2

// Central differences of a scalar function with respect to every entry of m.
Matrix numeric_grad(Matrix m, const std::function<double(const Matrix&)>& f) {
  const double h = 1e-6;
  Matrix g(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double x = m.data()[i];
    m.data()[i] = x + h;
    const double up = f(m);
    m.data()[i] = x - h;
    const double down = f(m);
    m.data()[i] = x;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12}); }

}  // namespace

TEST_CASE("id loss: uniform logits give ln C") {
  const Matrix f = Matrix::Ones(3, 5);
  const int labels[] = {0, 3, 2};
  const auto r = losses::id_loss(f, labels, Matrix::Zero(5, 4), Matrix::Zero(1, 4));
  CHECK(r.value == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  const int bad[] = {0, 4, 2};
  CHECK_THROWS_AS(losses::id_loss(f, bad, Matrix::Zero(5, 4), Matrix::Zero(1, 4)), ConfigError);
  CHECK_THROWS_AS(losses::id_loss(f, labels, Matrix::Zero(4, 4), Matrix::Zero(1, 4)), ConfigError);
}

TEST_CASE("wrt loss: identical features give ln 2") {
  const Matrix f = Matrix::Ones(6, 4);
  CHECK(losses::wrt_loss(f, kPk).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("wrt loss: anchors need a positive and a negative") {
  std::mt19937_64 rng(1);
  const Matrix f = random_matrix(rng, 3, 4);
  const int singleton[] = {0, 0, 1};
  CHECK_THROWS_AS(losses::wrt_loss(f, singleton), ConfigError);
  const int one_id[] = {2, 2, 2};
  CHECK_THROWS_AS(losses::wrt_loss(f, one_id), ConfigError);
}

TEST_CASE("wrt weights are softmax over distances") {
  // Anchor 0 has positives at distance 1 and 2, negatives at distance 3.
  Matrix f(5, 1);
  f << 0, 1, 2, 3, 3;
  const int labels[] = {0, 0, 0, 1, 1};
  const auto w = losses::wrt_weights(f, labels);
  const double e = std::exp(1.0);
  CHECK(w.positive[0][0] == doctest::Approx(e / (e + e * e)));
  CHECK(w.positive[0][1] == doctest::Approx(e * e / (e + e * e)));
  CHECK(w.negative[0][0] == doctest::Approx(0.5));
  const double anchor0 = std::log1p(std::exp((e * 1 + e * e * 2) / (e + e * e) - 3.0));
  CHECK(anchor0 > 0.0);
  CHECK(oracle::wrt_loss(f, labels) == doctest::Approx(losses::wrt_loss(f, labels).value).epsilon(1e-14));
}

TEST_CASE("v2t loss: single identity is zero, equal logits give ln 2") {
  std::mt19937_64 rng(2);
  const Matrix fr = random_matrix(rng, 2, 3), fi = random_matrix(rng, 2, 3);
  const Matrix proj = random_matrix(rng, 6, 4);
  const int labels[] = {5, 5};
  const int one[] = {5};
  CHECK(losses::v2t_loss(fr, fi, random_matrix(rng, 1, 4), one, proj, labels).value == 0.0);
  const RowVector t = random_matrix(rng, 1, 4);
  Matrix text(2, 4);
  text << t, t;
  const int two[] = {5, 9};
  CHECK(losses::v2t_loss(fr, fi, text, two, proj, labels).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const int missing[] = {8, 9};
  CHECK_THROWS_AS(losses::v2t_loss(fr, fi, text, missing, proj, labels), ConfigError);
  CHECK_THROWS_AS(losses::v2t_loss(fr, fi, text, two, random_matrix(rng, 5, 4), labels), ConfigError);
}

TEST_CASE("md loss: two orthogonal pairs at tau 0.5") {
  const Matrix f = Matrix::Identity(2, 2);
  CHECK(losses::md_loss(f, f, 0.5).value == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
  CHECK(losses::md_loss(f, f, 0.5, losses::MdMode::kLiteral).value == doctest::Approx(-2.0).epsilon(1e-14));
  // 0.1269 to four places.
  CHECK(std::abs(losses::md_loss(f, f, 0.5).value - 0.1269) < 5e-5);
}

TEST_CASE("md loss: opposite negative at tau 1") {
  Matrix f(2, 2);
  f << 1, 0, -1, 0;
  CHECK(losses::md_loss(f, f, 1.0).value == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0)))));
}

TEST_CASE("class-aware md loss") {
  std::mt19937_64 rng(11);
  const Matrix r = random_matrix(rng, 6, 4), i = random_matrix(rng, 6, 4);
  // With all identities distinct it is the standard loss.
  const int distinct[] = {0, 1, 2, 3, 4, 5};
  CHECK(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware, distinct).value ==
        doctest::Approx(losses::md_loss(r, i, 0.5).value).epsilon(1e-14));
  // With one identity only the positive remains: loss 0.
  const int same[] = {3, 3, 3, 3, 3, 3};
  CHECK(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware, same).value == 0.0);
  // Same-identity pairs no longer count as negatives, so the loss drops.
  CHECK(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware, kPk).value < losses::md_loss(r, i, 0.5).value);
  CHECK(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware, kPk).value ==
        doctest::Approx(oracle::md_loss_class_aware(r, i, kPk, 0.5)).epsilon(1e-13));
  CHECK(losses::md_loss(i, r, 0.5, losses::MdMode::kClassAware, kPk).value ==
        doctest::Approx(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware, kPk).value).epsilon(1e-13));
  CHECK_THROWS_AS(losses::md_loss(r, i, 0.5, losses::MdMode::kClassAware), ConfigError);
}

TEST_CASE("md loss: identical features give ln n; scale invariant") {
  std::mt19937_64 rng(3);
  const RowVector row = random_matrix(rng, 1, 5);
  const Matrix f = row.replicate(4, 1);
  CHECK(losses::md_loss(f, f, 0.3).value == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const Matrix a = random_matrix(rng, 4, 5), b = random_matrix(rng, 4, 5);
  CHECK(losses::md_loss(a, b, 0.7).value == doctest::Approx(losses::md_loss(3.0 * a, 0.5 * b, 0.7).value).epsilon(1e-13));
}

TEST_CASE("md loss errors") {
  std::mt19937_64 rng(4);
  const Matrix a = random_matrix(rng, 3, 4);
  CHECK_THROWS_AS(losses::md_loss(a.topRows(1), a.topRows(1), 1.0), ConfigError);
  CHECK_THROWS_AS(losses::md_loss(a, a, 0.0), ConfigError);
  CHECK_THROWS_AS(losses::md_loss(a, random_matrix(rng, 3, 5), 1.0), ConfigError);
  Matrix z = a;
  z.row(1).setZero();
  CHECK_THROWS_AS(losses::md_loss(z, a, 1.0), ConfigError);
}

TEST_CASE("msel loss: equal modalities give zero") {
  std::mt19937_64 rng(5);
  const Matrix f = random_matrix(rng, 6, 4);
  // Within-modality and cross-modality means differ only by the zero self distance.
  const auto r = losses::msel_loss(f, f, kPk, 3, 2);
  CHECK(r.value > 0.0);
  const Matrix same = RowVector(random_matrix(rng, 1, 4)).replicate(6, 1);
  CHECK(losses::msel_loss(same, same, kPk, 3, 2).value == 0.0);
}

TEST_CASE("msel loss: P=1, K=2 hand example") {
  Matrix r(2, 2), i(2, 2);
  r << 0, 0, 1, 0;
  i << 0, 0, 0, 1;
  const int labels[] = {4, 4};
  const double s2 = std::sqrt(2.0);
  const double expected = (0.5 + (1.0 - s2) * (1.0 - s2) / 2.0) / 4.0;
  CHECK(losses::msel_loss(r, i, labels, 1, 2).value == doctest::Approx(expected).epsilon(1e-14));
  CHECK(oracle::msel_loss(r, i, labels) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("msel loss: 1-D pair shifted by one") {
  Matrix r(2, 1), i(2, 1);
  r << 0, 2;
  i << 1, 3;
  const int labels[] = {0, 0};
  // D1 = 2 everywhere; D2 = (2, 1) for RGB and (1, 2) for IR.
  CHECK(losses::msel_loss(r, i, labels, 1, 2).value == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("msel loss errors") {
  std::mt19937_64 rng(6);
  const Matrix f = random_matrix(rng, 6, 4);
  CHECK_THROWS_AS(losses::msel_loss(f, f, kPk, 2, 3), ConfigError);
  CHECK_THROWS_AS(losses::msel_loss(f, f, kPk, 3, 3), ConfigError);
  const int k1[] = {0, 1, 2, 3, 4, 5};
  CHECK_THROWS_AS(losses::msel_loss(f, f, k1, 6, 1), ConfigError);
  const int uneven[] = {0, 0, 0, 1, 1, 2};
  CHECK_THROWS_AS(losses::msel_loss(f, f, uneven, 3, 2), ConfigError);
}

TEST_CASE("losses are nonnegative and modality-swap symmetric") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix r = random_matrix(rng, 6, 5), i = random_matrix(rng, 6, 5);
    const double md = losses::md_loss(r, i, 0.5).value;
    const double ms = losses::msel_loss(r, i, kPk, 3, 2).value;
    CHECK(md >= 0.0);
    CHECK(ms >= 0.0);
    CHECK(losses::wrt_loss(r, kPk).value >= 0.0);
    CHECK(losses::md_loss(i, r, 0.5).value == doctest::Approx(md).epsilon(1e-13));
    CHECK(losses::msel_loss(i, r, kPk, 3, 2).value == doctest::Approx(ms).epsilon(1e-13));
  }
}

TEST_CASE("losses agree with the loop oracles") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix r = random_matrix(rng, 6, 5), i = random_matrix(rng, 6, 5);
    const Matrix w = random_matrix(rng, 5, 12), b = random_matrix(rng, 1, 12);
    const Matrix text = random_matrix(rng, 3, 4), proj = random_matrix(rng, 10, 4);
    const int ids[] = {11, 3, 7};
    CHECK(std::abs(losses::id_loss(r, kPk, w, b).value - oracle::id_loss(r, kPk, w, b)) < 1e-12);
    CHECK(std::abs(losses::wrt_loss(r, kPk).value - oracle::wrt_loss(r, kPk)) < 1e-12);
    CHECK(std::abs(losses::v2t_loss(r, i, text, ids, proj, kPk).value - oracle::v2t_loss(r, i, text, ids, proj, kPk)) <
          1e-12);
    CHECK(std::abs(losses::md_loss(r, i, 0.5).value - oracle::md_loss(r, i, 0.5, false)) < 1e-12);
    CHECK(std::abs(losses::md_loss(r, i, 0.5, losses::MdMode::kLiteral).value - oracle::md_loss(r, i, 0.5, true)) <
          1e-12);
    CHECK(std::abs(losses::msel_loss(r, i, kPk, 3, 2).value - oracle::msel_loss(r, i, kPk)) < 1e-12);
  }
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(9);
  const Matrix r = random_matrix(rng, 6, 4), i = random_matrix(rng, 6, 4);
  const Matrix w = random_matrix(rng, 4, 12), b = random_matrix(rng, 1, 12);
  const Matrix text = random_matrix(rng, 3, 3), proj = random_matrix(rng, 8, 3);
  const int ids[] = {3, 7, 11};

  const auto id = losses::id_loss(r, kPk, w, b);
  CHECK(rel(id.d_features, numeric_grad(r, [&](const Matrix& m) { return losses::id_loss(m, kPk, w, b).value; })) < 1e-7);
  CHECK(rel(id.d_weight, numeric_grad(w, [&](const Matrix& m) { return losses::id_loss(r, kPk, m, b).value; })) < 1e-7);
  CHECK(rel(id.d_bias, numeric_grad(b, [&](const Matrix& m) { return losses::id_loss(r, kPk, w, m).value; })) < 1e-7);

  CHECK(rel(losses::wrt_loss(r, kPk).d_features,
            numeric_grad(r, [&](const Matrix& m) { return losses::wrt_loss(m, kPk).value; })) < 1e-7);

  const auto v = losses::v2t_loss(r, i, text, ids, proj, kPk);
  CHECK(rel(v.d_rgb, numeric_grad(r, [&](const Matrix& m) { return losses::v2t_loss(m, i, text, ids, proj, kPk).value; })) <
        1e-7);
  CHECK(rel(v.d_text, numeric_grad(text, [&](const Matrix& m) { return losses::v2t_loss(r, i, m, ids, proj, kPk).value; })) <
        1e-7);
  CHECK(rel(v.d_proj, numeric_grad(proj, [&](const Matrix& m) { return losses::v2t_loss(r, i, text, ids, m, kPk).value; })) <
        1e-7);

  for (auto mode : {losses::MdMode::kStandard, losses::MdMode::kLiteral, losses::MdMode::kClassAware}) {
    auto md = [&](const Matrix& a, const Matrix& b) { return losses::md_loss(a, b, 0.5, mode, kPk); };
    CHECK(rel(md(r, i).d_rgb, numeric_grad(r, [&](const Matrix& m) { return md(m, i).value; })) < 1e-7);
    CHECK(rel(md(r, i).d_ir, numeric_grad(i, [&](const Matrix& m) { return md(r, m).value; })) < 1e-7);
  }

  const auto ms = losses::msel_loss(r, i, kPk, 3, 2);
  CHECK(rel(ms.d_rgb, numeric_grad(r, [&](const Matrix& m) { return losses::msel_loss(m, i, kPk, 3, 2).value; })) < 1e-7);
  CHECK(rel(ms.d_ir, numeric_grad(i, [&](const Matrix& m) { return losses::msel_loss(r, m, kPk, 3, 2).value; })) < 1e-7);
}

TEST_CASE("weighted sums") {
  CHECK(losses::stfl_loss({1, 2, 3, 4, 10}, 0.5) == 15.0);
  CHECK(losses::total_loss(1.0, 2.0, 4.0, 0.5, 0.25) == 3.0);
  CHECK_THROWS_AS(losses::total_loss(NAN, 0, 0, 1, 1), NumericalError);
  CHECK_THROWS_AS(losses::total_loss(1, INFINITY, 0, 1, 1), NumericalError);
}

TEST_CASE("autodiff wrappers match the matrix versions") {
  std::mt19937_64 rng(10);
  const Matrix r = random_matrix(rng, 6, 4), i = random_matrix(rng, 6, 4);
  ad::Tape tape;
  const ad::Var vr = tape.input(r), vi = tape.input(i);
  ad::Var loss = ad::add(losses::md_loss(vr, vi, 0.5), losses::msel_loss(vr, vi, kPk, 3, 2));
  tape.backward(loss);
  const auto md = losses::md_loss(r, i, 0.5);
  const auto ms = losses::msel_loss(r, i, kPk, 3, 2);
  CHECK(loss.value()(0, 0) == doctest::Approx(md.value + ms.value).epsilon(1e-14));
  CHECK(rel(tape.grad(vr), md.d_rgb + ms.d_rgb) < 1e-14);
  CHECK(rel(tape.grad(vi), md.d_ir + ms.d_ir) < 1e-14);
}
