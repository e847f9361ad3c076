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

#include "xmr/losses.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "xmr/errors.h"

namespace xmr::losses {

namespace {

void check_labels(const Matrix& f, std::span<const int> labels, const char* op) {
  XMR_CHECK_CONFIG(static_cast<Eigen::Index>(labels.size()) == f.rows(),
                   std::string(op) + ": one label per feature row required");
  XMR_CHECK_CONFIG(f.rows() > 0, std::string(op) + ": empty batch");
}

Matrix pairwise_distances(const Matrix& a, const Matrix& b) {
  Matrix d(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) d(i, j) = (a.row(i) - b.row(j)).norm();
  }
  return d;
}

// d||a - b|| / da; zero at coincident points.
RowVector unit_diff(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j, double dist) {
  if (dist <= 0.0) return RowVector::Zero(a.cols());
  return (a.row(i) - b.row(j)) / dist;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace

IdLossResult id_loss(const Matrix& features, std::span<const int> labels, const Matrix& weight, const Matrix& bias) {
  check_labels(features, labels, "id_loss");
  XMR_CHECK_CONFIG(weight.rows() == features.cols(), "id_loss: classifier input width mismatch");
  XMR_CHECK_CONFIG(bias.rows() == 1 && bias.cols() == weight.cols(), "id_loss: bias must be 1 x C");
  const Eigen::Index n = features.rows();
  const Eigen::Index classes = weight.cols();
  for (int y : labels) {
    if (y < 0 || y >= classes) throw ConfigError("id_loss: label " + std::to_string(y) + " out of range");
  }
  Matrix logits = features * weight;
  logits.rowwise() += bias.row(0);
  Matrix probs = logits;
  softmax_rows(probs);

  IdLossResult r;
  Matrix dz = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    r.value += lse - logits(i, y);
    dz(i, y) -= 1.0;
  }
  r.value /= static_cast<double>(n);
  dz /= static_cast<double>(n);
  r.d_features = dz * weight.transpose();
  r.d_weight = features.transpose() * dz;
  r.d_bias = dz.colwise().sum();
  return r;
}

namespace {

struct AnchorSets {
  std::vector<std::vector<Eigen::Index>> pos, neg;
};

AnchorSets anchor_sets(std::span<const int> labels) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  AnchorSets s;
  s.pos.resize(labels.size());
  s.neg.resize(labels.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        s.pos[static_cast<std::size_t>(i)].push_back(j);
      } else {
        s.neg[static_cast<std::size_t>(i)].push_back(j);
      }
    }
    if (s.pos[static_cast<std::size_t>(i)].empty() || s.neg[static_cast<std::size_t>(i)].empty()) {
      throw ConfigError("wrt_loss: anchor " + std::to_string(i) + " lacks a positive or a negative");
    }
  }
  return s;
}

// Softmax of sign * d over the listed columns of row i.
std::vector<double> distance_softmax(const Matrix& dist, Eigen::Index i, const std::vector<Eigen::Index>& cols,
                                     double sign) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto j : cols) mx = std::max(mx, sign * dist(i, j));
  std::vector<double> w(cols.size());
  double z = 0.0;
  for (std::size_t a = 0; a < cols.size(); ++a) {
    w[a] = std::exp(sign * dist(i, cols[a]) - mx);
    z += w[a];
  }
  for (double& x : w) x /= z;
  return w;
}

}  // namespace

WrtWeights wrt_weights(const Matrix& features, std::span<const int> labels) {
  check_labels(features, labels, "wrt_loss");
  const AnchorSets sets = anchor_sets(labels);
  const Matrix dist = pairwise_distances(features, features);
  WrtWeights w;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    w.positive.push_back(distance_softmax(dist, i, sets.pos[static_cast<std::size_t>(i)], +1.0));
    w.negative.push_back(distance_softmax(dist, i, sets.neg[static_cast<std::size_t>(i)], -1.0));
  }
  return w;
}

FeatureLossResult wrt_loss(const Matrix& features, std::span<const int> labels) {
  check_labels(features, labels, "wrt_loss");
  const AnchorSets sets = anchor_sets(labels);
  const Eigen::Index n = features.rows();
  const Matrix dist = pairwise_distances(features, features);
  FeatureLossResult r;
  r.d_features = Matrix::Zero(n, features.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pos = sets.pos[static_cast<std::size_t>(i)];
    const auto& neg = sets.neg[static_cast<std::size_t>(i)];
    const auto wp = distance_softmax(dist, i, pos, +1.0);
    const auto wn = distance_softmax(dist, i, neg, -1.0);
    double sp = 0.0, sn = 0.0;
    for (std::size_t a = 0; a < pos.size(); ++a) sp += wp[a] * dist(i, pos[a]);
    for (std::size_t a = 0; a < neg.size(); ++a) sn += wn[a] * dist(i, neg[a]);
    r.value += softplus(sp - sn);
    const double g = sigmoid(sp - sn) / static_cast<double>(n);
    // d sp / d d_j = w_j (1 + d_j - sp);  d sn / d d_k = w_k (1 - d_k + sn)
    for (std::size_t a = 0; a < pos.size(); ++a) {
      const auto j = pos[a];
      const double dd = g * wp[a] * (1.0 + dist(i, j) - sp);
      const RowVector u = unit_diff(features, i, features, j, dist(i, j));
      r.d_features.row(i) += dd * u;
      r.d_features.row(j) -= dd * u;
    }
    for (std::size_t a = 0; a < neg.size(); ++a) {
      const auto k = neg[a];
      const double dd = -g * wn[a] * (1.0 - dist(i, k) + sn);
      const RowVector u = unit_diff(features, i, features, k, dist(i, k));
      r.d_features.row(i) += dd * u;
      r.d_features.row(k) -= dd * u;
    }
  }
  r.value /= static_cast<double>(n);
  return r;
}

V2tLossResult v2t_loss(const Matrix& f_rgb, const Matrix& f_ir, const Matrix& text, std::span<const int> text_labels,
                       const Matrix& proj, std::span<const int> labels) {
  check_labels(f_rgb, labels, "v2t_loss");
  XMR_CHECK_CONFIG(f_ir.rows() == f_rgb.rows() && f_ir.cols() == f_rgb.cols(), "v2t_loss: RGB/IR shape mismatch");
  XMR_CHECK_CONFIG(proj.rows() == f_rgb.cols() + f_ir.cols(), "v2t_loss: projection rows must equal 2D");
  XMR_CHECK_CONFIG(text.cols() == proj.cols(), "v2t_loss: projection columns must equal text width");
  XMR_CHECK_CONFIG(static_cast<Eigen::Index>(text_labels.size()) == text.rows(), "v2t_loss: one label per text row");
  const Eigen::Index n = f_rgb.rows();
  const Eigen::Index d = f_rgb.cols();
  std::vector<Eigen::Index> target(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    auto it = std::find(text_labels.begin(), text_labels.end(), y);
    if (it == text_labels.end()) throw ConfigError("v2t_loss: no text embedding for label " + std::to_string(y));
    target[static_cast<std::size_t>(i)] = it - text_labels.begin();
  }
  Matrix fused(n, 2 * d);
  fused.leftCols(d) = f_rgb;
  fused.rightCols(d) = f_ir;
  const Matrix g = fused * proj;
  const Matrix logits = g * text.transpose();
  Matrix probs = logits;
  softmax_rows(probs);

  V2tLossResult r;
  Matrix ds = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = target[static_cast<std::size_t>(i)];
    const double mx = logits.row(i).maxCoeff();
    r.value += mx + std::log((logits.row(i).array() - mx).exp().sum()) - logits(i, c);
    ds(i, c) -= 1.0;
  }
  r.value /= static_cast<double>(n);
  ds /= static_cast<double>(n);
  const Matrix dg = ds * text;
  r.d_text = ds.transpose() * g;
  r.d_proj = fused.transpose() * dg;
  const Matrix dfused = dg * proj.transpose();
  r.d_rgb = dfused.leftCols(d);
  r.d_ir = dfused.rightCols(d);
  return r;
}

PairLossResult md_loss(const Matrix& f_rgb, const Matrix& f_ir, double tau, MdMode mode, std::span<const int> labels) {
  XMR_CHECK_CONFIG(f_rgb.rows() == f_ir.rows() && f_rgb.cols() == f_ir.cols(), "md_loss: RGB/IR shape mismatch");
  XMR_CHECK_CONFIG(f_rgb.rows() >= 2, "md_loss: need at least 2 pairs");
  XMR_CHECK_CONFIG(tau > 0 && std::isfinite(tau), "md_loss: tau must be positive");
  const Eigen::Index n = f_rgb.rows();
  if (mode == MdMode::kClassAware) check_labels(f_rgb, labels, "md_loss");
  auto skip = [&](Eigen::Index i, Eigen::Index j) {
    if (mode == MdMode::kLiteral) return j == i;
    if (mode == MdMode::kClassAware) {
      return j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)];
    }
    return false;
  };
  Eigen::VectorXd nr = f_rgb.rowwise().norm();
  Eigen::VectorXd ni = f_ir.rowwise().norm();
  if (nr.minCoeff() <= 0.0 || ni.minCoeff() <= 0.0) throw ConfigError("md_loss: zero-norm feature");
  const Matrix ur = nr.cwiseInverse().asDiagonal() * f_rgb;
  const Matrix ui = ni.cwiseInverse().asDiagonal() * f_ir;
  const Matrix sim = ur * ui.transpose();
  const Matrix logits = sim / tau;

  // dL/dlogits accumulated from both directions.
  Matrix dl = Matrix::Zero(n, n);
  double total = 0.0;
  const double w = 0.5 / static_cast<double>(n);
  for (int dir = 0; dir < 2; ++dir) {
    for (Eigen::Index i = 0; i < n; ++i) {
      // Row i of logits for RGB->IR, column i for IR->RGB.
      auto at = [&](Eigen::Index j) { return dir == 0 ? logits(i, j) : logits(j, i); };
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!skip(i, j)) mx = std::max(mx, at(j));
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (!skip(i, j)) z += std::exp(at(j) - mx);
      }
      total += mx + std::log(z) - at(i);
      for (Eigen::Index j = 0; j < n; ++j) {
        double g = skip(i, j) ? 0.0 : std::exp(at(j) - mx) / z;
        if (j == i) g -= 1.0;
        if (dir == 0) {
          dl(i, j) += w * g;
        } else {
          dl(j, i) += w * g;
        }
      }
    }
  }
  PairLossResult r;
  r.value = total * w;
  const Matrix dsim = dl / tau;
  // d cos(u, v) / du = (v_hat - cos * u_hat) / |u|
  r.d_rgb = Matrix::Zero(n, f_rgb.cols());
  r.d_ir = Matrix::Zero(n, f_ir.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = dsim(i, j);
      if (g == 0.0) continue;
      r.d_rgb.row(i) += g * (ui.row(j) - sim(i, j) * ur.row(i)) / nr(i);
      r.d_ir.row(j) += g * (ur.row(i) - sim(i, j) * ui.row(j)) / ni(j);
    }
  }
  return r;
}

PairLossResult msel_loss(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels, int ids, int per_id) {
  check_labels(f_rgb, labels, "msel_loss");
  XMR_CHECK_CONFIG(f_ir.rows() == f_rgb.rows() && f_ir.cols() == f_rgb.cols(), "msel_loss: RGB/IR shape mismatch");
  XMR_CHECK_CONFIG(per_id >= 2, "msel_loss: K must be >= 2");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  XMR_CHECK_CONFIG(static_cast<int>(groups.size()) == ids, "msel_loss: batch must hold exactly P identities");
  for (const auto& [label, idx] : groups) {
    XMR_CHECK_CONFIG(static_cast<int>(idx.size()) == per_id,
                     "msel_loss: identity " + std::to_string(label) + " does not have exactly K samples");
  }
  const Eigen::Index n = f_rgb.rows();
  const Matrix drr = pairwise_distances(f_rgb, f_rgb);
  const Matrix dii = pairwise_distances(f_ir, f_ir);
  const Matrix dri = pairwise_distances(f_rgb, f_ir);  // (i, j) = |r_i - ir_j|

  PairLossResult r;
  r.d_rgb = Matrix::Zero(n, f_rgb.cols());
  r.d_ir = Matrix::Zero(n, f_ir.cols());
  const double norm = 1.0 / (2.0 * ids * per_id);
  const double k1 = 1.0 / (per_id - 1), k2 = 1.0 / per_id;
  for (const auto& [_, idx] : groups) {
    for (auto i : idx) {
      double d1r = 0, d1i = 0, d2r = 0, d2i = 0;
      for (auto j : idx) {
        if (j != i) {
          d1r += drr(i, j);
          d1i += dii(i, j);
        }
        d2r += dri(i, j);
        d2i += dri(j, i);
      }
      d1r *= k1;
      d1i *= k1;
      d2r *= k2;
      d2i *= k2;
      const double er = d1r - d2r, ei = d1i - d2i;
      r.value += er * er + ei * ei;
      const double gr = 2.0 * norm * er, gi = 2.0 * norm * ei;
      for (auto j : idx) {
        if (j != i) {
          const RowVector urr = unit_diff(f_rgb, i, f_rgb, j, drr(i, j));
          r.d_rgb.row(i) += gr * k1 * urr;
          r.d_rgb.row(j) -= gr * k1 * urr;
          const RowVector uii = unit_diff(f_ir, i, f_ir, j, dii(i, j));
          r.d_ir.row(i) += gi * k1 * uii;
          r.d_ir.row(j) -= gi * k1 * uii;
        }
        // D2 enters with a minus sign.
        const RowVector uri = unit_diff(f_rgb, i, f_ir, j, dri(i, j));
        r.d_rgb.row(i) -= gr * k2 * uri;
        r.d_ir.row(j) += gr * k2 * uri;
        const RowVector uir = unit_diff(f_ir, i, f_rgb, j, dri(j, i));
        r.d_ir.row(i) -= gi * k2 * uir;
        r.d_rgb.row(j) += gi * k2 * uir;
      }
    }
  }
  r.value *= norm;
  return r;
}

double stfl_loss(const StflTerms& t, double lambda1) {
  return t.id_stg + t.wrt_stg + t.id_tps + t.wrt_tps + lambda1 * t.v2t;
}

double total_loss(double stfl, double msel, double md, double lambda2, double lambda3) {
  if (!std::isfinite(stfl) || !std::isfinite(msel) || !std::isfinite(md) || !std::isfinite(lambda2) ||
      !std::isfinite(lambda3)) {
    throw NumericalError("total_loss: non-finite input");
  }
  return stfl + lambda2 * msel + lambda3 * md;
}

ad::Var id_loss(const ad::Var& features, std::span<const int> labels, const ad::Var& weight, const ad::Var& bias) {
  IdLossResult r = id_loss(features.value(), labels, weight.value(), bias.value());
  const ad::Var in[] = {features, weight, bias};
  return ad::scalar(r.value, in, {std::move(r.d_features), std::move(r.d_weight), std::move(r.d_bias)});
}

ad::Var wrt_loss(const ad::Var& features, std::span<const int> labels) {
  FeatureLossResult r = wrt_loss(features.value(), labels);
  const ad::Var in[] = {features};
  return ad::scalar(r.value, in, {std::move(r.d_features)});
}

ad::Var v2t_loss(const ad::Var& f_rgb, const ad::Var& f_ir, const ad::Var& text, std::span<const int> text_labels,
                 const ad::Var& proj, std::span<const int> labels) {
  V2tLossResult r = v2t_loss(f_rgb.value(), f_ir.value(), text.value(), text_labels, proj.value(), labels);
  const ad::Var in[] = {f_rgb, f_ir, text, proj};
  return ad::scalar(r.value, in, {std::move(r.d_rgb), std::move(r.d_ir), std::move(r.d_text), std::move(r.d_proj)});
}

ad::Var md_loss(const ad::Var& f_rgb, const ad::Var& f_ir, double tau, MdMode mode, std::span<const int> labels) {
  PairLossResult r = md_loss(f_rgb.value(), f_ir.value(), tau, mode, labels);
  const ad::Var in[] = {f_rgb, f_ir};
  return ad::scalar(r.value, in, {std::move(r.d_rgb), std::move(r.d_ir)});
}

ad::Var msel_loss(const ad::Var& f_rgb, const ad::Var& f_ir, std::span<const int> labels, int ids, int per_id) {
  PairLossResult r = msel_loss(f_rgb.value(), f_ir.value(), labels, ids, per_id);
  const ad::Var in[] = {f_rgb, f_ir};
  return ad::scalar(r.value, in, {std::move(r.d_rgb), std::move(r.d_ir)});
}

}  // namespace xmr::losses
