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

#include "xmr/oracles.h"

#include <cmath>

namespace xmr::oracle {

namespace {

double euclid(const Matrix& a, int i, const Matrix& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

double dot(const Matrix& a, int i, const Matrix& b, int j) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

double cosine(const Matrix& a, int i, const Matrix& b, int j) {
  return dot(a, i, b, j) / (std::sqrt(dot(a, i, a, i)) * std::sqrt(dot(b, j, b, j)));
}

// 0-based position of gallery item j in the ascending order of row q, ties by index.
int rank_of(const Matrix& dist, int q, int j) {
  int r = 0;
  for (int g = 0; g < dist.cols(); ++g) {
    if (dist(q, g) < dist(q, j) || (dist(q, g) == dist(q, j) && g < j)) ++r;
  }
  return r;
}

}  // namespace

double id_loss(const Matrix& features, std::span<const int> labels, const Matrix& weight, const Matrix& bias) {
  const int n = static_cast<int>(features.rows());
  const int classes = static_cast<int>(weight.cols());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> z(classes);
    for (int c = 0; c < classes; ++c) {
      z[c] = bias(0, c);
      for (int k = 0; k < features.cols(); ++k) z[c] += features(i, k) * weight(k, c);
    }
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(z[c]);
    total += -std::log(std::exp(z[labels[i]]) / denom);
  }
  return total / n;
}

double wrt_loss(const Matrix& features, std::span<const int> labels) {
  const int n = static_cast<int>(features.rows());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double zp = 0.0, zn = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = euclid(features, i, features, j);
      if (labels[j] == labels[i]) {
        zp += std::exp(d);
      } else {
        zn += std::exp(-d);
      }
    }
    double sp = 0.0, sn = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = euclid(features, i, features, j);
      if (labels[j] == labels[i]) {
        sp += std::exp(d) / zp * d;
      } else {
        sn += std::exp(-d) / zn * d;
      }
    }
    total += std::log(1.0 + std::exp(sp - sn));
  }
  return total / n;
}

double v2t_loss(const Matrix& f_rgb, const Matrix& f_ir, const Matrix& text, std::span<const int> text_labels,
                const Matrix& proj, std::span<const int> labels) {
  const int n = static_cast<int>(f_rgb.rows());
  const int d = static_cast<int>(f_rgb.cols());
  const int out = static_cast<int>(proj.cols());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> g(out, 0.0);
    for (int o = 0; o < out; ++o) {
      for (int k = 0; k < d; ++k) g[o] += f_rgb(i, k) * proj(k, o);
      for (int k = 0; k < d; ++k) g[o] += f_ir(i, k) * proj(d + k, o);
    }
    double denom = 0.0, num = 0.0;
    for (int c = 0; c < text.rows(); ++c) {
      double s = 0.0;
      for (int o = 0; o < out; ++o) s += g[o] * text(c, o);
      denom += std::exp(s);
      if (text_labels[c] == labels[i]) num = std::exp(s);
    }
    total += -std::log(num / denom);
  }
  return total / n;
}

double md_loss(const Matrix& f_rgb, const Matrix& f_ir, double tau, bool literal) {
  const int n = static_cast<int>(f_rgb.rows());
  double r2i = 0.0, i2r = 0.0;
  for (int i = 0; i < n; ++i) {
    double den_r = 0.0, den_i = 0.0;
    for (int j = 0; j < n; ++j) {
      if (literal && j == i) continue;
      den_r += std::exp(cosine(f_rgb, i, f_ir, j) / tau);
      den_i += std::exp(cosine(f_ir, i, f_rgb, j) / tau);
    }
    r2i += -std::log(std::exp(cosine(f_rgb, i, f_ir, i) / tau) / den_r);
    i2r += -std::log(std::exp(cosine(f_ir, i, f_rgb, i) / tau) / den_i);
  }
  return 0.5 * (r2i / n + i2r / n);
}

double md_loss_class_aware(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels, double tau) {
  const int n = static_cast<int>(f_rgb.rows());
  double r2i = 0.0, i2r = 0.0;
  for (int i = 0; i < n; ++i) {
    double den_r = 0.0, den_i = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i && labels[j] == labels[i]) continue;
      den_r += std::exp(cosine(f_rgb, i, f_ir, j) / tau);
      den_i += std::exp(cosine(f_ir, i, f_rgb, j) / tau);
    }
    r2i += -std::log(std::exp(cosine(f_rgb, i, f_ir, i) / tau) / den_r);
    i2r += -std::log(std::exp(cosine(f_ir, i, f_rgb, i) / tau) / den_i);
  }
  return 0.5 * (r2i / n + i2r / n);
}

double msel_loss(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels) {
  const int n = static_cast<int>(f_rgb.rows());
  std::map<int, int> per_label;
  for (int y : labels) ++per_label[y];
  const int p = static_cast<int>(per_label.size());
  const int k = per_label.begin()->second;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double d1_r = 0.0, d1_i = 0.0, d2_r = 0.0, d2_i = 0.0;
    for (int j = 0; j < n; ++j) {
      if (labels[j] != labels[i]) continue;
      if (j != i) {
        d1_r += euclid(f_rgb, i, f_rgb, j) / (k - 1);
        d1_i += euclid(f_ir, i, f_ir, j) / (k - 1);
      }
      d2_r += euclid(f_rgb, i, f_ir, j) / k;
      d2_i += euclid(f_ir, i, f_rgb, j) / k;
    }
    total += (d1_i - d2_i) * (d1_i - d2_i) + (d1_r - d2_r) * (d1_r - d2_r);
  }
  return total / (2.0 * p * k);
}

std::map<int, double> cmc(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels,
                          std::span<const int> ranks) {
  std::map<int, double> out;
  for (int r : ranks) {
    int hits = 0, valid = 0;
    for (int q = 0; q < dist.rows(); ++q) {
      int best = -1;
      for (int j = 0; j < dist.cols(); ++j) {
        if (g_labels[j] != q_labels[q]) continue;
        const int rk = rank_of(dist, q, j);
        if (best < 0 || rk < best) best = rk;
      }
      if (best < 0) continue;
      ++valid;
      if (best < r) ++hits;
    }
    out[r] = valid == 0 ? 0.0 : 100.0 * hits / valid;
  }
  return out;
}

double mean_ap(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels) {
  double sum = 0.0;
  int valid = 0;
  for (int q = 0; q < dist.rows(); ++q) {
    // Precision at each true match, keyed by its rank.
    std::map<int, double> precision_at;
    for (int j = 0; j < dist.cols(); ++j) {
      if (g_labels[j] != q_labels[q]) continue;
      const int rj = rank_of(dist, q, j);
      int above = 0;
      for (int m = 0; m < dist.cols(); ++m) {
        if (g_labels[m] == q_labels[q] && rank_of(dist, q, m) <= rj) ++above;
      }
      precision_at[rj] = static_cast<double>(above) / (rj + 1);
    }
    if (precision_at.empty()) continue;
    double ap = 0.0;
    for (const auto& [rank, prec] : precision_at) ap += prec;
    sum += ap / static_cast<int>(precision_at.size());
    ++valid;
  }
  return valid == 0 ? 0.0 : 100.0 * sum / valid;
}

}  // namespace xmr::oracle
