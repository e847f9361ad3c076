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

#pragma once

#include <span>
#include <vector>

#include "xmr/autograd.h"
#include "xmr/tensor.h"

// Training objectives with closed-form gradients. Each returns the loss value
// and its partial derivatives with respect to every input matrix.
namespace xmr::losses {

struct IdLossResult {
  double value = 0.0;
  Matrix d_features;
  Matrix d_weight;
  Matrix d_bias;
};

// Mean cross-entropy of softmax(features * weight + bias). weight is D x C.
IdLossResult id_loss(const Matrix& features, std::span<const int> labels, const Matrix& weight, const Matrix& bias);

struct FeatureLossResult {
  double value = 0.0;
  Matrix d_features;
};

// Weighted regularized triplet: softmax-weighted positive and negative
// Euclidean distances per anchor, softplus of their difference.
FeatureLossResult wrt_loss(const Matrix& features, std::span<const int> labels);

struct WrtWeights {
  std::vector<std::vector<double>> positive;  // per anchor, over its positives in index order
  std::vector<std::vector<double>> negative;
};
WrtWeights wrt_weights(const Matrix& features, std::span<const int> labels);

struct V2tLossResult {
  double value = 0.0;
  Matrix d_rgb;
  Matrix d_ir;
  Matrix d_text;
  Matrix d_proj;
};

// Video-to-text contrast. Row c of text is the embedding of identity
// text_labels[c]; proj maps the 2D fused video feature to D.
V2tLossResult v2t_loss(const Matrix& f_rgb, const Matrix& f_ir, const Matrix& text, std::span<const int> text_labels,
                       const Matrix& proj, std::span<const int> labels);

struct PairLossResult {
  double value = 0.0;
  Matrix d_rgb;
  Matrix d_ir;
};

enum class MdMode {
  kStandard,  // positive pair included in the denominator
  kLiteral,   // denominator over j != i only
  // Positive plus other-identity pairs; same-identity j != i are left out.
  kClassAware,
};

// Cosine-similarity contrast between row-paired RGB and IR features,
// averaged over the RGB->IR and IR->RGB directions.
PairLossResult md_loss(const Matrix& f_rgb, const Matrix& f_ir, double tau, MdMode mode = MdMode::kStandard,
                       std::span<const int> labels = {});

// Squared gap between intra- and cross-modality mean same-identity distances.
// Requires exactly K rows for each of P labels.
PairLossResult msel_loss(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels, int ids, int per_id);

struct StflTerms {
  double id_stg = 0.0;
  double wrt_stg = 0.0;
  double id_tps = 0.0;
  double wrt_tps = 0.0;
  double v2t = 0.0;
};

double stfl_loss(const StflTerms& terms, double lambda1);
double total_loss(double stfl, double msel, double md, double lambda2, double lambda3);

// Graph wrappers: the value comes from the functions above, the backward pass
// applies their gradients.
ad::Var id_loss(const ad::Var& features, std::span<const int> labels, const ad::Var& weight, const ad::Var& bias);
ad::Var wrt_loss(const ad::Var& features, std::span<const int> labels);
ad::Var v2t_loss(const ad::Var& f_rgb, const ad::Var& f_ir, const ad::Var& text, std::span<const int> text_labels,
                 const ad::Var& proj, std::span<const int> labels);
ad::Var md_loss(const ad::Var& f_rgb, const ad::Var& f_ir, double tau, MdMode mode = MdMode::kStandard,
                std::span<const int> labels = {});
ad::Var msel_loss(const ad::Var& f_rgb, const ad::Var& f_ir, std::span<const int> labels, int ids, int per_id);

}  // namespace xmr::losses
