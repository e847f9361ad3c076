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

#include <map>
#include <span>
#include <vector>

#include "xmr/tensor.h"

// Slow reference transcriptions used to cross-check the production losses and
// metrics. Everything here is written with explicit scalar loops and shares no
// code with the implementations it checks.
namespace xmr::oracle {

double id_loss(const Matrix& features, std::span<const int> labels, const Matrix& weight, const Matrix& bias);
double wrt_loss(const Matrix& features, std::span<const int> labels);
double v2t_loss(const Matrix& f_rgb, const Matrix& f_ir, const Matrix& text, std::span<const int> text_labels,
                const Matrix& proj, std::span<const int> labels);
double md_loss(const Matrix& f_rgb, const Matrix& f_ir, double tau, bool literal);
double md_loss_class_aware(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels, double tau);
double msel_loss(const Matrix& f_rgb, const Matrix& f_ir, std::span<const int> labels);

// Queries whose label is missing from the gallery are skipped.
std::map<int, double> cmc(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels,
                          std::span<const int> ranks);
double mean_ap(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels);

}  // namespace xmr::oracle
