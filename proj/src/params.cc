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

#include "xmr/params.h"

#include <cmath>

#include "xmr/errors.h"

namespace xmr {

double truncated_normal(std::mt19937_64& rng, double std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double z = 0.0;
  do {
    z = normal(rng);
  } while (std::abs(z) > 2.0);
  return z * std;
}

Parameter& ParameterStore::add(const std::string& name, int rows, int cols, Init init,
                               std::mt19937_64& rng, bool trainable, double std) {
  XMR_CHECK_CONFIG(!contains(name), "duplicate parameter name: " + name);
  XMR_CHECK_CONFIG(rows >= 0 && cols >= 0, "negative parameter shape: " + name);
  Parameter& p = params_.emplace_back();
  p.name = name;
  p.trainable = trainable;
  switch (init) {
    case Init::kZeros:
      p.value = Matrix::Zero(rows, cols);
      break;
    case Init::kOnes:
      p.value = Matrix::Ones(rows, cols);
      break;
    case Init::kTruncNormal:
      p.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = truncated_normal(rng, std);
      break;
  }
  p.grad = Matrix::Zero(rows, cols);
  index_[name] = &p;
  return p;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

}  // namespace xmr
