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

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "xmr/tensor.h"

namespace xmr {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

enum class Init { kZeros, kOnes, kTruncNormal };

// Owns every parameter of a model. Addresses are stable for the store's
// lifetime; iteration follows insertion order so checkpoints and optimizer
// updates are deterministic.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(const std::string& name, int rows, int cols, Init init, std::mt19937_64& rng,
                 bool trainable = true, double std = 0.02);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  // Number of scalars over parameters whose name starts with prefix.
  std::size_t count(const std::string& prefix = "") const;

  void zero_grad();

 private:
  std::deque<Parameter> params_;
  std::map<std::string, Parameter*> index_;
};

// Draws from N(0, std) truncated to two standard deviations.
double truncated_normal(std::mt19937_64& rng, double std);

}  // namespace xmr
