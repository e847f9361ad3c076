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
#include <functional>
#include <span>
#include <vector>

#include "xmr/params.h"
#include "xmr/tensor.h"

// Reverse-mode differentiation over dense matrices. A Tape records one forward
// pass; backward() walks it in reverse and accumulates gradients into the
// trainable Parameters that were bound as leaves.
namespace xmr::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Counts attention score evaluations (one per query-key pair per head).
struct AttentionStats {
  std::int64_t calls = 0;
  std::int64_t score_evals = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Differentiable leaf whose gradient is read back with grad().
  Var input(Matrix value);
  // Leaf bound to a parameter; frozen parameters do not require gradients.
  Var param(Parameter& p);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and accumulates into the
  // gradients of bound trainable parameters.
  void backward(const Var& root);

  Var record(Matrix value, std::span<const Var> inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  // Zero-initialized on first access.
  Matrix& grad_mut(int id);
  const Matrix& grad(const Var& v);

  // With gradients disabled every node is a constant; used for inference.
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  AttentionStats& attention_stats() { return stats_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool needs_grad = false;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  AttentionStats stats_;
  bool grad_enabled_ = true;
};

// Attention over grouped rows. Query frame f owns rows
// [f*query_rows, (f+1)*query_rows); for head h it attends the key/value rows of
// frame key_frame[h][f] (identity when key_frame is empty). Column block h of
// width D/heads belongs to head h. Scores are scaled by 1/sqrt(D/heads).
struct AttentionLayout {
  int frames = 0;
  int query_rows = 0;
  int key_rows = 0;
  int heads = 1;
  std::vector<std::vector<int>> key_frame;
};

Var matmul(const Var& a, const Var& b);
// x * w + b, bias broadcast over rows; bias may be an invalid Var.
Var linear(const Var& x, const Var& w, const Var& bias = Var());
Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gelu(const Var& x);
// out.row(r) = x.row(index[r])
Var gather_rows(const Var& x, std::vector<int> index);
Var vstack(std::span<const Var> parts);
Var hstack(const Var& a, const Var& b);
// out.row(g) = mean of x rows listed in groups[g]
Var pool_rows(const Var& x, std::vector<std::vector<int>> groups);
Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout);
// Scalar node with precomputed local gradients d(value)/d(inputs[i]) = grads[i].
Var scalar(double value, std::span<const Var> inputs, std::vector<Matrix> grads);

}  // namespace xmr::ad
