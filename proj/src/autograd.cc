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

#include "xmr/autograd.h"

#include <cmath>
#include <numbers>
#include <string>

#include "xmr/errors.h"

namespace xmr::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::input(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = grad_enabled_;
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.needs_grad = grad_enabled_ && p.trainable;
  n.param = &p;
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.valid() && nodes_[v.id()].needs_grad) needs = true;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_mut(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::grad(const Var& v) { return grad_mut(v.id()); }

void Tape::backward(const Var& root) {
  XMR_CHECK_CONFIG(root.rows() == 1 && root.cols() == 1, "backward() needs a scalar root");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_mut(root.id())(0, 0) = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param != nullptr && n.param->trainable && n.grad.size() != 0) n.param->grad += n.grad;
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  XMR_CHECK_CONFIG(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return t.record(std::move(out), in, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia).noalias() += g * t.value(ib).transpose();
    if (t.needs_grad(ib)) t.grad_mut(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  XMR_CHECK_CONFIG(x.cols() == w.rows(), "linear: input width does not match weight rows");
  Tape& t = *x.tape();
  Matrix out = x.value() * w.value();
  if (bias.valid()) {
    XMR_CHECK_CONFIG(bias.rows() == 1 && bias.cols() == w.cols(), "linear: bad bias shape");
    out.rowwise() += bias.value().row(0);
  }
  const int ix = x.id(), iw = w.id(), ib = bias.valid() ? bias.id() : -1;
  const Var in[] = {x, w, bias};
  return t.record(std::move(out), in, [ix, iw, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ix)) t.grad_mut(ix).noalias() += g * t.value(iw).transpose();
    if (t.needs_grad(iw)) t.grad_mut(iw).noalias() += t.value(ix).transpose() * g;
    if (ib >= 0 && t.needs_grad(ib)) t.grad_mut(ib) += g.colwise().sum();
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  Matrix out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return t.record(std::move(out), in, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    if (t.needs_grad(ia)) t.grad_mut(ia) += g;
    if (t.needs_grad(ib)) t.grad_mut(ib) += g;
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  Matrix out = a.value() * s;
  const int ia = a.id();
  const Var in[] = {a};
  return t.record(std::move(out), in, [ia, s](Tape& t, int self) {
    t.grad_mut(ia) += t.grad_mut(self) * s;
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index d = x.cols();
  XMR_CHECK_CONFIG(gamma.rows() == 1 && gamma.cols() == d && beta.rows() == 1 && beta.cols() == d,
                   "layer_norm: affine parameters must be 1xD");
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), d);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  const Var in[] = {x, gamma, beta};
  return t.record(std::move(out), in,
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                    const Matrix& g = t.grad_mut(self);
                    if (t.needs_grad(ig)) t.grad_mut(ig) += (g.array() * xhat.array()).colwise().sum().matrix();
                    if (t.needs_grad(ib)) t.grad_mut(ib) += g.colwise().sum();
                    if (t.needs_grad(ix)) {
                      Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                      Matrix& gx = t.grad_mut(ix);
                      const double n = static_cast<double>(dxhat.cols());
                      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                        const double m1 = dxhat.row(r).sum() / n;
                        const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                        gx.row(r).array() +=
                            inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                      }
                    }
                  });
}

Var gelu(const Var& x) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const double z = xv.data()[i];
    out.data()[i] = 0.5 * z * (1.0 + std::erf(z * inv_sqrt2));
  }
  const int ix = x.id();
  const Var in[] = {x};
  return t.record(std::move(out), in, [ix, inv_sqrt2](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    const Matrix& xv = t.value(ix);
    Matrix& gx = t.grad_mut(ix);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      const double z = xv.data()[i];
      const double d = 0.5 * (1.0 + std::erf(z * inv_sqrt2)) + z * inv_sqrt_2pi * std::exp(-0.5 * z * z);
      gx.data()[i] += g.data()[i] * d;
    }
  });
}

Var gather_rows(const Var& x, std::vector<int> index) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    XMR_CHECK_CONFIG(index[r] >= 0 && index[r] < xv.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = xv.row(index[r]);
  }
  const int ix = x.id();
  const Var in[] = {x};
  return t.record(std::move(out), in, [ix, index = std::move(index)](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    Matrix& gx = t.grad_mut(ix);
    for (std::size_t r = 0; r < index.size(); ++r) gx.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
  });
}

Var vstack(std::span<const Var> parts) {
  XMR_CHECK_CONFIG(!parts.empty(), "vstack: no inputs");
  Tape& t = *parts.front().tape();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    XMR_CHECK_CONFIG(p.cols() == cols, "vstack: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    ids.push_back(p.id());
  }
  return t.record(std::move(out), parts, [ids = std::move(ids)](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = t.value(id).rows();
      if (t.needs_grad(id)) t.grad_mut(id) += g.middleRows(r, n);
      r += n;
    }
  });
}

Var hstack(const Var& a, const Var& b) {
  XMR_CHECK_CONFIG(a.rows() == b.rows(), "hstack: row mismatch");
  Tape& t = *a.tape();
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const int ia = a.id(), ib = b.id();
  const Var in[] = {a, b};
  return t.record(std::move(out), in, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    const Eigen::Index ca = t.value(ia).cols();
    if (t.needs_grad(ia)) t.grad_mut(ia) += g.leftCols(ca);
    if (t.needs_grad(ib)) t.grad_mut(ib) += g.rightCols(g.cols() - ca);
  });
}

Var pool_rows(const Var& x, std::vector<std::vector<int>> groups) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), xv.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    XMR_CHECK_CONFIG(!groups[g].empty(), "pool_rows: empty group");
    for (int r : groups[g]) {
      XMR_CHECK_CONFIG(r >= 0 && r < xv.rows(), "pool_rows: index out of range");
      out.row(static_cast<Eigen::Index>(g)) += xv.row(r);
    }
    out.row(static_cast<Eigen::Index>(g)) /= static_cast<double>(groups[g].size());
  }
  const int ix = x.id();
  const Var in[] = {x};
  return t.record(std::move(out), in, [ix, groups = std::move(groups)](Tape& t, int self) {
    const Matrix& g = t.grad_mut(self);
    Matrix& gx = t.grad_mut(ix);
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const double w = 1.0 / static_cast<double>(groups[k].size());
      for (int r : groups[k]) gx.row(r) += w * g.row(static_cast<Eigen::Index>(k));
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionLayout& layout) {
  const Eigen::Index d = q.cols();
  XMR_CHECK_CONFIG(layout.heads >= 1 && d % layout.heads == 0, "attention: width not divisible by heads");
  XMR_CHECK_CONFIG(k.cols() == d && v.cols() == d, "attention: q/k/v width mismatch");
  XMR_CHECK_CONFIG(k.rows() == v.rows(), "attention: k/v row mismatch");
  XMR_CHECK_CONFIG(q.rows() == static_cast<Eigen::Index>(layout.frames) * layout.query_rows,
                   "attention: query rows do not match layout");
  XMR_CHECK_CONFIG(layout.key_rows > 0 && k.rows() % layout.key_rows == 0, "attention: key rows do not match layout");
  XMR_CHECK_CONFIG(layout.key_frame.empty() || static_cast<int>(layout.key_frame.size()) == layout.heads,
                   "attention: key_frame needs one entry per head");
  const int key_frames = static_cast<int>(k.rows() / layout.key_rows);
  const int dh = static_cast<int>(d / layout.heads);
  const int qr = layout.query_rows, kr = layout.key_rows;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

  // Resolved (head, frame) -> key frame table.
  std::vector<int> kf(static_cast<std::size_t>(layout.heads) * layout.frames);
  for (int h = 0; h < layout.heads; ++h) {
    for (int f = 0; f < layout.frames; ++f) {
      int g = f;
      if (!layout.key_frame.empty()) {
        XMR_CHECK_CONFIG(static_cast<int>(layout.key_frame[h].size()) == layout.frames,
                         "attention: key_frame row has wrong length");
        g = layout.key_frame[h][f];
      }
      XMR_CHECK_CONFIG(g >= 0 && g < key_frames, "attention: key frame out of range");
      kf[static_cast<std::size_t>(h) * layout.frames + f] = g;
    }
  }

  Tape& t = *q.tape();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(qv.rows(), d);
  std::vector<Matrix> probs(kf.size());
  for (int h = 0; h < layout.heads; ++h) {
    for (int f = 0; f < layout.frames; ++f) {
      const std::size_t slot = static_cast<std::size_t>(h) * layout.frames + f;
      const int g = kf[slot];
      Matrix s = (qv.block(f * qr, h * dh, qr, dh) * kv.block(g * kr, h * dh, kr, dh).transpose()) * scale_factor;
      for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(f * qr, h * dh, qr, dh).noalias() = s * vv.block(g * kr, h * dh, kr, dh);
      probs[slot] = std::move(s);
    }
  }
  t.attention_stats().calls += 1;
  t.attention_stats().score_evals += static_cast<std::int64_t>(layout.heads) * layout.frames * qr * kr;

  const int iq = q.id(), ik = k.id(), iv = v.id();
  const int heads = layout.heads, frames = layout.frames;
  const Var in[] = {q, k, v};
  return t.record(std::move(out), in,
                  [=, kf = std::move(kf), probs = std::move(probs)](Tape& t, int self) {
                    const Matrix& g = t.grad_mut(self);
                    const bool gq = t.needs_grad(iq), gk = t.needs_grad(ik), gv = t.needs_grad(iv);
                    const Matrix& qv = t.value(iq);
                    const Matrix& kv = t.value(ik);
                    const Matrix& vv = t.value(iv);
                    for (int h = 0; h < heads; ++h) {
                      for (int f = 0; f < frames; ++f) {
                        const std::size_t slot = static_cast<std::size_t>(h) * frames + f;
                        const int kfr = kf[slot];
                        const Matrix& p = probs[slot];
                        const auto dout = g.block(f * qr, h * dh, qr, dh);
                        if (gv) t.grad_mut(iv).block(kfr * kr, h * dh, kr, dh).noalias() += p.transpose() * dout;
                        if (!gq && !gk) continue;
                        Matrix dp = dout * vv.block(kfr * kr, h * dh, kr, dh).transpose();
                        Eigen::VectorXd rs = (dp.array() * p.array()).rowwise().sum();
                        Matrix ds = (p.array() * (dp.colwise() - rs).array()) * scale_factor;
                        if (gq) t.grad_mut(iq).block(f * qr, h * dh, qr, dh).noalias() += ds * kv.block(kfr * kr, h * dh, kr, dh);
                        if (gk) t.grad_mut(ik).block(kfr * kr, h * dh, kr, dh).noalias() += ds.transpose() * qv.block(f * qr, h * dh, qr, dh);
                      }
                    }
                  });
}

Var scalar(double value, std::span<const Var> inputs, std::vector<Matrix> grads) {
  XMR_CHECK_CONFIG(inputs.size() == grads.size(), "scalar: one gradient per input required");
  Tape& t = *inputs.front().tape();
  std::vector<int> ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    XMR_CHECK_CONFIG(grads[i].rows() == inputs[i].rows() && grads[i].cols() == inputs[i].cols(),
                     "scalar: gradient shape mismatch");
    ids.push_back(inputs[i].id());
  }
  Matrix out(1, 1);
  out(0, 0) = value;
  return t.record(std::move(out), inputs, [ids = std::move(ids), grads = std::move(grads)](Tape& t, int self) {
    const double g = t.grad_mut(self)(0, 0);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (t.needs_grad(ids[i])) t.grad_mut(ids[i]) += g * grads[i];
    }
  });
}

}  // namespace xmr::ad
