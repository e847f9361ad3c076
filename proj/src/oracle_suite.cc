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

#include "xmr/oracle_suite.h"

#include <chrono>
#include <cmath>
#include <random>

#include "xmr/losses.h"
#include "xmr/oracles.h"
#include "xmr/retrieval.h"

namespace xmr::oracle {

bool SuiteReport::pass() const {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return !entries.empty();
}

nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json j;
  j["tolerance"] = r.tolerance;
  j["seconds"] = r.seconds;
  j["pass"] = r.pass();
  j["entries"] = nlohmann::json::array();
  for (const auto& e : r.entries) {
    j["entries"].push_back(
        {{"name", e.name}, {"max_abs_error", e.max_abs_error}, {"instances", e.instances}, {"pass", e.pass}});
  }
  return j;
}

namespace {

Matrix gaussian(std::mt19937_64& rng, int rows, int cols, double std) {
  std::normal_distribution<double> n(0.0, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

using Clock = std::chrono::steady_clock;

}  // namespace

SuiteReport run_loss_suite(std::uint64_t seed, int batches, double tolerance) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  const char* names[] = {"id_loss", "wrt_loss", "v2t_loss", "md_loss", "md_loss_literal", "msel_loss",
                         "md_loss_class_aware"};
  std::vector<SuiteEntry> entries;
  for (const char* n : names) entries.push_back({n, 0.0, 0, false});
  auto record = [&](int i, double prod, double ref) {
    const double err = std::isfinite(prod) && std::isfinite(ref) ? std::abs(prod - ref)
                                                                 : std::numeric_limits<double>::infinity();
    entries[static_cast<std::size_t>(i)].max_abs_error = std::max(entries[static_cast<std::size_t>(i)].max_abs_error, err);
    ++entries[static_cast<std::size_t>(i)].instances;
  };

  for (int b = 0; b < batches; ++b) {
    const int p = uniform_int(rng, 2, 4);
    const int k = uniform_int(rng, 2, 8 / p);
    const int n = p * k;
    const int d = uniform_int(rng, 2, 16);
    const double scale = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
    // Labels need not be contiguous; each appears exactly k times, in shuffled order.
    std::vector<int> ids;
    for (int i = 0; i < p; ++i) ids.push_back(uniform_int(rng, 0, 3) + 4 * i);
    std::vector<int> labels;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < k; ++j) labels.push_back(ids[static_cast<std::size_t>(i)]);
    }
    std::shuffle(labels.begin(), labels.end(), rng);

    const Matrix f = gaussian(rng, n, d, scale);
    const Matrix f2 = gaussian(rng, n, d, scale);
    const int classes = ids.back() + 1 + uniform_int(rng, 0, 3);
    const Matrix w = gaussian(rng, d, classes, 0.5);
    const Matrix bias = gaussian(rng, 1, classes, 0.5);
    record(0, losses::id_loss(f, labels, w, bias).value, oracle::id_loss(f, labels, w, bias));
    record(1, losses::wrt_loss(f, labels).value, oracle::wrt_loss(f, labels));

    const int dt = uniform_int(rng, 2, 16);
    const Matrix text = gaussian(rng, p, dt, 0.5);
    const Matrix proj = gaussian(rng, 2 * d, dt, 0.3);
    record(2, losses::v2t_loss(f, f2, text, ids, proj, labels).value,
           oracle::v2t_loss(f, f2, text, ids, proj, labels));

    const double tau = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    record(3, losses::md_loss(f, f2, tau, losses::MdMode::kStandard).value, oracle::md_loss(f, f2, tau, false));
    record(4, losses::md_loss(f, f2, tau, losses::MdMode::kLiteral).value, oracle::md_loss(f, f2, tau, true));
    record(5, losses::msel_loss(f, f2, labels, p, k).value, oracle::msel_loss(f, f2, labels));
    record(6, losses::md_loss(f, f2, tau, losses::MdMode::kClassAware, labels).value,
           oracle::md_loss_class_aware(f, f2, labels, tau));
  }
  SuiteReport r;
  r.tolerance = tolerance;
  for (auto& e : entries) e.pass = e.instances > 0 && e.max_abs_error < tolerance;
  r.entries = std::move(entries);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

SuiteReport run_metric_suite(std::uint64_t seed, int instances) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(seed);
  SuiteEntry cmc_e{"cmc", 0.0, 0, true};
  SuiteEntry map_e{"mean_ap", 0.0, 0, true};
  SuiteEntry mono{"cmc_monotone", 0.0, 0, true};
  for (int it = 0; it < instances; ++it) {
    const int nq = uniform_int(rng, 1, 10);
    const int ng = uniform_int(rng, 1, 10);
    const int n_labels = uniform_int(rng, 1, 4);
    std::vector<int> ql(static_cast<std::size_t>(nq)), gl(static_cast<std::size_t>(ng));
    for (int& v : ql) v = uniform_int(rng, 0, n_labels);
    for (int& v : gl) v = uniform_int(rng, 0, n_labels);
    // Distances on a coarse grid so ties are common.
    Matrix dist(nq, ng);
    for (Eigen::Index i = 0; i < dist.size(); ++i) dist.data()[i] = 0.25 * uniform_int(rng, 0, 8);
    std::vector<int> ranks;
    for (int r = 1; r <= ng; ++r) ranks.push_back(r);

    const auto prod = xmr::cmc(dist, ql, gl, ranks);
    const auto ref = oracle::cmc(dist, ql, gl, ranks);
    double prev = 0.0;
    for (int r : ranks) {
      cmc_e.max_abs_error = std::max(cmc_e.max_abs_error, std::abs(prod.cmc.at(r) - ref.at(r)));
      if (prod.cmc.at(r) != ref.at(r)) cmc_e.pass = false;
      if (prod.cmc.at(r) < prev) mono.pass = false;
      prev = prod.cmc.at(r);
    }
    const double m = xmr::mean_ap(dist, ql, gl).map;
    const double mref = oracle::mean_ap(dist, ql, gl);
    map_e.max_abs_error = std::max(map_e.max_abs_error, std::abs(m - mref));
    // Both sides add the same fractions in rank order, so equality is exact.
    if (m != mref) map_e.pass = false;
    ++cmc_e.instances;
    ++map_e.instances;
    ++mono.instances;
  }
  SuiteReport r;
  r.tolerance = 0.0;
  r.entries = {cmc_e, map_e, mono};
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

}  // namespace xmr::oracle
