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

#include "xmr/retrieval.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>

#include "xmr/errors.h"

namespace xmr {

std::string to_string(Direction d) { return d == Direction::kI2V ? "i2v" : "v2i"; }

Direction parse_direction(const std::string& s) {
  if (s == "i2v") return Direction::kI2V;
  if (s == "v2i") return Direction::kV2I;
  throw ConfigError("direction must be i2v or v2i, got '" + s + "'");
}

Matrix distance_matrix(const FeatureSet& query, const FeatureSet& gallery) {
  XMR_CHECK_CONFIG(query.size() > 0 && gallery.size() > 0, "distance_matrix: empty feature set");
  XMR_CHECK_CONFIG(query.features.cols() == gallery.features.cols(), "distance_matrix: feature width mismatch");
  const Eigen::VectorXd qn = query.features.rowwise().norm();
  const Eigen::VectorXd gn = gallery.features.rowwise().norm();
  Matrix cos = query.features * gallery.features.transpose();
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    for (Eigen::Index j = 0; j < cos.cols(); ++j) cos(i, j) /= qn(i) * gn(j);
  }
  return (1.0 - cos.array()).matrix();
}

std::vector<int> rank_gallery(const Matrix& dist, Eigen::Index q) {
  // Infinite entries are masked out and never ranked.
  std::vector<int> order;
  for (Eigen::Index j = 0; j < dist.cols(); ++j) {
    if (std::isfinite(dist(q, j))) order.push_back(static_cast<int>(j));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist(q, a) < dist(q, b); });
  return order;
}

namespace {

void check_metric_inputs(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels) {
  XMR_CHECK_CONFIG(dist.rows() > 0 && dist.cols() > 0, "metrics: empty distance matrix");
  XMR_CHECK_CONFIG(static_cast<Eigen::Index>(q_labels.size()) == dist.rows(), "metrics: query label count");
  XMR_CHECK_CONFIG(static_cast<Eigen::Index>(g_labels.size()) == dist.cols(), "metrics: gallery label count");
}

}  // namespace

CmcResult cmc(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels,
              std::span<const int> ranks) {
  check_metric_inputs(dist, q_labels, g_labels);
  std::vector<int> first_hit;
  CmcResult r;
  for (Eigen::Index q = 0; q < dist.rows(); ++q) {
    const auto order = rank_gallery(dist, q);
    int hit = -1;
    for (std::size_t p = 0; p < order.size(); ++p) {
      if (g_labels[static_cast<std::size_t>(order[p])] == q_labels[static_cast<std::size_t>(q)]) {
        hit = static_cast<int>(p);
        break;
      }
    }
    if (hit < 0) {
      ++r.excluded;
    } else {
      first_hit.push_back(hit);
    }
  }
  for (int rank : ranks) {
    XMR_CHECK_CONFIG(rank >= 1, "cmc: ranks start at 1");
    const auto within = std::count_if(first_hit.begin(), first_hit.end(), [&](int h) { return h < rank; });
    r.cmc[rank] = first_hit.empty() ? 0.0 : 100.0 * static_cast<double>(within) / static_cast<double>(first_hit.size());
  }
  return r;
}

MapResult mean_ap(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels) {
  check_metric_inputs(dist, q_labels, g_labels);
  MapResult r;
  double sum = 0.0;
  int valid = 0;
  for (Eigen::Index q = 0; q < dist.rows(); ++q) {
    const auto order = rank_gallery(dist, q);
    int hits = 0;
    double ap = 0.0;
    for (std::size_t p = 0; p < order.size(); ++p) {
      if (g_labels[static_cast<std::size_t>(order[p])] != q_labels[static_cast<std::size_t>(q)]) continue;
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
    if (hits == 0) {
      ++r.excluded;
      continue;
    }
    sum += ap / hits;
    ++valid;
  }
  r.map = valid == 0 ? 0.0 : 100.0 * sum / valid;
  return r;
}

Matrix mask_same_camera(const Matrix& dist, std::span<const int> q_cameras, std::span<const int> g_cameras) {
  Matrix out = dist;
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    for (Eigen::Index j = 0; j < dist.cols(); ++j) {
      if (q_cameras[static_cast<std::size_t>(i)] == g_cameras[static_cast<std::size_t>(j)]) {
        out(i, j) = std::numeric_limits<double>::infinity();
      }
    }
  }
  return out;
}

DistanceDistributions distance_distributions(const FeatureSet& a, const FeatureSet& b) {
  const Matrix dist = distance_matrix(a, b);
  DistanceDistributions d;
  d.intra.assign(kHistogramBins, 0);
  d.inter.assign(kHistogramBins, 0);
  double s_intra = 0.0, s_inter = 0.0;
  long n_intra = 0, n_inter = 0;
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    for (Eigen::Index j = 0; j < dist.cols(); ++j) {
      const double v = dist(i, j);
      int bin = static_cast<int>(std::floor(v / kHistogramMax * kHistogramBins));
      bin = std::clamp(bin, 0, kHistogramBins - 1);
      if (a.labels[static_cast<std::size_t>(i)] == b.labels[static_cast<std::size_t>(j)]) {
        ++d.intra[static_cast<std::size_t>(bin)];
        s_intra += v;
        ++n_intra;
      } else {
        ++d.inter[static_cast<std::size_t>(bin)];
        s_inter += v;
        ++n_inter;
      }
    }
  }
  d.mean_intra = n_intra ? s_intra / static_cast<double>(n_intra) : 0.0;
  d.mean_inter = n_inter ? s_inter / static_cast<double>(n_inter) : 0.0;
  d.delta = d.mean_inter - d.mean_intra;
  return d;
}

RetrievalReport evaluate_features(const FeatureSet& query, const FeatureSet& gallery, Direction direction,
                                  bool exclude_same_camera) {
  Matrix dist = distance_matrix(query, gallery);
  if (exclude_same_camera) dist = mask_same_camera(dist, query.cameras, gallery.cameras);
  RetrievalReport r;
  r.direction = direction;
  r.n_query = static_cast<int>(query.size());
  r.n_gallery = static_cast<int>(gallery.size());
  const CmcResult c = cmc(dist, query.labels, gallery.labels, kReportRanks);
  const MapResult m = mean_ap(dist, query.labels, gallery.labels);
  r.cmc = c.cmc;
  r.map_score = m.map;
  r.excluded_queries = c.excluded;
  r.distributions = distance_distributions(query, gallery);
  return r;
}

std::pair<FeatureSet, FeatureSet> extract_features(Model& model, const Dataset& dataset) {
  XMR_CHECK_CONFIG(!dataset.samples.empty(), "evaluate: empty dataset");
  const ModelConfig& cfg = model.config();
  XMR_CHECK_CONFIG(dataset.shape.height == cfg.frame_height && dataset.shape.width == cfg.frame_width &&
                       dataset.shape.channels == cfg.channels,
                   "evaluate: dataset frame shape does not match the model");
  std::vector<std::vector<Frame>> rgb, ir;
  FeatureSet fr, fi;
  fr.modality = Modality::kRgb;
  fi.modality = Modality::kIr;
  for (const auto& s : dataset.samples) {
    rgb.push_back(eval_frames(s.rgb_frames, cfg.frames));
    ir.push_back(eval_frames(s.ir_frames, cfg.frames));
    fr.labels.push_back(s.label);
    fi.labels.push_back(s.label);
    fr.cameras.push_back(s.camera_id);
    fi.cameras.push_back(s.camera_id);
  }
  std::vector<const std::vector<Frame>*> pr, pi;
  for (const auto& f : rgb) pr.push_back(&f);
  for (const auto& f : ir) pi.push_back(&f);
  fr.features = model.extract(pr);
  fi.features = model.extract(pi);
  return {std::move(fr), std::move(fi)};
}

RetrievalReport evaluate(Model& model, const Dataset& dataset, Direction direction, bool exclude_same_camera) {
  auto [rgb, ir] = extract_features(model, dataset);
  return direction == Direction::kI2V ? evaluate_features(ir, rgb, direction, exclude_same_camera)
                                      : evaluate_features(rgb, ir, direction, exclude_same_camera);
}

nlohmann::json report_to_json(const RetrievalReport& r) {
  nlohmann::json j;
  j["direction"] = to_string(r.direction);
  nlohmann::json c = nlohmann::json::object();
  for (const auto& [rank, v] : r.cmc) c["rank" + std::to_string(rank)] = v;
  j["cmc"] = c;
  j["map"] = r.map_score;
  j["n_query"] = r.n_query;
  j["n_gallery"] = r.n_gallery;
  j["excluded_queries"] = r.excluded_queries;
  j["mean_intra"] = r.distributions.mean_intra;
  j["mean_inter"] = r.distributions.mean_inter;
  j["delta"] = r.distributions.delta;
  return j;
}

void write_report(const RetrievalReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir / "report.json");
  if (!f) throw ConfigError("cannot write " + (out_dir / "report.json").string());
  f << report_to_json(r).dump(2) << "\n";
  write_histogram_csv(r.distributions, out_dir / "distances.csv");
}

void write_histogram_csv(const DistanceDistributions& d, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "bin_left,intra_count,inter_count\n";
  char buf[32];
  for (int b = 0; b < kHistogramBins; ++b) {
    std::snprintf(buf, sizeof(buf), "%.6f", kHistogramMax * b / kHistogramBins);
    f << buf << "," << d.intra[static_cast<std::size_t>(b)] << "," << d.inter[static_cast<std::size_t>(b)] << "\n";
  }
}

void write_feature_dump(const FeatureSet& f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  nlohmann::json h;
  h["format"] = "xmr-features-1";
  h["count"] = f.size();
  h["dim"] = f.features.cols();
  h["modality"] = f.modality == Modality::kRgb ? "rgb" : "ir";
  out << h.dump() << "\n";
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const std::int32_t meta[2] = {f.labels[static_cast<std::size_t>(i)], f.cameras[static_cast<std::size_t>(i)]};
    out.write(reinterpret_cast<const char*>(meta), sizeof(meta));
    out.write(reinterpret_cast<const char*>(f.features.row(i).data()),
              static_cast<std::streamsize>(sizeof(double) * f.features.cols()));
  }
}

FeatureSet read_feature_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto h = nlohmann::json::parse(line);
  if (h.value("format", "") != "xmr-features-1") throw ConfigError(path.string() + ": not a feature dump");
  const auto n = h.at("count").get<Eigen::Index>();
  const auto d = h.at("dim").get<Eigen::Index>();
  FeatureSet f;
  f.modality = h.at("modality") == "rgb" ? Modality::kRgb : Modality::kIr;
  f.features.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::int32_t meta[2];
    in.read(reinterpret_cast<char*>(meta), sizeof(meta));
    in.read(reinterpret_cast<char*>(f.features.row(i).data()), static_cast<std::streamsize>(sizeof(double) * d));
    if (!in) throw ConfigError(path.string() + ": truncated feature dump");
    f.labels.push_back(meta[0]);
    f.cameras.push_back(meta[1]);
  }
  return f;
}

}  // namespace xmr
