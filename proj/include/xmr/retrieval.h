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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmr/backbone.h"
#include "xmr/model.h"
#include "xmr/synth_data.h"
#include "xmr/tensor.h"

namespace xmr {

struct FeatureSet {
  Matrix features;  // L2-normalized rows
  std::vector<int> labels;
  std::vector<int> cameras;
  Modality modality = Modality::kRgb;
  Eigen::Index size() const { return features.rows(); }
};

enum class Direction { kI2V, kV2I };
std::string to_string(Direction d);
Direction parse_direction(const std::string& s);

// (i, j) = 1 - cos(q_i, g_j).
Matrix distance_matrix(const FeatureSet& query, const FeatureSet& gallery);

// Finite gallery columns of row q sorted by ascending distance, ties by index.
std::vector<int> rank_gallery(const Matrix& dist, Eigen::Index q);

struct CmcResult {
  std::map<int, double> cmc;  // rank -> percentage over evaluated queries
  int excluded = 0;           // queries without a same-label gallery item
};
CmcResult cmc(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels,
              std::span<const int> ranks);

struct MapResult {
  double map = 0.0;  // percentage
  int excluded = 0;
};
MapResult mean_ap(const Matrix& dist, std::span<const int> q_labels, std::span<const int> g_labels);

// Sets same-camera entries to +inf, which removes them from the ranking.
Matrix mask_same_camera(const Matrix& dist, std::span<const int> q_cameras, std::span<const int> g_cameras);

inline constexpr int kHistogramBins = 64;
inline constexpr double kHistogramMax = 2.0;

struct DistanceDistributions {
  std::vector<long> intra;  // kHistogramBins counts over [0, kHistogramMax]
  std::vector<long> inter;
  double mean_intra = 0.0;
  double mean_inter = 0.0;
  double delta = 0.0;  // mean_inter - mean_intra
};
// Cross-modal pairs between a and b partitioned by label equality.
DistanceDistributions distance_distributions(const FeatureSet& a, const FeatureSet& b);

struct RetrievalReport {
  Direction direction = Direction::kI2V;
  std::map<int, double> cmc;
  double map_score = 0.0;
  int n_query = 0;
  int n_gallery = 0;
  int excluded_queries = 0;
  DistanceDistributions distributions;
};

inline constexpr int kReportRanks[] = {1, 5, 10, 20};

RetrievalReport evaluate_features(const FeatureSet& query, const FeatureSet& gallery, Direction direction,
                                  bool exclude_same_camera = false);

// Extracts one RGB and one IR feature per dataset sample through the model's
// inference path and builds the report for the requested direction.
std::pair<FeatureSet, FeatureSet> extract_features(Model& model, const Dataset& dataset);
RetrievalReport evaluate(Model& model, const Dataset& dataset, Direction direction,
                         bool exclude_same_camera = false);

nlohmann::json report_to_json(const RetrievalReport& r);
void write_report(const RetrievalReport& r, const std::filesystem::path& out_dir);
void write_histogram_csv(const DistanceDistributions& d, const std::filesystem::path& path);

// JSON header line, then per record: label (i32), camera (i32), D float64.
void write_feature_dump(const FeatureSet& f, const std::filesystem::path& path);
FeatureSet read_feature_dump(const std::filesystem::path& path);

}  // namespace xmr
