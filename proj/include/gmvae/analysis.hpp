// Copyright 2026 The gmvae Authors
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

// Interpretability toolkit: component assignment and consistency, scattering
// ratios, traversals, component distances, LDA probes, transfer evaluation and
// collapse diagnostics.

#ifndef GMVAE_ANALYSIS_HPP_
#define GMVAE_ANALYSIS_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmvae/model.hpp"
#include "gmvae/synthdata.hpp"
#include "gmvae/training.hpp"

namespace gmvae {

inline constexpr int kAssignSamples = 16;
inline constexpr std::uint64_t kAssignSeed = 0x61737369676eULL;

/// argmax_k q~(y_l = k | X); ties go to the lowest index.
Index assign_component(ModelParams& params, const Utterance& utt, int mc_n = kAssignSamples,
                       std::uint64_t seed = kAssignSeed);

/// Fraction of items whose assignment equals the mode of their group.
double assignment_consistency(std::span<const Index> assignments, std::span<const int> labels);

/// Per-group histogram of assignments: rows are groups 0..max(label).
Eigen::MatrixXi assignment_histogram(std::span<const Index> assignments, std::span<const int> labels,
                                     Index n_components);

RowVector scattering_ratio(const MixturePrior& prior);

struct MarginalStats {
  RowVector mean;
  RowVector stddev;
};
MarginalStats marginal_stats(const MixturePrior& prior);

/// `points` equally spaced values over [mean - 2 std, mean + 2 std].
std::vector<double> traversal_grid(double mean, double stddev, int points = 5);

/// Free-running decodes with z_seed[dim] replaced by each grid value.
std::vector<Matrix> traverse(ModelParams& params, const std::vector<int>& tokens,
                             const RowVector& z_seed, Index dim, std::span<const double> grid,
                             const LabelCondition& label, Index n_frames);

Matrix component_distance_matrix(const MixturePrior& prior);

/// Best bipartition of the components by (min between-group distance - max
/// within-group distance), found by enumeration. separated() holds when every
/// between-group distance exceeds every within-group one.
struct TwoClusterSplit {
  std::vector<int> group;  // 0 or 1 per component
  double max_within = 0.0;
  double min_between = 0.0;
  bool separated() const { return min_between > max_within; }
};
TwoClusterSplit two_cluster(const Matrix& distances);

struct LdaModel {
  std::vector<int> classes;
  Matrix means;      // C x D
  Matrix precision;  // D x D inverse of the regularised pooled covariance
  RowVector log_prior;
};

inline constexpr double kLdaRidge = 1e-6;

/// Throws std::invalid_argument with fewer than two classes or a class with
/// fewer than two samples.
LdaModel lda_fit(const Matrix& z, std::span<const int> labels, double ridge = kLdaRidge);
int lda_predict(const LdaModel& model, const RowVector& z);
double lda_accuracy(const LdaModel& model, const Matrix& z, std::span<const int> labels);

struct FactorMeasure {
  double rate = 0.0;
  double pitch = 0.0;
  double noise = 0.0;
};
/// Throws NoStructureError when a factor cannot be read from the frames.
FactorMeasure measure_factors(const Matrix& frames);

/// Dimensions ranked by decreasing scattering ratio.
std::vector<Index> dims_by_scattering(const MixturePrior& prior);

/// Component whose mean decodes to the lowest measured noise level for the
/// given text and label.
Index find_clean_component(ModelParams& params, const std::vector<int>& tokens,
                           const LabelCondition& label);

struct TransferOptions {
  bool denoise = false;
  int denoise_dims = 1;                   // top-m dimensions by scattering ratio
  std::optional<Index> clean_component;   // detected when absent
};

struct TransferResult {
  Matrix frames;
  RowVector z_latent;
  FactorMeasure reference;
  FactorMeasure output;
  std::vector<Index> overwritten_dims;
  std::optional<Index> clean_component;
};

/// Number of frames for new text at the reference's frames-per-token.
Index transfer_length(const Utterance& reference, std::size_t n_tokens);

/// Decodes `tokens` with z_l (and z_o in the observed variant) set to the
/// reference's posterior means; the class-embedding variant uses the
/// reference's class.
TransferResult transfer_eval(ModelParams& params, const Utterance& reference,
                             const std::vector<int>& tokens, const TransferOptions& options = {});

struct CollapseReport {
  double min_smoothed_kl_z_l = 0.0;
  double final_smoothed_kl_z_l = 0.0;
  double final_kl_y_l = 0.0;
  std::vector<double> usage;  // fraction of probe utterances per component
  double usage_entropy = 0.0;
  bool collapsed = false;
};

inline constexpr std::size_t kCollapseWindow = 100;

CollapseReport collapse_report(const std::vector<LogRecord>& log,
                               std::span<const Index> probe_assignments, Index n_components,
                               std::size_t window = kCollapseWindow);

struct AnalysisReport {
  Eigen::MatrixXi histogram;  // groups x K
  double consistency = 0.0;
  RowVector scattering;
  Matrix distances;
  MarginalStats marginal;
  std::optional<CollapseReport> collapse;
};

/// Assigns every utterance and groups by truth.condition.
AnalysisReport analyze(ModelParams& params, const Corpus& corpus,
                       const std::vector<LogRecord>* log = nullptr);

std::string to_json(const AnalysisReport& report);
std::string to_json(const TransferResult& result);

}  // namespace gmvae

#endif  // GMVAE_ANALYSIS_HPP_
