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

#include "gmvae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace gmvae {

namespace {

void require_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

nlohmann::ordered_json row_json(const RowVector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::ordered_json matrix_json(const Matrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(row_json(m.row(i)));
  return rows;
}

nlohmann::ordered_json factor_json(const FactorMeasure& f) {
  return {{"rate", f.rate}, {"pitch", f.pitch}, {"noise", f.noise}};
}

}  // namespace

Index assign_component(ModelParams& params, const Utterance& utt, int mc_n, std::uint64_t seed) {
  const DiagGaussian q = encode_latent(params, utt.frames);
  Rng rng(seed);
  const Matrix noise = rng.normal_matrix(mc_n, params.dims.latent_dim);
  return mc_categorical_posterior(q, params.latent_prior, noise).argmax();
}

double assignment_consistency(std::span<const Index> assignments, std::span<const int> labels) {
  require_sizes(assignments.size(), labels.size(), "assignment_consistency");
  std::map<int, std::map<Index, int>> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) counts[labels[i]][assignments[i]] += 1;
  int hits = 0;
  for (const auto& [label, hist] : counts) {
    int best = 0;
    // std::map iterates in increasing index, so the first maximum wins ties.
    for (const auto& [k, c] : hist) best = std::max(best, c);
    hits += best;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Eigen::MatrixXi assignment_histogram(std::span<const Index> assignments,
                                     std::span<const int> labels, Index n_components) {
  require_sizes(assignments.size(), labels.size(), "assignment_histogram");
  const int groups = *std::max_element(labels.begin(), labels.end()) + 1;
  Eigen::MatrixXi hist = Eigen::MatrixXi::Zero(groups, n_components);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw std::invalid_argument("assignment_histogram: negative label");
    if (assignments[i] < 0 || assignments[i] >= n_components) {
      throw std::out_of_range("assignment_histogram: component index out of range");
    }
    hist(labels[i], assignments[i]) += 1;
  }
  return hist;
}

RowVector scattering_ratio(const MixturePrior& prior) {
  if (prior.components() < 2) throw std::invalid_argument("scattering_ratio: needs K >= 2");
  const Matrix& mu = prior.means.value();
  const RowVector mean = mu.colwise().mean();
  const RowVector between = (mu.rowwise() - mean).array().square().colwise().mean();
  const RowVector within = prior.log_vars.value().array().exp().colwise().mean();
  return between.cwiseQuotient(within);
}

MarginalStats marginal_stats(const MixturePrior& prior) {
  const Matrix& mu = prior.means.value();
  const RowVector mean = mu.colwise().mean();
  const RowVector second =
      (prior.log_vars.value().array().exp() + mu.array().square()).colwise().mean();
  const RowVector var = (second.array() - mean.array().square()).max(0.0);
  return {mean, var.cwiseSqrt()};
}

std::vector<double> traversal_grid(double mean, double stddev, int points) {
  if (points < 1) throw std::invalid_argument("traversal_grid: points must be >= 1");
  if (points == 1) return {mean};
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid[i] = mean - 2.0 * stddev + 4.0 * stddev * i / static_cast<double>(points - 1);
  }
  return grid;
}

std::vector<Matrix> traverse(ModelParams& params, const std::vector<int>& tokens,
                             const RowVector& z_seed, Index dim, std::span<const double> grid,
                             const LabelCondition& label, Index n_frames) {
  if (dim < 0 || dim >= z_seed.size()) {
    throw std::out_of_range("traverse: dimension " + std::to_string(dim) + " outside [0, " +
                            std::to_string(z_seed.size()) + ")");
  }
  std::vector<Matrix> out;
  out.reserve(grid.size());
  Rng unused(0);
  for (double value : grid) {
    GenerateRequest req;
    req.tokens = tokens;
    req.z_latent = z_seed;
    (*req.z_latent)(dim) = value;
    req.label = label;
    req.n_frames = n_frames;
    out.push_back(generate(params, req, unused));
  }
  return out;
}

Matrix component_distance_matrix(const MixturePrior& prior) {
  const Matrix& mu = prior.means.value();
  const Index k = mu.rows();
  if (k < 1) throw std::invalid_argument("component_distance_matrix: empty prior");
  Matrix d = Matrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) d(i, j) = d(j, i) = (mu.row(i) - mu.row(j)).norm();
  }
  return d;
}

TwoClusterSplit two_cluster(const Matrix& distances) {
  const Index k = distances.rows();
  if (k < 2 || distances.cols() != k) throw std::invalid_argument("two_cluster: needs K >= 2");
  if (k > 20) throw std::invalid_argument("two_cluster: K > 20 not supported");
  TwoClusterSplit best;
  double best_margin = -std::numeric_limits<double>::infinity();
  // Component 0 stays in group 0; enumerate the rest.
  const std::uint32_t count = 1u << (k - 1);
  for (std::uint32_t mask = 1; mask < count; ++mask) {
    std::vector<int> group(static_cast<std::size_t>(k), 0);
    for (Index i = 1; i < k; ++i) group[i] = (mask >> (i - 1)) & 1u;
    double within = 0.0, between = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < k; ++i) {
      for (Index j = i + 1; j < k; ++j) {
        if (group[i] == group[j]) {
          within = std::max(within, distances(i, j));
        } else {
          between = std::min(between, distances(i, j));
        }
      }
    }
    if (between - within > best_margin) {
      best_margin = between - within;
      best.group = group;
      best.max_within = within;
      best.min_between = between;
    }
  }
  return best;
}

LdaModel lda_fit(const Matrix& z, std::span<const int> labels, double ridge) {
  require_sizes(static_cast<std::size_t>(z.rows()), labels.size(), "lda_fit");
  std::map<int, std::vector<Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Index>(i));
  if (members.size() < 2) throw std::invalid_argument("lda_fit: needs at least two classes");
  const Index dim = z.cols();
  LdaModel m;
  m.means.resize(static_cast<Index>(members.size()), dim);
  m.log_prior.resize(static_cast<Index>(members.size()));
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(dim, dim);
  Index c = 0;
  for (const auto& [label, idx] : members) {
    if (idx.size() < 2) {
      throw std::invalid_argument("lda_fit: class " + std::to_string(label) + " has fewer than two samples");
    }
    RowVector mean = RowVector::Zero(dim);
    for (Index i : idx) mean += z.row(i);
    mean /= static_cast<double>(idx.size());
    for (Index i : idx) {
      const Eigen::RowVectorXd d = z.row(i) - mean;
      pooled += d.transpose() * d;
    }
    m.classes.push_back(label);
    m.means.row(c) = mean;
    m.log_prior(c) = std::log(static_cast<double>(idx.size()) / static_cast<double>(labels.size()));
    ++c;
  }
  pooled /= static_cast<double>(labels.size() - members.size());
  pooled.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(pooled);
  if (llt.info() != Eigen::Success) throw std::runtime_error("lda_fit: singular pooled covariance");
  m.precision = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  return m;
}

int lda_predict(const LdaModel& m, const RowVector& z) {
  if (z.size() != m.means.cols()) throw DimensionError("lda_predict: dimension mismatch");
  Index best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Index c = 0; c < m.means.rows(); ++c) {
    const RowVector pm = m.means.row(c) * m.precision;
    const double score = pm.dot(z) - 0.5 * pm.dot(m.means.row(c)) + m.log_prior(c);
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return m.classes[static_cast<std::size_t>(best)];
}

double lda_accuracy(const LdaModel& m, const Matrix& z, std::span<const int> labels) {
  require_sizes(static_cast<std::size_t>(z.rows()), labels.size(), "lda_accuracy");
  int hits = 0;
  for (Index i = 0; i < z.rows(); ++i) hits += lda_predict(m, z.row(i)) == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

FactorMeasure measure_factors(const Matrix& frames) {
  return {measure_rate(frames), measure_pitch(frames), measure_noise_level(frames)};
}

std::vector<Index> dims_by_scattering(const MixturePrior& prior) {
  const RowVector r = scattering_ratio(prior);
  std::vector<Index> order(static_cast<std::size_t>(r.size()));
  for (Index d = 0; d < r.size(); ++d) order[d] = d;
  std::stable_sort(order.begin(), order.end(), [&r](Index a, Index b) { return r(a) > r(b); });
  return order;
}

Index find_clean_component(ModelParams& params, const std::vector<int>& tokens,
                           const LabelCondition& label) {
  const Index n_frames = frames_for(static_cast<Index>(tokens.size()), 0.25);
  Rng unused(0);
  Index best = 0;
  double best_noise = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < params.latent_prior.components(); ++k) {
    GenerateRequest req;
    req.tokens = tokens;
    req.z_latent = RowVector(params.latent_prior.means.value().row(k));
    req.label = label;
    req.n_frames = n_frames;
    const double noise = measure_noise_level(generate(params, req, unused));
    if (noise < best_noise) {
      best_noise = noise;
      best = k;
    }
  }
  return best;
}

Index transfer_length(const Utterance& reference, std::size_t n_tokens) {
  const double per_token =
      static_cast<double>(reference.n_frames()) / static_cast<double>(reference.tokens.size());
  return std::max<Index>(1, static_cast<Index>(std::lround(per_token * static_cast<double>(n_tokens))));
}

TransferResult transfer_eval(ModelParams& params, const Utterance& reference,
                             const std::vector<int>& tokens, const TransferOptions& options) {
  TransferResult result;
  result.z_latent = encode_latent(params, reference.frames).mean;
  LabelCondition label = reference.class_id;
  if (params.has_observed()) label = encode_observed(params, reference.frames).mean;
  if (options.denoise) {
    if (options.denoise_dims < 1 || options.denoise_dims > params.dims.latent_dim) {
      throw std::invalid_argument("transfer_eval: denoise_dims outside [1, D]");
    }
    const Index clean = options.clean_component ? *options.clean_component
                                                : find_clean_component(params, tokens, label);
    if (clean < 0 || clean >= params.latent_prior.components()) {
      throw std::out_of_range("transfer_eval: clean component out of range");
    }
    const std::vector<Index> order = dims_by_scattering(params.latent_prior);
    for (int i = 0; i < options.denoise_dims; ++i) {
      const Index d = order[static_cast<std::size_t>(i)];
      result.z_latent(d) = params.latent_prior.means.value()(clean, d);
      result.overwritten_dims.push_back(d);
    }
    result.clean_component = clean;
  }
  GenerateRequest req;
  req.tokens = tokens;
  req.z_latent = result.z_latent;
  req.label = label;
  req.n_frames = transfer_length(reference, tokens.size());
  Rng unused(0);
  result.frames = generate(params, req, unused);
  result.reference = measure_factors(reference.frames);
  result.output = measure_factors(result.frames);
  return result;
}

CollapseReport collapse_report(const std::vector<LogRecord>& log,
                               std::span<const Index> probe_assignments, Index n_components,
                               std::size_t window) {
  if (log.empty()) throw std::invalid_argument("collapse_report: empty log");
  if (n_components < 1) throw std::invalid_argument("collapse_report: n_components < 1");
  std::vector<double> kl_z, kl_y;
  for (const LogRecord& r : log) {
    kl_z.push_back(r.terms.kl_z_l);
    kl_y.push_back(r.terms.kl_y_l);
  }
  const std::vector<double> sz = smoothed(kl_z, window);
  const std::vector<double> sy = smoothed(kl_y, window);
  CollapseReport rep;
  rep.min_smoothed_kl_z_l = *std::min_element(sz.begin(), sz.end());
  rep.final_smoothed_kl_z_l = sz.back();
  rep.final_kl_y_l = sy.back();
  rep.usage.assign(static_cast<std::size_t>(n_components), 0.0);
  for (Index a : probe_assignments) {
    if (a < 0 || a >= n_components) throw std::out_of_range("collapse_report: bad assignment");
    rep.usage[static_cast<std::size_t>(a)] += 1.0;
  }
  for (double& u : rep.usage) {
    if (!probe_assignments.empty()) u /= static_cast<double>(probe_assignments.size());
    if (u > 0.0) rep.usage_entropy -= u * std::log(u);
  }
  const double entropy_floor = 0.1 * std::log(static_cast<double>(n_components));
  rep.collapsed = rep.final_smoothed_kl_z_l < 0.01 || rep.usage_entropy < entropy_floor;
  return rep;
}

AnalysisReport analyze(ModelParams& params, const Corpus& corpus, const std::vector<LogRecord>* log) {
  std::vector<Index> assignments;
  std::vector<int> labels;
  for (const Utterance& u : corpus.utterances) {
    assignments.push_back(assign_component(params, u));
    labels.push_back(u.truth.condition);
  }
  AnalysisReport rep;
  const Index k = params.latent_prior.components();
  rep.histogram = assignment_histogram(assignments, labels, k);
  rep.consistency = assignment_consistency(assignments, labels);
  if (k >= 2) rep.scattering = scattering_ratio(params.latent_prior);
  rep.distances = component_distance_matrix(params.latent_prior);
  rep.marginal = marginal_stats(params.latent_prior);
  if (log != nullptr && !log->empty()) rep.collapse = collapse_report(*log, assignments, k);
  return rep;
}

std::string to_json(const AnalysisReport& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json hist = nlohmann::ordered_json::array();
  for (Index g = 0; g < r.histogram.rows(); ++g) {
    std::vector<int> row(r.histogram.cols());
    for (Index k = 0; k < r.histogram.cols(); ++k) row[k] = r.histogram(g, k);
    hist.push_back(row);
  }
  j["histogram"] = hist;
  j["consistency"] = r.consistency;
  j["scattering_ratio"] = row_json(r.scattering);
  j["distance_matrix"] = matrix_json(r.distances);
  j["marginal_mean"] = row_json(r.marginal.mean);
  j["marginal_std"] = row_json(r.marginal.stddev);
  if (r.collapse) {
    const CollapseReport& c = *r.collapse;
    j["collapse"] = {{"min_smoothed_kl_z_l", c.min_smoothed_kl_z_l},
                     {"final_smoothed_kl_z_l", c.final_smoothed_kl_z_l},
                     {"final_kl_y_l", c.final_kl_y_l},
                     {"usage", c.usage},
                     {"usage_entropy", c.usage_entropy},
                     {"collapsed", c.collapsed}};
  } else {
    j["collapse"] = nullptr;
  }
  return j.dump(2);
}

std::string to_json(const TransferResult& r) {
  nlohmann::ordered_json j;
  j["reference"] = factor_json(r.reference);
  j["output"] = factor_json(r.output);
  j["z_latent"] = row_json(r.z_latent);
  j["overwritten_dims"] = r.overwritten_dims;
  if (r.clean_component) {
    j["clean_component"] = *r.clean_component;
  } else {
    j["clean_component"] = nullptr;
  }
  j["n_frames"] = r.frames.rows();
  return j.dump(2);
}

}  // namespace gmvae
