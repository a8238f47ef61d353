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

#include "gmvae/distributions.hpp"

#include <algorithm>

namespace gmvae {

Index Categorical::argmax() const {
  Index best = 0;
  for (Index k = 1; k < probs.size(); ++k) {
    if (probs(k) > probs(best)) best = k;
  }
  return best;
}

MixturePrior::MixturePrior(Matrix m, Matrix lv, double floor)
    : means(std::move(m), true), log_vars(std::move(lv), true), sigma_floor(floor) {
  if (means.rows() != log_vars.rows() || means.cols() != log_vars.cols()) {
    throw DimensionError("MixturePrior: means and log_vars shapes differ");
  }
}

DiagGaussian MixturePrior::component(Index k) const {
  return DiagGaussian{means.value().row(k), log_vars.value().row(k)};
}

void MixturePrior::project_to_floor() {
  if (sigma_floor <= 0.0) return;
  const double min_log_var = 2.0 * std::log(sigma_floor);
  log_vars.value() = log_vars.value().cwiseMax(min_log_var);
}

double MixturePrior::min_stddev() const {
  return std::exp(0.5 * log_vars.value().minCoeff());
}

Categorical component_posterior(const RowVector& z, const MixturePrior& prior) {
  return Categorical{softmax(component_log_densities(z, prior.means.value(), prior.log_vars.value()))};
}

Categorical mc_categorical_posterior(const DiagGaussian& q, const MixturePrior& prior,
                                     const Matrix& noise) {
  if (noise.rows() == 0) throw std::invalid_argument("mc_categorical_posterior: n_samples = 0");
  detail::require_same_dim(q.dim(), prior.dim(), "mc_categorical_posterior");
  detail::require_same_dim(noise.cols(), q.dim(), "mc_categorical_posterior");
  RowVector acc = RowVector::Zero(prior.components());
  for (Index n = 0; n < noise.rows(); ++n) {
    acc += component_posterior(reparameterize(q, noise.row(n)), prior).probs;
  }
  return Categorical{acc / static_cast<double>(noise.rows())};
}

double kl_categorical_uniform(const Categorical& q) {
  const double k = static_cast<double>(q.size());
  double kl = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    if (q.probs(i) > 0.0) kl += q.probs(i) * std::log(q.probs(i) * k);
  }
  return std::max(kl, 0.0);
}

RowVector reparameterize(const DiagGaussian& q, const RowVector& eps) {
  detail::require_same_dim(q.dim(), eps.size(), "reparameterize");
  return q.mean + (q.stddev().array() * eps.array()).matrix();
}

std::pair<Index, RowVector> sample_prior(const MixturePrior& prior, Rng& rng) {
  const Index k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(prior.components())));
  const DiagGaussian g = prior.component(k);
  RowVector eps(prior.dim());
  for (Index d = 0; d < eps.size(); ++d) eps(d) = rng.normal();
  return {k, reparameterize(g, eps)};
}

// ---------------------------------------------------------------------------
// Tape versions

MixtureVar bind(ad::Tape& tape, MixturePrior& prior) {
  return MixtureVar{tape.leaf(prior.means), tape.leaf(prior.log_vars)};
}

ad::Var diag_gaussian_log_prob(ad::Var z, const GaussianVar& g) {
  detail::require_same_dim(z.cols(), g.mean.cols(), "diag_gaussian_log_prob");
  const double d = static_cast<double>(z.cols());
  ad::Var quad = ad::sum(ad::square(z - g.mean) * ad::exp(-g.log_var));
  return (quad + ad::sum(g.log_var)) * -0.5 + (-0.5 * d * kLog2Pi);
}

ad::Var component_log_densities(ad::Var z, const MixtureVar& m) {
  detail::require_same_dim(z.cols(), m.means.cols(), "component_log_densities");
  const double d = static_cast<double>(z.cols());
  ad::Var quad = ad::sum_cols(ad::square(m.means - z) * ad::exp(-m.log_vars));
  ad::Var logdet = ad::sum_cols(m.log_vars);
  return ad::transpose((quad + logdet) * -0.5 + (-0.5 * d * kLog2Pi));
}

ad::Var log_component_posterior(ad::Var z, const MixtureVar& m) {
  ad::Var logits = component_log_densities(z, m);
  ad::Var lse = ad::log_sum_exp(logits);
  return logits - ad::broadcast(lse, 1, logits.cols());
}

ad::Var log_mc_categorical_posterior(const GaussianVar& q, const MixtureVar& m,
                                     const Matrix& noise) {
  if (noise.rows() == 0) throw std::invalid_argument("mc_categorical_posterior: n_samples = 0");
  detail::require_same_dim(noise.cols(), q.mean.cols(), "mc_categorical_posterior");
  ad::Tape& tape = *q.mean.tape();
  if (noise.rows() == 1) {
    return log_component_posterior(reparameterize(q, tape.constant(noise)), m);
  }
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<std::size_t>(noise.rows()));
  for (Index n = 0; n < noise.rows(); ++n) {
    rows.push_back(log_component_posterior(reparameterize(q, tape.constant(noise.row(n))), m));
  }
  // Column-wise log-mean-exp over the samples.
  ad::Var stacked = ad::concat_rows(rows);
  const Matrix col_max = stacked.value().colwise().maxCoeff();
  ad::Var cm = tape.constant(col_max);
  ad::Var lse = ad::log(ad::sum_rows(ad::exp(stacked - cm))) + cm;
  return lse - std::log(static_cast<double>(noise.rows()));
}

ad::Var kl_diag_gaussians(const GaussianVar& q, const GaussianVar& p) {
  detail::require_same_dim(q.mean.cols(), p.mean.cols(), "kl_diag_gaussians");
  ad::Var ratio = ad::exp(q.log_var - p.log_var);
  ad::Var mahal = ad::square(q.mean - p.mean) * ad::exp(-p.log_var);
  return ad::sum(ratio + mahal + (p.log_var - q.log_var) - 1.0) * 0.5;
}

ad::Var kl_to_components(const GaussianVar& q, const MixtureVar& m) {
  detail::require_same_dim(q.mean.cols(), m.means.cols(), "kl_to_components");
  ad::Var ratio = ad::exp(-(m.log_vars - q.log_var));
  ad::Var mahal = ad::square(m.means - q.mean) * ad::exp(-m.log_vars);
  return ad::sum_cols(ratio + mahal + (m.log_vars - q.log_var) - 1.0) * 0.5;
}

ad::Var kl_categorical_uniform_log(ad::Var log_q) {
  const double log_k = std::log(static_cast<double>(log_q.cols()));
  return ad::sum(ad::exp(log_q) * (log_q + log_k));
}

ad::Var reparameterize(const GaussianVar& q, ad::Var eps) {
  detail::require_same_dim(q.mean.cols(), eps.cols(), "reparameterize");
  return q.mean + ad::exp(q.log_var * 0.5) * eps;
}

}  // namespace gmvae
