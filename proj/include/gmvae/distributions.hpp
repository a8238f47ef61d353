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

// Diagonal Gaussians, uniform-weight Gaussian mixtures and categoricals.
//
// Every quantity comes in two flavours: a plain Eigen version templated on the
// scalar type (used for evaluation and analysis) and a tape version operating
// on ad::Var (used inside the training objective). Mixture responsibilities
// are always computed in log space with max subtraction.

#ifndef GMVAE_DISTRIBUTIONS_HPP_
#define GMVAE_DISTRIBUTIONS_HPP_

#include <cmath>
#include <stdexcept>
#include <utility>

#include "gmvae/autodiff.hpp"
#include "gmvae/rng.hpp"
#include "gmvae/types.hpp"

namespace gmvae {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DiagGaussian {
  RowVector mean;
  RowVector log_var;

  Index dim() const { return mean.size(); }
  RowVector variance() const { return log_var.array().exp(); }
  RowVector stddev() const { return (0.5 * log_var.array()).exp(); }
};

struct Categorical {
  RowVector probs;

  Index size() const { return probs.size(); }
  Index argmax() const;
};

/// K diagonal Gaussians with fixed weights 1/K. Means and log-variances are
/// (K x D) tensors so they can be trained directly.
struct MixturePrior {
  ad::Tensor means;
  ad::Tensor log_vars;
  double sigma_floor = 0.0;

  MixturePrior() = default;
  MixturePrior(Matrix means, Matrix log_vars, double sigma_floor);

  Index components() const { return means.rows(); }
  Index dim() const { return means.cols(); }
  double weight() const { return 1.0 / static_cast<double>(components()); }
  DiagGaussian component(Index k) const;
  /// Clamps every log-variance to at least 2 ln(sigma_floor).
  void project_to_floor();
  double min_stddev() const;
};

namespace detail {
inline void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
}
}  // namespace detail

/// log N(z; mean, diag(exp(log_var))).
template <typename DerivedZ, typename DerivedM, typename DerivedV>
typename DerivedZ::Scalar diag_gaussian_log_prob(const Eigen::MatrixBase<DerivedZ>& z,
                                                 const Eigen::MatrixBase<DerivedM>& mean,
                                                 const Eigen::MatrixBase<DerivedV>& log_var) {
  using Scalar = typename DerivedZ::Scalar;
  detail::require_same_dim(z.size(), mean.size(), "diag_gaussian_log_prob");
  detail::require_same_dim(z.size(), log_var.size(), "diag_gaussian_log_prob");
  const auto diff = (z.derived().array() - mean.derived().array());
  const Scalar quad = (diff.square() * (-log_var.derived().array()).exp()).sum();
  return Scalar(-0.5) * (quad + log_var.derived().array().sum() +
                         static_cast<Scalar>(z.size()) * static_cast<Scalar>(kLog2Pi));
}

inline double diag_gaussian_log_prob(const RowVector& z, const DiagGaussian& g) {
  return diag_gaussian_log_prob(z, g.mean, g.log_var);
}

/// Log-densities of `z` under each row of (means, log_vars); returns 1 x K.
template <typename DerivedZ, typename DerivedM, typename DerivedV>
RowVectorX<typename DerivedZ::Scalar> component_log_densities(
    const Eigen::MatrixBase<DerivedZ>& z, const Eigen::MatrixBase<DerivedM>& means,
    const Eigen::MatrixBase<DerivedV>& log_vars) {
  detail::require_same_dim(z.size(), means.cols(), "component_log_densities");
  RowVectorX<typename DerivedZ::Scalar> out(means.rows());
  for (Index k = 0; k < means.rows(); ++k) {
    out(k) = diag_gaussian_log_prob(z, means.row(k), log_vars.row(k));
  }
  return out;
}

/// exp(x - logsumexp(x)).
template <typename Derived>
RowVectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  const auto m = logits.maxCoeff();
  RowVectorX<typename Derived::Scalar> p = (logits.derived().array() - m).exp();
  return p / p.sum();
}

/// p(y = k | z) for the uniform-weight mixture.
Categorical component_posterior(const RowVector& z, const MixturePrior& prior);

/// (1/n) sum_i p(y | mean + stddev * noise_i); `noise` is n x D.
Categorical mc_categorical_posterior(const DiagGaussian& q, const MixturePrior& prior,
                                     const Matrix& noise);

template <typename Derived>
typename Derived::Scalar kl_diag_gaussians(const Eigen::MatrixBase<Derived>& q_mean,
                                           const Eigen::MatrixBase<Derived>& q_log_var,
                                           const Eigen::MatrixBase<Derived>& p_mean,
                                           const Eigen::MatrixBase<Derived>& p_log_var) {
  detail::require_same_dim(q_mean.size(), p_mean.size(), "kl_diag_gaussians");
  const auto ratio = (q_log_var.derived().array() - p_log_var.derived().array()).exp();
  const auto mahal =
      (q_mean.derived().array() - p_mean.derived().array()).square() *
      (-p_log_var.derived().array()).exp();
  return 0.5 * (ratio + mahal - 1.0 + p_log_var.derived().array() - q_log_var.derived().array())
                   .sum();
}

inline double kl_diag_gaussians(const DiagGaussian& q, const DiagGaussian& p) {
  detail::require_same_dim(q.dim(), p.dim(), "kl_diag_gaussians");
  return kl_diag_gaussians(q.mean, q.log_var, p.mean, p.log_var);
}

/// KL(q || Uniform(K)) = sum_k q_k ln(q_k K), with 0 ln 0 = 0.
double kl_categorical_uniform(const Categorical& q);

RowVector reparameterize(const DiagGaussian& q, const RowVector& eps);

/// Ancestral draw: y ~ Uniform(K), z ~ N(mu_y, diag sigma_y^2).
std::pair<Index, RowVector> sample_prior(const MixturePrior& prior, Rng& rng);

// ---------------------------------------------------------------------------
// Tape versions

struct GaussianVar {
  ad::Var mean;     // 1 x D
  ad::Var log_var;  // 1 x D
};

struct MixtureVar {
  ad::Var means;     // K x D
  ad::Var log_vars;  // K x D
};

MixtureVar bind(ad::Tape& tape, MixturePrior& prior);

ad::Var diag_gaussian_log_prob(ad::Var z, const GaussianVar& g);
/// 1 x K log-densities of a 1 x D point.
ad::Var component_log_densities(ad::Var z, const MixtureVar& m);
/// 1 x K log p(y | z).
ad::Var log_component_posterior(ad::Var z, const MixtureVar& m);
/// 1 x K log q~(y | X) from reparameterised samples of q; `noise` is n x D.
ad::Var log_mc_categorical_posterior(const GaussianVar& q, const MixtureVar& m,
                                     const Matrix& noise);
ad::Var kl_diag_gaussians(const GaussianVar& q, const GaussianVar& p);
/// K x 1 vector of KL(q || component k).
ad::Var kl_to_components(const GaussianVar& q, const MixtureVar& m);
/// KL(q || Uniform) given log q as a 1 x K Var.
ad::Var kl_categorical_uniform_log(ad::Var log_q);
/// mean + exp(0.5 log_var) * eps; eps is a 1 x D constant on the same tape.
ad::Var reparameterize(const GaussianVar& q, ad::Var eps);

}  // namespace gmvae

#endif  // GMVAE_DISTRIBUTIONS_HPP_
