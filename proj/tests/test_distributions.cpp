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

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "gmvae/distributions.hpp"

using namespace gmvae;

namespace {

// Gauss-Hermite nodes and weights (weight function exp(-x^2)) from the
// Golub-Welsch eigenproblem of the Hermite Jacobi matrix.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  Eigen::VectorXd w = std::sqrt(std::numbers::pi) * es.eigenvectors().row(0).transpose().array().square();
  return {es.eigenvalues(), w};
}

MixturePrior two_component_1d() {
  Matrix means(2, 1), log_vars(2, 1);
  means << -0.8, 0.6;
  log_vars << std::log(0.5), std::log(1.3);
  return MixturePrior(means, log_vars, 0.1);
}

RowVector row(std::initializer_list<double> v) {
  RowVector r(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

}  // namespace

TEST_CASE("diag_gaussian_log_prob equals the sum of scalar log-densities") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const RowVector z = rng.normal_matrix(1, 5), m = rng.normal_matrix(1, 5),
                    lv = rng.normal_matrix(1, 5);
    double expect = 0.0;
    for (Index d = 0; d < 5; ++d) {
      const double var = std::exp(lv(d));
      expect += -0.5 * std::log(2 * std::numbers::pi * var) - (z(d) - m(d)) * (z(d) - m(d)) / (2 * var);
    }
    CHECK(diag_gaussian_log_prob(z, DiagGaussian{m, lv}) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(diag_gaussian_log_prob(row({0, 0}), DiagGaussian{row({0}), row({0})}), DimensionError);
}

TEST_CASE("kl_diag_gaussians matches a Monte Carlo estimate within 1%") {
  const DiagGaussian q{row({0.3, -0.5, 1.0}), row({-0.4, 0.2, -1.0})};
  const DiagGaussian p{row({0.0, 0.4, 0.2}), row({0.1, -0.3, 0.0})};
  Rng rng(2);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const RowVector z = reparameterize(q, rng.normal_matrix(1, 3));
    acc += diag_gaussian_log_prob(z, q) - diag_gaussian_log_prob(z, p);
  }
  const double mc = acc / n;
  const double exact = kl_diag_gaussians(q, p);
  CHECK(std::abs(mc - exact) / exact < 0.01);
  CHECK(kl_diag_gaussians(q, q) == doctest::Approx(0.0));
}

TEST_CASE("mc_categorical_posterior matches Gauss-Hermite quadrature within 2%") {
  const MixturePrior prior = two_component_1d();
  const DiagGaussian q{row({0.1}), row({std::log(0.7)})};
  Rng rng(3);
  const Categorical mc = mc_categorical_posterior(q, prior, rng.normal_matrix(100000, 1));

  const auto [x, w] = gauss_hermite(60);
  RowVector quad = RowVector::Zero(2);
  const double s = q.stddev()(0);
  for (Index i = 0; i < x.size(); ++i) {
    const RowVector z = row({q.mean(0) + std::sqrt(2.0) * s * x(i)});
    quad += w(i) / std::sqrt(std::numbers::pi) * component_posterior(z, prior).probs;
  }
  CHECK(quad.sum() == doctest::Approx(1.0).epsilon(1e-10));
  for (Index k = 0; k < 2; ++k) CHECK(std::abs(mc.probs(k) - quad(k)) / quad(k) < 0.02);
  CHECK_THROWS_AS(mc_categorical_posterior(q, prior, Matrix(0, 1)), std::invalid_argument);
}

TEST_CASE("kl_categorical_uniform reference values") {
  RowVector one_hot = RowVector::Zero(10);
  one_hot(3) = 1.0;
  CHECK(kl_categorical_uniform(Categorical{one_hot}) == std::log(10.0));
  CHECK(kl_categorical_uniform(Categorical{row({0.7, 0.3})}) == doctest::Approx(0.082282).epsilon(1e-5));
  CHECK(kl_categorical_uniform(Categorical{RowVector::Constant(4, 0.25)}) == doctest::Approx(0.0));
}

TEST_CASE("component_posterior is a normalised softmax of log-densities") {
  const MixturePrior prior = two_component_1d();
  const RowVector z = row({0.2});
  const Categorical post = component_posterior(z, prior);
  CHECK(post.probs.sum() == doctest::Approx(1.0));
  const double l0 = diag_gaussian_log_prob(z, prior.component(0));
  const double l1 = diag_gaussian_log_prob(z, prior.component(1));
  CHECK(post.probs(0) == doctest::Approx(1.0 / (1.0 + std::exp(l1 - l0))));
  // Far-out points stay finite.
  CHECK(component_posterior(row({1e3}), prior).probs.allFinite());
}

TEST_CASE("argmax breaks ties towards the lowest index") {
  CHECK(Categorical{row({0.2, 0.4, 0.4})}.argmax() == 1);
  CHECK(Categorical{row({0.5, 0.5})}.argmax() == 0);
}

TEST_CASE("prior sampling reproduces the mixture moments") {
  Matrix means(3, 2), log_vars(3, 2);
  means << -1.0, 0.0, 0.5, 2.0, 1.5, -1.0;
  log_vars << -1.0, -2.0, 0.0, -0.5, -1.5, 0.3;
  const MixturePrior prior(means, log_vars, 0.05);
  Rng rng(4);
  const int n = 200000;
  RowVector s1 = RowVector::Zero(2), s2 = RowVector::Zero(2);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) {
    const auto [k, z] = sample_prior(prior, rng);
    counts[k] += 1;
    s1 += z;
    s2 += z.cwiseProduct(z);
  }
  const RowVector mean = means.colwise().mean();
  const RowVector second = (log_vars.array().exp() + means.array().square()).colwise().mean();
  for (Index d = 0; d < 2; ++d) {
    CHECK(s1(d) / n == doctest::Approx(mean(d)).epsilon(0.02).scale(1.0));
    CHECK(s2(d) / n == doctest::Approx(second(d)).epsilon(0.01));
  }
  for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.01);
}

TEST_CASE("variance floor projection") {
  Matrix means = Matrix::Zero(2, 2);
  Matrix log_vars(2, 2);
  log_vars << -10.0, 0.0, -3.0, -5.0;
  MixturePrior prior(means, log_vars, std::exp(-2.0));
  prior.project_to_floor();
  CHECK(prior.min_stddev() == doctest::Approx(std::exp(-2.0)));
  CHECK(prior.log_vars.value()(0, 1) == 0.0);
  CHECK(prior.means.requires_grad());
}

TEST_CASE("tape versions agree with the plain versions") {
  Rng rng(5);
  Matrix means = rng.normal_matrix(3, 4), log_vars = 0.3 * rng.normal_matrix(3, 4);
  MixturePrior prior(means, log_vars, 0.01);
  const DiagGaussian q{rng.normal_matrix(1, 4), 0.2 * rng.normal_matrix(1, 4)};
  const Matrix noise = rng.normal_matrix(5, 4);

  ad::Tape tape;
  const MixtureVar m = bind(tape, prior);
  const GaussianVar qv{tape.constant(Matrix(q.mean)), tape.constant(Matrix(q.log_var))};

  const Categorical plain = mc_categorical_posterior(q, prior, noise);
  const ad::Var log_q = log_mc_categorical_posterior(qv, m, noise);
  CHECK((log_q.value().array().exp() - plain.probs.array()).abs().maxCoeff() < 1e-12);
  CHECK(kl_categorical_uniform_log(log_q).item() == doctest::Approx(kl_categorical_uniform(plain)));

  const ad::Var kls = kl_to_components(qv, m);
  REQUIRE(kls.rows() == 3);
  for (Index k = 0; k < 3; ++k) {
    CHECK(kls.value()(k, 0) == doctest::Approx(kl_diag_gaussians(q, prior.component(k))));
  }
  const RowVector z = noise.row(0);
  const ad::Var dens = component_log_densities(tape.constant(Matrix(z)), m);
  const RowVector plain_dens = component_log_densities(z, means, log_vars);
  CHECK((dens.value() - plain_dens).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tape estimators have correct gradients") {
  Rng rng(6);
  MixturePrior prior(rng.normal_matrix(3, 2), 0.3 * rng.normal_matrix(3, 2), 0.01);
  ad::Tensor qm(rng.normal_matrix(1, 2), true), qlv(0.2 * rng.normal_matrix(1, 2), true);
  const Matrix noise = rng.normal_matrix(4, 2);
  std::vector<ad::NamedTensor> params{
      {"q.mean", &qm}, {"q.log_var", &qlv}, {"means", &prior.means}, {"log_vars", &prior.log_vars}};
  auto f = [&](ad::Tape&, std::span<const ad::Var> v) {
    const GaussianVar q{v[0], v[1]};
    const MixtureVar m{v[2], v[3]};
    const ad::Var log_q = log_mc_categorical_posterior(q, m, noise);
    return ad::matmul(ad::exp(log_q), kl_to_components(q, m)) + kl_categorical_uniform_log(log_q);
  };
  const ad::GradCheckReport rep = ad::grad_check(f, params, 1e-5, 1e-6);
  CHECK(rep.passed);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("reparameterize shifts and scales") {
  const DiagGaussian q{row({1.0, -2.0}), row({std::log(4.0), 0.0})};
  const RowVector z = reparameterize(q, row({0.5, -1.0}));
  CHECK(z(0) == doctest::Approx(2.0));
  CHECK(z(1) == doctest::Approx(-3.0));
}
