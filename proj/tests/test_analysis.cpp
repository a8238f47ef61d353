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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "gmvae/analysis.hpp"

using namespace gmvae;

namespace {

MixturePrior make_prior(const Matrix& means, double sigma) {
  return MixturePrior(means, Matrix::Constant(means.rows(), means.cols(), 2.0 * std::log(sigma)),
                      1e-6);
}

LogRecord record(long step, double kl_z, double kl_y) {
  LogRecord r;
  r.step = step;
  r.terms.kl_z_l = kl_z;
  r.terms.kl_y_l = kl_y;
  return r;
}

}  // namespace

TEST_CASE("assignment consistency") {
  // Group 0: modes 2 (x3) and 1; group 1: 0, 0, then a tie-free stray.
  const std::vector<Index> a{2, 2, 1, 2, 0, 0};
  const std::vector<int> g{0, 0, 0, 0, 1, 1};
  CHECK(assignment_consistency(a, g) == doctest::Approx(5.0 / 6.0));

  const std::vector<Index> b{0, 1, 0, 2, 2, 1};
  const std::vector<int> h{0, 0, 0, 1, 1, 1};
  CHECK(assignment_consistency(b, h) == doctest::Approx(4.0 / 6.0));

  SUBCASE("relabelling components changes nothing") {
    const std::vector<Index> perm{2, 0, 1};
    std::vector<Index> moved;
    for (Index x : b) moved.push_back(perm[x]);
    CHECK(assignment_consistency(moved, h) == assignment_consistency(b, h));
  }
  SUBCASE("a single component is perfectly consistent") {
    const std::vector<Index> ones(6, 0);
    CHECK(assignment_consistency(ones, h) == 1.0);
  }
  SUBCASE("histogram") {
    const Eigen::MatrixXi hist = assignment_histogram(b, h, 3);
    REQUIRE(hist.rows() == 2);
    REQUIRE(hist.cols() == 3);
    CHECK(hist(0, 0) == 2);
    CHECK(hist(0, 1) == 1);
    CHECK(hist(1, 2) == 2);
    CHECK(hist.sum() == 6);
  }
  CHECK_THROWS_AS(assignment_consistency(b, std::vector<int>{0, 1}), std::invalid_argument);
}

TEST_CASE("scattering ratio and marginal moments") {
  Matrix mu(2, 2);
  mu << -1, 0, 1, 0;
  const MixturePrior p = make_prior(mu, 1.0);
  const RowVector r = scattering_ratio(p);
  CHECK(r(0) == doctest::Approx(1.0));
  CHECK(r(1) == doctest::Approx(0.0));

  const MarginalStats m = marginal_stats(p);
  CHECK(m.mean(0) == doctest::Approx(0.0));
  CHECK(m.stddev(0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(m.stddev(1) == doctest::Approx(1.0));

  SUBCASE("ratio is scale invariant") {
    const MixturePrior q = make_prior(7.0 * mu, 7.0);
    CHECK(scattering_ratio(q)(0) == doctest::Approx(1.0));
  }
  SUBCASE("moments agree with sampling") {
    Rng rng(11);
    Matrix means = rng.normal_matrix(4, 3);
    MixturePrior q = make_prior(means, 0.4);
    const int n = 200000;
    RowVector sum = RowVector::Zero(3), sq = RowVector::Zero(3);
    for (int i = 0; i < n; ++i) {
      const RowVector z = q.component(static_cast<Index>(rng.below(4))).mean +
                          0.4 * rng.normal_matrix(1, 3);
      sum += z;
      sq += z.cwiseProduct(z);
    }
    const RowVector mean = sum / n;
    const RowVector sd = (sq / n - mean.cwiseProduct(mean)).cwiseSqrt();
    const MarginalStats ms = marginal_stats(q);
    for (Index d = 0; d < 3; ++d) {
      CHECK(mean(d) == doctest::Approx(ms.mean(d)).epsilon(0.02).scale(1.0));
      CHECK(sd(d) == doctest::Approx(ms.stddev(d)).epsilon(0.02));
    }
  }
}

TEST_CASE("component distances and two-group split") {
  Rng rng(4);
  const MixturePrior p = make_prior(rng.normal_matrix(6, 5), 0.5);
  const Matrix d = component_distance_matrix(p);
  CHECK(d.isApprox(d.transpose(), 0.0));
  CHECK(d.diagonal().isZero(0.0));
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      for (Index k = 0; k < 6; ++k) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
    }
  }

  Matrix mu(4, 2);
  mu << 0, 0, 0.1, 0, 5, 5, 5, 5.2;
  const TwoClusterSplit s = two_cluster(component_distance_matrix(make_prior(mu, 1.0)));
  CHECK(s.separated());
  CHECK(s.group[0] == s.group[1]);
  CHECK(s.group[2] == s.group[3]);
  CHECK(s.group[0] != s.group[2]);
  CHECK(s.max_within == doctest::Approx(0.2));

  Matrix line(3, 1);
  line << 0, 1, 2;
  CHECK(!two_cluster(component_distance_matrix(make_prior(line, 1.0))).separated());
}

TEST_CASE("LDA probe") {
  Rng rng(21);
  const int n = 300;
  Matrix z(n, 3);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 3;
    z.row(i) = rng.normal_matrix(1, 3);
    z(i, y[i]) += 6.0;
  }
  const LdaModel m = lda_fit(z, y);
  CHECK(lda_accuracy(m, z, y) > 0.99);

  SUBCASE("shuffled labels sit near chance") {
    std::vector<int> shuffled = y;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    // Fit on half, score on the other half.
    const Matrix ztr = z.topRows(n / 2), zte = z.bottomRows(n / 2);
    const std::vector<int> ytr(shuffled.begin(), shuffled.begin() + n / 2);
    const std::vector<int> yte(shuffled.begin() + n / 2, shuffled.end());
    CHECK(lda_accuracy(lda_fit(ztr, ytr), zte, yte) < 0.5);
  }
  SUBCASE("needs two classes") {
    CHECK_THROWS_AS(lda_fit(z, std::vector<int>(n, 1)), std::invalid_argument);
  }
}

TEST_CASE("collapse report") {
  std::vector<LogRecord> log;
  for (long s = 0; s < 300; ++s) log.push_back(record(s, s < 150 ? 2.0 : 0.001, 0.3));

  const std::vector<Index> spread{0, 1, 2, 3, 0, 1, 2, 3};
  CollapseReport r = collapse_report(log, spread, 4);
  CHECK(r.final_smoothed_kl_z_l == doctest::Approx(0.001));
  CHECK(r.min_smoothed_kl_z_l == doctest::Approx(0.001));
  CHECK(r.usage_entropy == doctest::Approx(std::log(4.0)));
  CHECK(r.collapsed);  // the latent carries no information

  for (auto& rec : log) rec.terms.kl_z_l = 1.5;
  r = collapse_report(log, spread, 4);
  CHECK(!r.collapsed);

  const std::vector<Index> one(8, 2);
  r = collapse_report(log, one, 4);
  CHECK(r.usage_entropy == 0.0);
  CHECK(r.usage[2] == 1.0);
  CHECK(r.collapsed);  // every utterance on one component

  r = collapse_report(log, one, 1 + 2);
  CHECK(r.collapsed);
  const std::vector<Index> zeros(8, 0);
  CHECK(!collapse_report(log, zeros, 1).collapsed);  // K = 1 cannot be judged by usage

  CHECK_THROWS_AS(collapse_report(log, std::vector<Index>{4}, 4), std::out_of_range);
  CHECK_THROWS_AS(collapse_report({}, spread, 4), std::invalid_argument);
}

TEST_CASE("traversal") {
  const std::vector<double> grid = traversal_grid(1.0, 0.5, 5);
  CHECK(grid == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});
  CHECK(traversal_grid(3.0, 1.0, 1) == std::vector<double>{3.0});

  const Corpus corpus = gmvae::testing::small_corpus(8);
  TrainState st = init_train_state(corpus, gmvae::testing::small_config());
  const std::vector<int> tokens{1, 4, 2};
  const RowVector seed = st.params.latent_prior.means.value().row(1);
  const std::vector<double> g{-1.0, seed(2), 1.0};
  const auto out = traverse(st.params, tokens, seed, 2, g, 1, 9);
  REQUIRE(out.size() == 3);

  GenerateRequest req;
  req.tokens = tokens;
  req.z_latent = seed;
  req.label = 1;
  req.n_frames = 9;
  Rng rng(0);
  CHECK(out[1] == generate(st.params, req, rng));
  CHECK(out[0] != out[1]);
  CHECK_THROWS_AS(traverse(st.params, tokens, seed, 5, g, 1, 9), std::out_of_range);
}

TEST_CASE("transfer keeps the reference frames-per-token") {
  const Corpus corpus = gmvae::testing::small_corpus(8);
  const Utterance& ref = corpus.utterances[0];
  const double per_token =
      static_cast<double>(ref.frames.rows()) / static_cast<double>(ref.tokens.size());
  for (std::size_t n : {1u, 3u, 7u}) {
    CHECK(transfer_length(ref, n) == static_cast<Index>(std::llround(per_token * n)));
  }

  TrainState st = init_train_state(corpus, gmvae::testing::small_config());
  const std::vector<int> tokens{0, 5, 5, 2};
  TransferOptions opts;
  opts.denoise = true;
  opts.denoise_dims = 2;
  const TransferResult t = transfer_eval(st.params, ref, tokens, opts);
  CHECK(t.frames.rows() == transfer_length(ref, tokens.size()));
  REQUIRE(t.clean_component.has_value());
  const std::vector<Index> ranked = dims_by_scattering(st.params.latent_prior);
  CHECK(t.overwritten_dims == std::vector<Index>(ranked.begin(), ranked.begin() + 2));
  for (Index d : t.overwritten_dims) {
    CHECK(t.z_latent(d) == st.params.latent_prior.means.value()(*t.clean_component, d));
  }
}

TEST_CASE("analyze groups by condition") {
  const Corpus corpus = gmvae::testing::small_corpus(12);
  TrainState st = init_train_state(corpus, gmvae::testing::small_config());
  const AnalysisReport rep = analyze(st.params, corpus);
  CHECK(rep.histogram.sum() == 12);
  CHECK(rep.histogram.cols() == 3);
  CHECK(rep.consistency >= 0.5);
  CHECK(rep.consistency <= 1.0);
  CHECK(!rep.collapse.has_value());
  const std::string js = to_json(rep);
  CHECK(js.find("\"consistency\"") != std::string::npos);
  CHECK(js.find("\"scattering_ratio\"") != std::string::npos);
}
