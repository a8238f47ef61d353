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
#include <limits>
#include <vector>

#include "doctest.h"
#include "fixtures.hpp"
#include "gmvae/training.hpp"

using namespace gmvae;
using gmvae::testing::small_config;
using gmvae::testing::small_corpus;

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_at(0, c) == 1e-3);
  CHECK(lr_at(c.decay_start_steps - 1, c) == 1e-3);
  CHECK(lr_at(c.decay_start_steps, c) == 1e-3);
  CHECK(lr_at(c.decay_start_steps + c.decay_halflife_steps, c) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(c.decay_start_steps + 3 * c.decay_halflife_steps, c) ==
        doctest::Approx(1.25e-4).epsilon(1e-12));
  double prev = lr_at(0, c);
  for (long s = 1; s < 20000; s += 37) {
    const double lr = lr_at(s, c);
    CHECK(lr <= prev);
    CHECK(lr > 0.0);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_at(-1, c), std::invalid_argument);
}

TEST_CASE("initialisation") {
  const Corpus corpus = small_corpus();
  const TrainConfig c = small_config();
  const TrainState a = init_train_state(corpus, c);
  const TrainState b = init_train_state(corpus, c);

  for (const auto& [name, t] : a.params.named_tensors()) {
    CAPTURE(name);
    const Matrix& w = t->value();
    if (name == "latent_prior.log_vars") {
      CHECK((w.array() == 2.0 * std::log(c.sigma_l_init)).all());
    } else if (name == "latent_prior.means" || name == "class_embedding") {
      CHECK(w.cwiseAbs().maxCoeff() > 0.0);
    } else if (name.ends_with(".b") || name.ends_with(".c") || name.find(".b_") != std::string::npos ||
               name.ends_with("_b")) {
      CHECK(w.isZero(0.0));
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      CHECK(w.cwiseAbs().maxCoeff() <= bound);
      CHECK(w.cwiseAbs().maxCoeff() > 0.2 * bound);
    }
  }
  CHECK(a.params.latent_prior.min_stddev() == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  const auto na = a.params.named_tensors();
  const auto nb = b.params.named_tensors();
  for (std::size_t i = 0; i < na.size(); ++i) CHECK(na[i].second->value() == nb[i].second->value());

  TrainConfig other = c;
  other.seed += 1;
  const TrainState d = init_train_state(corpus, other);
  CHECK(d.params.latent_prior.means.value() != a.params.latent_prior.means.value());

  SUBCASE("observed variant starts with the tighter prior") {
    const TrainState o = init_train_state(corpus, small_config(true));
    CHECK(o.params.observed_prior.min_stddev() == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  }
  SUBCASE("class count must match the corpus") {
    TrainConfig bad = c;
    bad.S = 4;
    CHECK_THROWS_WITH_AS(init_train_state(corpus, bad), doctest::Contains("S = 4"),
                         std::invalid_argument);
  }
}

namespace {

struct Scalar {
  ad::Tensor t{Matrix::Constant(1, 1, 0.5), true};
  std::vector<ad::NamedTensor> named() { return {{"w", &t}}; }
};

}  // namespace

TEST_CASE("adam update") {
  TrainConfig c;
  SUBCASE("zero gradient leaves parameters unchanged") {
    Scalar s;
    auto named = s.named();
    OptimizerState st = OptimizerState::for_params(named);
    const std::vector<Matrix> g{Matrix::Zero(1, 1)};
    for (int i = 0; i < 5; ++i) adam_step(named, g, st, 1e-2, c);
    CHECK(s.t.value()(0, 0) == 0.5);
    CHECK(st.step == 5);
  }
  SUBCASE("constant gradient moves by about lr per step") {
    Scalar s;
    auto named = s.named();
    OptimizerState st = OptimizerState::for_params(named);
    const std::vector<Matrix> g{Matrix::Constant(1, 1, 3.0)};
    for (int i = 0; i < 4; ++i) {
      const double before = s.t.value()(0, 0);
      adam_step(named, g, st, 1e-2, c);
      CHECK(before - s.t.value()(0, 0) == doctest::Approx(1e-2).epsilon(1e-6));
    }
  }
  SUBCASE("ten-step trace matches a scalar reference") {
    Scalar s;
    auto named = s.named();
    OptimizerState st = OptimizerState::for_params(named);
    double w = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 10; ++t) {
      const double grad = std::sin(1.3 * t) + 0.1 * t;
      const double lr = 1e-2 / t;
      m = c.adam_beta1 * m + (1 - c.adam_beta1) * grad;
      v = c.adam_beta2 * v + (1 - c.adam_beta2) * grad * grad;
      const double mh = m / (1 - std::pow(c.adam_beta1, t));
      const double vh = v / (1 - std::pow(c.adam_beta2, t));
      w -= lr * mh / (std::sqrt(vh) + c.adam_eps);
      adam_step(named, std::vector<Matrix>{Matrix::Constant(1, 1, grad)}, st, lr, c);
      CHECK(s.t.value()(0, 0) == doctest::Approx(w).epsilon(1e-13));
    }
  }
  SUBCASE("non-finite gradient names the parameter and changes nothing") {
    Scalar s;
    auto named = s.named();
    OptimizerState st = OptimizerState::for_params(named);
    const std::vector<Matrix> g{Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN())};
    CHECK_THROWS_WITH_AS(adam_step(named, g, st, 1e-2, c), doctest::Contains("parameter w"),
                         NumericError);
    CHECK(s.t.value()(0, 0) == 0.5);
    CHECK(st.step == 0);
  }
}

TEST_CASE("minibatches are epoch permutations and depend only on seed and step") {
  const std::size_t m = 10;
  std::vector<int> seen(m, 0);
  for (long step = 0; step < 5; ++step) {
    const auto idx = batch_indices(7, step, 4, m);
    CHECK(idx == batch_indices(7, step, 4, m));
    for (std::size_t i : idx) {
      REQUIRE(i < m);
      seen[i] += 1;
    }
  }
  // 20 draws over 10 items: exactly two epochs.
  for (int count : seen) CHECK(count == 2);
  CHECK(batch_indices(7, 0, 4, m) != batch_indices(8, 0, 4, m));
}

TEST_CASE("variance floor holds after every step") {
  const Corpus corpus = small_corpus();
  for (bool observed : {false, true}) {
    CAPTURE(observed);
    TrainConfig c = small_config(observed);
    // Start at the floor so that any downward push has to be clamped.
    c.sigma_l_init = c.sigma_l_floor;
    c.sigma_o_init = c.sigma_o_floor;
    c.lr0 = 0.05;
    TrainState st = init_train_state(corpus, c);
    int steps = 0;
    train_steps(st, corpus, 30, [&](const LogRecord&) {
      ++steps;
      CHECK(st.params.latent_prior.min_stddev() >= c.sigma_l_floor * (1 - 1e-12));
      if (observed) CHECK(st.params.observed_prior.min_stddev() >= c.sigma_o_floor * (1 - 1e-12));
    });
    CHECK(steps == 30);
  }
}

TEST_CASE("split runs reproduce an uninterrupted run") {
  const Corpus corpus = small_corpus();
  for (bool observed : {false, true}) {
    CAPTURE(observed);
    const TrainConfig c = small_config(observed);
    const TrainResult whole = train(corpus, c);

    TrainState st = init_train_state(corpus, c);
    std::vector<LogRecord> log;
    auto keep = [&log](const LogRecord& r) { log.push_back(r); };
    train_steps(st, corpus, 5, keep);
    train_steps(st, corpus, 5, keep);  // no-op
    train_steps(st, corpus, c.total_steps, keep);

    REQUIRE(log.size() == whole.log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      CHECK(log[i].step == static_cast<long>(i));
      CHECK(log[i].terms.total == whole.log[i].terms.total);
      CHECK(log[i].terms.kl_z_o.has_value() == observed);
    }
    const auto a = whole.state.params.named_tensors();
    const auto b = st.params.named_tensors();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].second->value() == b[i].tensor->value());
  }
}

TEST_CASE("training raises the smoothed bound") {
  const Corpus corpus = small_corpus(64);
  TrainConfig c = small_config();
  c.total_steps = 300;
  c.decay_start_steps = 200;
  c.decay_halflife_steps = 50;
  c.lr0 = 3e-3;
  const TrainResult r = train(corpus, c);
  std::vector<double> total;
  for (const LogRecord& rec : r.log) total.push_back(rec.terms.total);
  const auto s = smoothed(total, 50);
  CHECK(s.back() > s[49] + 10.0);
  CHECK(r.log.back().lr < c.lr0);
  for (const LogRecord& rec : r.log) CHECK(rec.lr == lr_at(rec.step, c));
}

TEST_CASE("smoothing") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(smoothed(v, 2) == std::vector<double>{1, 1.5, 2.5, 3.5, 4.5});
  CHECK(smoothed(v, 1) == v);
  CHECK(smoothed(v, 10).back() == 3.0);
  CHECK_THROWS_AS(smoothed(v, 0), std::invalid_argument);
}

TEST_CASE("config validation names the field") {
  TrainConfig c;
  c.sigma_l_floor = 1.0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("sigma_l_floor"), std::invalid_argument);
  c = TrainConfig{};
  c.observed = true;
  c.sigma_o_init = 1.0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("sigma_o"), std::invalid_argument);
}
