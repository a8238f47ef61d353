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

// Optimisation loop: Xavier init, Adam, step-wise learning-rate halving,
// variance-floor projection and deterministic minibatching.

#ifndef GMVAE_TRAINING_HPP_
#define GMVAE_TRAINING_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmvae/model.hpp"
#include "gmvae/rng.hpp"
#include "gmvae/synthdata.hpp"

namespace gmvae {

/// Raised when a loss, gradient or parameter becomes non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr0 = 1e-3;
  long decay_start_steps = 5000;
  long decay_halflife_steps = 1250;
  int batch_size = 32;
  long total_steps = 20000;
  int mc_n = 1;
  double sigma_l_init = std::exp(-1.0);
  double sigma_l_floor = std::exp(-2.0);
  double sigma_o_init = std::exp(-2.0);
  double sigma_o_floor = std::exp(-4.0);
  int K = 10;
  int D = 16;
  int D_o = 16;
  int S = 8;
  std::uint64_t seed = 0;
  bool observed = false;
  double sigma_x2 = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  double prior_mean_scale = 1.0;  // initial component means ~ N(0, scale^2 I)
  // network sizes
  int text_embed = 8;
  int text_hidden = 8;
  int enc_hidden = 32;
  int dec_hidden = 48;
  int class_embed_dim = 4;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  ModelDims dims(const FactorSpec& spec) const;
  bool operator==(const TrainConfig&) const = default;
};

struct OptimizerState {
  std::vector<std::string> names;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
  double lr = 0.0;

  static OptimizerState for_params(std::span<const ad::NamedTensor> params);
};

struct LogRecord {
  long step = 0;
  double lr = 0.0;
  ElboTerms terms;  // batch means
};

ModelParams init_params(const TrainConfig& config, const FactorSpec& spec, Rng& rng);

double lr_at(long step, const TrainConfig& config);

/// In-place bias-corrected Adam update; increments state.step. Throws
/// NumericError naming the first parameter with a non-finite gradient.
void adam_step(std::span<const ad::NamedTensor> params, std::span<const Matrix> grads,
               OptimizerState& state, double lr, const TrainConfig& config);

struct TrainState {
  TrainConfig config;
  ModelParams params;
  OptimizerState opt;  // opt.step counts completed steps

  long step() const { return opt.step; }
};

/// Fresh parameters and optimizer state for `config` on `corpus`.
TrainState init_train_state(const Corpus& corpus, const TrainConfig& config);

/// Corpus indices used by minibatch `step`; a pure function of (seed, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, long step, int batch_size,
                                       std::size_t corpus_size);

using StepCallback = std::function<void(const LogRecord&)>;

/// Runs steps until state.step() == until_step. Splitting a run into several
/// calls gives the same result as one call.
void train_steps(TrainState& state, const Corpus& corpus, long until_step,
                 const StepCallback& on_step = {});

struct TrainResult {
  TrainState state;
  std::vector<LogRecord> log;
};

TrainResult train(const Corpus& corpus, const TrainConfig& config);

/// Trailing moving average; element i averages values[max(0, i-window+1) .. i].
std::vector<double> smoothed(const std::vector<double>& values, std::size_t window);

}  // namespace gmvae

#endif  // GMVAE_TRAINING_HPP_
