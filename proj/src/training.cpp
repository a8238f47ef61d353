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

#include "gmvae/training.hpp"

#include <algorithm>
#include <numeric>

namespace gmvae {

namespace {

// Stream ids for derive_seed; fixed so that runs are reproducible.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kNoiseStream = 3;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("train config: " + what);
}

void xavier(ad::Tensor& t, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  Matrix& w = t.value();
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
  }
}

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  return leaf == "b" || leaf == "c" || leaf.rfind("b_", 0) == 0 || leaf.ends_with("_b");
}

}  // namespace

void TrainConfig::validate() const {
  require(lr0 > 0.0 && std::isfinite(lr0), "lr0 must be positive");
  require(decay_start_steps >= 0, "decay_start_steps must be >= 0");
  require(decay_halflife_steps > 0, "decay_halflife_steps must be > 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_steps >= 0, "total_steps must be >= 0");
  require(mc_n >= 1, "mc_n must be >= 1");
  require(sigma_l_init > 0.0 && sigma_l_floor > 0.0, "sigma_l values must be positive");
  require(sigma_l_floor <= sigma_l_init, "sigma_l_floor must not exceed sigma_l_init");
  require(K >= 1 && D >= 1 && S >= 1, "K, D and S must be >= 1");
  require(sigma_x2 > 0.0, "sigma_x2 must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(prior_mean_scale >= 0.0, "prior_mean_scale must be >= 0");
  require(text_embed >= 1 && text_hidden >= 1 && enc_hidden >= 1 && dec_hidden >= 1 &&
              class_embed_dim >= 1,
          "network sizes must be >= 1");
  if (observed) {
    require(D_o >= 1, "D_o must be >= 1");
    require(sigma_o_init > 0.0 && sigma_o_floor > 0.0, "sigma_o values must be positive");
    require(sigma_o_floor <= sigma_o_init, "sigma_o_floor must not exceed sigma_o_init");
    require(sigma_o_init < sigma_l_init, "sigma_o_init must be below sigma_l_init");
    require(sigma_o_floor < sigma_l_floor, "sigma_o_floor must be below sigma_l_floor");
  }
}

ModelDims TrainConfig::dims(const FactorSpec& spec) const {
  ModelDims d;
  d.vocab = spec.vocab;
  d.frame_dim = spec.frame_dim;
  d.text_embed = text_embed;
  d.text_hidden = text_hidden;
  d.enc_hidden = enc_hidden;
  d.dec_hidden = dec_hidden;
  d.latent_components = K;
  d.latent_dim = D;
  d.n_classes = S;
  d.observed_dim = D_o;
  d.class_embed_dim = class_embed_dim;
  d.observed = observed;
  return d;
}

OptimizerState OptimizerState::for_params(std::span<const ad::NamedTensor> params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.m.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
    s.v.push_back(Matrix::Zero(p.tensor->rows(), p.tensor->cols()));
  }
  return s;
}

ModelParams init_params(const TrainConfig& config, const FactorSpec& spec, Rng& rng) {
  config.validate();
  ModelParams p = ModelParams::zeros(config.dims(spec), config.sigma_x2, config.sigma_l_floor,
                                     config.sigma_o_floor);
  for (auto& nt : p.named_tensors()) {
    if (nt.name.starts_with("latent_prior.") || nt.name.starts_with("observed_prior.") ||
        nt.name == "class_embedding" || is_bias(nt.name)) {
      continue;
    }
    xavier(*nt.tensor, rng);
  }
  auto init_prior = [&rng](MixturePrior& prior, double sigma, double scale) {
    prior.means.value() = scale * rng.normal_matrix(prior.components(), prior.dim());
    prior.log_vars.value().setConstant(2.0 * std::log(sigma));
  };
  init_prior(p.latent_prior, config.sigma_l_init, config.prior_mean_scale);
  if (config.observed) {
    init_prior(p.observed_prior, config.sigma_o_init, 1.0);
  } else {
    p.class_embedding.value() = 0.1 * rng.normal_matrix(config.S, config.class_embed_dim);
  }
  return p;
}

double lr_at(long step, const TrainConfig& config) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (step < config.decay_start_steps) return config.lr0;
  const double halvings = static_cast<double>(step - config.decay_start_steps) /
                          static_cast<double>(config.decay_halflife_steps);
  return config.lr0 * std::exp2(-halvings);
}

void adam_step(std::span<const ad::NamedTensor> params, std::span<const Matrix> grads,
               OptimizerState& state, double lr, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].tensor->rows() || g.cols() != params[i].tensor->cols() ||
        state.m[i].rows() != g.rows() || state.m[i].cols() != g.cols()) {
      throw ad::ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!g.allFinite()) throw NumericError("non-finite gradient for parameter " + params[i].name);
  }
  const double t = static_cast<double>(state.step + 1);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g.cwiseProduct(g);
    Matrix& w = params[i].tensor->value();
    w.array() -= lr * (state.m[i].array() / c1) /
                 ((state.v[i].array() / c2).sqrt() + config.adam_eps);
  }
  state.step += 1;
  state.lr = lr;
}

TrainState init_train_state(const Corpus& corpus, const TrainConfig& config) {
  config.validate();
  if (corpus.utterances.empty()) throw std::invalid_argument("train: empty corpus");
  if (config.S != corpus.spec.n_classes) {
    throw std::invalid_argument("train config: S = " + std::to_string(config.S) +
                                " but the corpus has " + std::to_string(corpus.spec.n_classes) +
                                " classes");
  }
  Rng rng(derive_seed(config.seed, kInitStream));
  TrainState state{config, init_params(config, corpus.spec, rng), {}};
  state.opt = OptimizerState::for_params(state.params.named_tensors());
  state.opt.lr = lr_at(0, config);
  return state;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, long step, int batch_size,
                                       std::size_t corpus_size) {
  // Position p of the infinite stream reads permutation p / M at slot p % M.
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  std::vector<std::size_t> perm;
  std::uint64_t perm_epoch = ~std::uint64_t{0};
  const std::uint64_t shuffle_seed = derive_seed(seed, kShuffleStream);
  for (int i = 0; i < batch_size; ++i) {
    const std::uint64_t pos =
        static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) + i;
    const std::uint64_t epoch = pos / corpus_size;
    if (epoch != perm_epoch) {
      perm.resize(corpus_size);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng(derive_seed(shuffle_seed, epoch));
      for (std::size_t j = corpus_size; j > 1; --j) {
        std::swap(perm[j - 1], perm[rng.below(j)]);
      }
      perm_epoch = epoch;
    }
    out.push_back(perm[pos % corpus_size]);
  }
  return out;
}

void train_steps(TrainState& state, const Corpus& corpus, long until_step,
                 const StepCallback& on_step) {
  const TrainConfig& config = state.config;
  ModelParams& params = state.params;
  std::vector<ad::NamedTensor> named = params.named_tensors();
  std::vector<Matrix> grads(named.size());
  const std::uint64_t noise_seed = derive_seed(config.seed, kNoiseStream);
  const double inv_b = 1.0 / static_cast<double>(config.batch_size);

  while (state.opt.step < until_step) {
    const long step = state.opt.step;
    for (auto& nt : named) nt.tensor->zero_grad();
    Rng rng(derive_seed(noise_seed, static_cast<std::uint64_t>(step)));
    LogRecord rec;
    rec.step = step;
    rec.lr = lr_at(step, config);
    double kl_z_o = 0.0;
    for (std::size_t idx : batch_indices(config.seed, step, config.batch_size,
                                         corpus.utterances.size())) {
      const Utterance& utt = corpus.utterances[idx];
      const ElboNoise noise = draw_elbo_noise(params.dims, config.mc_n, rng);
      ad::Tape tape;
      BoundModel model(tape, params);
      const ElboGraph g = objective(model, utt, noise);
      const ElboTerms t = g.terms();
      if (!std::isfinite(t.total)) {
        throw NumericError("non-finite ELBO at step " + std::to_string(step) + " (utterance " +
                           std::to_string(idx) + ")");
      }
      ad::backward(tape, g.total * (-inv_b));
      rec.terms.recon += t.recon * inv_b;
      rec.terms.kl_z_l += t.kl_z_l * inv_b;
      rec.terms.kl_y_l += t.kl_y_l * inv_b;
      kl_z_o += t.kl_z_o.value_or(0.0) * inv_b;
      rec.terms.total += t.total * inv_b;
    }
    if (params.has_observed()) rec.terms.kl_z_o = kl_z_o;

    for (std::size_t i = 0; i < named.size(); ++i) grads[i] = named[i].tensor->grad();
    if (config.grad_clip > 0.0) {
      double sq = 0.0;
      for (const Matrix& g : grads) sq += g.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > config.grad_clip) {
        for (Matrix& g : grads) g *= config.grad_clip / norm;
      }
    }
    try {
      adam_step(named, grads, state.opt, rec.lr, config);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    params.latent_prior.project_to_floor();
    if (params.has_observed()) params.observed_prior.project_to_floor();
    if (on_step) on_step(rec);
  }
  for (auto& nt : named) nt.tensor->clear_grad();
}

TrainResult train(const Corpus& corpus, const TrainConfig& config) {
  TrainResult result{init_train_state(corpus, config), {}};
  result.log.reserve(static_cast<std::size_t>(config.total_steps));
  train_steps(result.state, corpus, config.total_steps,
              [&result](const LogRecord& r) { result.log.push_back(r); });
  return result;
}

std::vector<double> smoothed(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothed: window must be >= 1");
  std::vector<double> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace gmvae
