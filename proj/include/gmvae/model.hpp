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

// Conditional generative model over (text, frames, class).
//
// Two variants share the networks:
//   * class-embedding variant: the decoder is conditioned on [z_l, e(class)],
//     trained with elbo();
//   * observed-attribute variant: a second encoder and mixture prior over z_o
//     replace the class embedding, trained with elbo_observed().
// The decoder input at step n is [text(n) | z_l | z_o-or-class | prev frame],
// where text(n) is the text encoding at index floor(n T / N).

#ifndef GMVAE_MODEL_HPP_
#define GMVAE_MODEL_HPP_

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gmvae/autodiff.hpp"
#include "gmvae/distributions.hpp"
#include "gmvae/rng.hpp"
#include "gmvae/types.hpp"
#include "gmvae/utterance.hpp"

namespace gmvae {

struct ModelDims {
  int vocab = 10;
  int frame_dim = 16;
  int text_embed = 8;
  int text_hidden = 8;  // per direction
  int enc_hidden = 32;
  int dec_hidden = 48;
  int latent_components = 10;  // K
  int latent_dim = 16;         // D
  int n_classes = 8;           // S
  int observed_dim = 16;       // D_o
  int class_embed_dim = 4;
  bool observed = false;

  int text_dim() const { return 2 * text_hidden; }
  int label_dim() const { return observed ? observed_dim : class_embed_dim; }
  int cond_dim() const { return latent_dim + label_dim(); }
  bool operator==(const ModelDims&) const = default;
};

struct EncoderParams {
  ad::Tensor w_in, b_in;          // F x H, 1 x H
  ad::Tensor w_mean, b_mean;      // H x D, 1 x D
  ad::Tensor w_log_var, b_log_var;
};

struct TextEncoderParams {
  ad::Tensor embedding;                  // vocab x E0
  ad::Tensor fwd_w_in, fwd_w_rec, fwd_b;  // E0 x Ht, Ht x Ht, 1 x Ht
  ad::Tensor bwd_w_in, bwd_w_rec, bwd_b;
};

/// The decoder's input weights are stored per input block; concatenating the
/// blocks row-wise gives the weight on [text | cond | prev frame].
struct DecoderParams {
  ad::Tensor w_text, w_cond, w_prev, w_rec, b;      // recurrent layer
  ad::Tensor v_hidden, v_text, v_cond, v_prev, c;  // output projection on [h | input]
};

struct ModelParams {
  ModelDims dims;
  double sigma_x2 = 1.0;
  TextEncoderParams text;
  EncoderParams latent_encoder;
  EncoderParams observed_encoder;  // empty tensors unless dims.observed
  ad::Tensor class_embedding;      // S x Dc; empty when dims.observed
  DecoderParams decoder;
  MixturePrior latent_prior;
  MixturePrior observed_prior;  // empty unless dims.observed

  bool has_observed() const { return dims.observed; }
  /// Every trainable tensor in a fixed order with a stable name.
  std::vector<ad::NamedTensor> named_tensors();
  std::vector<std::pair<std::string, const ad::Tensor*>> named_tensors() const;
  /// Allocates zero tensors of the right shapes for `dims`.
  static ModelParams zeros(const ModelDims& dims, double sigma_x2, double latent_floor,
                           double observed_floor);
};

struct ElboTerms {
  double recon = 0.0;
  double kl_z_l = 0.0;
  double kl_y_l = 0.0;
  std::optional<double> kl_z_o;
  double total = 0.0;
};

/// Standard-normal draws consumed by one ELBO evaluation: one row per Monte
/// Carlo sample. The same latent rows feed both q~(y_l|X) and the
/// reconstruction term.
struct ElboNoise {
  Matrix latent;    // mc_n x D
  Matrix observed;  // mc_n x D_o, empty for the class-embedding variant

  int samples() const { return static_cast<int>(latent.rows()); }
};

ElboNoise draw_elbo_noise(const ModelDims& dims, int mc_n, Rng& rng);

/// Tape handles of the ELBO terms; `total` is the quantity to maximise.
struct ElboGraph {
  ad::Var recon;
  ad::Var kl_z_l;
  ad::Var kl_y_l;
  ad::Var kl_z_o;  // invalid for the class-embedding variant
  ad::Var total;

  ElboTerms terms() const;
};

/// The model's parameters registered on one tape.
class BoundModel {
 public:
  BoundModel(ad::Tape& tape, ModelParams& params);

  ad::Tape& tape() { return tape_; }
  const ModelParams& params() const { return params_; }

  GaussianVar encode_latent(const Matrix& frames);
  GaussianVar encode_observed(const Matrix& frames);
  /// T x 2Ht text encodings. Throws std::out_of_range for unknown tokens.
  ad::Var encode_text(const std::vector<int>& tokens);
  /// N x F predicted frame means. With `teacher` the previous-frame input is
  /// the teacher's previous row; otherwise the model's own previous output.
  ad::Var decode(ad::Var text_enc, ad::Var cond, Index n_frames, const Matrix* teacher = nullptr);
  ad::Var class_embedding(int class_id);
  MixtureVar latent_prior() const { return latent_prior_; }
  MixtureVar observed_prior() const { return observed_prior_; }

 private:
  struct EncoderVars {
    ad::Var w_in, b_in, w_mean, b_mean, w_log_var, b_log_var;
  };
  EncoderVars bind_encoder(EncoderParams& p);
  GaussianVar run_encoder(const EncoderVars& e, const Matrix& frames);

  ad::Tape& tape_;
  ModelParams& params_;
  EncoderVars latent_enc_;
  EncoderVars observed_enc_;
  ad::Var embedding_, fwd_w_in_, fwd_w_rec_, fwd_b_, bwd_w_in_, bwd_w_rec_, bwd_b_;
  ad::Var class_embedding_;
  ad::Var w_text_, w_cond_, w_prev_, w_rec_, b_;
  ad::Var v_hidden_, v_text_, v_cond_, v_prev_, c_;
  MixtureVar latent_prior_;
  MixtureVar observed_prior_;
};

/// Text index read by decoder step n.
inline Index aligned_index(Index n, Index n_text, Index n_frames) { return (n * n_text) / n_frames; }

double recon_log_likelihood(const Matrix& pred, const Matrix& target, double sigma_x2);
ad::Var recon_log_likelihood(ad::Var pred, const Matrix& target, double sigma_x2);

/// Class-embedding variant estimator (teacher-forced reconstruction).
ElboGraph elbo(BoundModel& model, const Utterance& utt, const ElboNoise& noise);
/// Observed-attribute variant estimator.
ElboGraph elbo_observed(BoundModel& model, const Utterance& utt, const ElboNoise& noise);
/// Dispatches on params.has_observed().
ElboGraph objective(BoundModel& model, const Utterance& utt, const ElboNoise& noise);

// Evaluation-only conveniences (no gradients retained).
DiagGaussian encode_latent(ModelParams& params, const Matrix& frames);
DiagGaussian encode_observed(ModelParams& params, const Matrix& frames);
Matrix encode_text(ModelParams& params, const std::vector<int>& tokens);
Matrix decode(ModelParams& params, const Matrix& text_enc, const RowVector& cond, Index n_frames,
              const Matrix* teacher = nullptr);
ElboTerms elbo(const Utterance& utt, ModelParams& params, const ElboNoise& noise);
ElboTerms elbo_observed(const Utterance& utt, ModelParams& params, const ElboNoise& noise);

/// Label conditioning for generation: a class index, or an explicit vector
/// (z_o for the observed variant, an embedding for the class variant).
using LabelCondition = std::variant<int, RowVector>;

struct GenerateRequest {
  std::vector<int> tokens;
  std::optional<int> component;     // y_l; drawn uniformly when absent
  std::optional<RowVector> z_latent;  // z_l; drawn from p(z_l | y_l) when absent
  LabelCondition label = 0;
  Index n_frames = 1;
};

/// Conditioning vector [z_l | label part] for a given z_l and label.
RowVector condition_vector(ModelParams& params, const RowVector& z_latent, const LabelCondition& label);

/// Frame means from ancestral sampling with free-running decoding. A class
/// index in the observed variant selects the mean of p(z_o | y_o).
/// Throws std::out_of_range on an invalid component or class index.
Matrix generate(ModelParams& params, const GenerateRequest& request, Rng& rng);

}  // namespace gmvae

#endif  // GMVAE_MODEL_HPP_
