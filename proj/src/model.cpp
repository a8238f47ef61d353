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

#include "gmvae/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gmvae {

namespace {

using ad::Var;

void add_encoder(std::vector<ad::NamedTensor>& out, const std::string& prefix, EncoderParams& e) {
  out.push_back({prefix + ".w_in", &e.w_in});
  out.push_back({prefix + ".b_in", &e.b_in});
  out.push_back({prefix + ".w_mean", &e.w_mean});
  out.push_back({prefix + ".b_mean", &e.b_mean});
  out.push_back({prefix + ".w_log_var", &e.w_log_var});
  out.push_back({prefix + ".b_log_var", &e.b_log_var});
}

EncoderParams zero_encoder(int in, int hidden, int out) {
  EncoderParams e;
  e.w_in = ad::Tensor::zeros(in, hidden, true);
  e.b_in = ad::Tensor::zeros(1, hidden, true);
  e.w_mean = ad::Tensor::zeros(hidden, out, true);
  e.b_mean = ad::Tensor::zeros(1, out, true);
  e.w_log_var = ad::Tensor::zeros(hidden, out, true);
  e.b_log_var = ad::Tensor::zeros(1, out, true);
  return e;
}

void check_frames(const ModelDims& dims, const Matrix& frames, const char* what) {
  if (frames.rows() < 1) throw std::invalid_argument(std::string(what) + ": no frames");
  if (frames.cols() != dims.frame_dim) {
    throw DimensionError(std::string(what) + ": frame width " + std::to_string(frames.cols()) +
                         ", model expects " + std::to_string(dims.frame_dim));
  }
}

// Row n of the previous-frame input: zeros for n = 0, teacher row n-1 after.
Matrix shift_down(const Matrix& frames) {
  Matrix prev = Matrix::Zero(frames.rows(), frames.cols());
  if (frames.rows() > 1) prev.bottomRows(frames.rows() - 1) = frames.topRows(frames.rows() - 1);
  return prev;
}

}  // namespace

std::vector<ad::NamedTensor> ModelParams::named_tensors() {
  std::vector<ad::NamedTensor> out;
  out.push_back({"text.embedding", &text.embedding});
  out.push_back({"text.fwd_w_in", &text.fwd_w_in});
  out.push_back({"text.fwd_w_rec", &text.fwd_w_rec});
  out.push_back({"text.fwd_b", &text.fwd_b});
  out.push_back({"text.bwd_w_in", &text.bwd_w_in});
  out.push_back({"text.bwd_w_rec", &text.bwd_w_rec});
  out.push_back({"text.bwd_b", &text.bwd_b});
  add_encoder(out, "latent_encoder", latent_encoder);
  if (dims.observed) {
    add_encoder(out, "observed_encoder", observed_encoder);
  } else {
    out.push_back({"class_embedding", &class_embedding});
  }
  out.push_back({"decoder.w_text", &decoder.w_text});
  out.push_back({"decoder.w_cond", &decoder.w_cond});
  out.push_back({"decoder.w_prev", &decoder.w_prev});
  out.push_back({"decoder.w_rec", &decoder.w_rec});
  out.push_back({"decoder.b", &decoder.b});
  out.push_back({"decoder.v_hidden", &decoder.v_hidden});
  out.push_back({"decoder.v_text", &decoder.v_text});
  out.push_back({"decoder.v_cond", &decoder.v_cond});
  out.push_back({"decoder.v_prev", &decoder.v_prev});
  out.push_back({"decoder.c", &decoder.c});
  out.push_back({"latent_prior.means", &latent_prior.means});
  out.push_back({"latent_prior.log_vars", &latent_prior.log_vars});
  if (dims.observed) {
    out.push_back({"observed_prior.means", &observed_prior.means});
    out.push_back({"observed_prior.log_vars", &observed_prior.log_vars});
  }
  return out;
}

std::vector<std::pair<std::string, const ad::Tensor*>> ModelParams::named_tensors() const {
  std::vector<std::pair<std::string, const ad::Tensor*>> out;
  for (const auto& nt : const_cast<ModelParams*>(this)->named_tensors()) {
    out.emplace_back(nt.name, nt.tensor);
  }
  return out;
}

ModelParams ModelParams::zeros(const ModelDims& d, double sigma_x2, double latent_floor,
                               double observed_floor) {
  if (d.vocab < 1 || d.frame_dim < 1 || d.text_embed < 1 || d.text_hidden < 1 ||
      d.enc_hidden < 1 || d.dec_hidden < 1 || d.latent_components < 1 || d.latent_dim < 1 ||
      d.n_classes < 1 || d.observed_dim < 1 || d.class_embed_dim < 1) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (!(sigma_x2 > 0.0)) throw std::invalid_argument("sigma_x2 must be positive");
  ModelParams p;
  p.dims = d;
  p.sigma_x2 = sigma_x2;
  const int e0 = d.text_embed, ht = d.text_hidden;
  p.text.embedding = ad::Tensor::zeros(d.vocab, e0, true);
  p.text.fwd_w_in = ad::Tensor::zeros(e0, ht, true);
  p.text.fwd_w_rec = ad::Tensor::zeros(ht, ht, true);
  p.text.fwd_b = ad::Tensor::zeros(1, ht, true);
  p.text.bwd_w_in = ad::Tensor::zeros(e0, ht, true);
  p.text.bwd_w_rec = ad::Tensor::zeros(ht, ht, true);
  p.text.bwd_b = ad::Tensor::zeros(1, ht, true);
  p.latent_encoder = zero_encoder(d.frame_dim, d.enc_hidden, d.latent_dim);
  if (d.observed) {
    p.observed_encoder = zero_encoder(d.frame_dim, d.enc_hidden, d.observed_dim);
    p.observed_prior = MixturePrior(Matrix::Zero(d.n_classes, d.observed_dim),
                                    Matrix::Zero(d.n_classes, d.observed_dim), observed_floor);
  } else {
    p.class_embedding = ad::Tensor::zeros(d.n_classes, d.class_embed_dim, true);
  }
  const int h = d.dec_hidden, f = d.frame_dim;
  p.decoder.w_text = ad::Tensor::zeros(d.text_dim(), h, true);
  p.decoder.w_cond = ad::Tensor::zeros(d.cond_dim(), h, true);
  p.decoder.w_prev = ad::Tensor::zeros(f, h, true);
  p.decoder.w_rec = ad::Tensor::zeros(h, h, true);
  p.decoder.b = ad::Tensor::zeros(1, h, true);
  p.decoder.v_hidden = ad::Tensor::zeros(h, f, true);
  p.decoder.v_text = ad::Tensor::zeros(d.text_dim(), f, true);
  p.decoder.v_cond = ad::Tensor::zeros(d.cond_dim(), f, true);
  p.decoder.v_prev = ad::Tensor::zeros(f, f, true);
  p.decoder.c = ad::Tensor::zeros(1, f, true);
  p.latent_prior = MixturePrior(Matrix::Zero(d.latent_components, d.latent_dim),
                                Matrix::Zero(d.latent_components, d.latent_dim), latent_floor);
  return p;
}

ElboNoise draw_elbo_noise(const ModelDims& dims, int mc_n, Rng& rng) {
  if (mc_n < 1) throw std::invalid_argument("draw_elbo_noise: mc_n must be >= 1");
  ElboNoise noise;
  noise.latent = rng.normal_matrix(mc_n, dims.latent_dim);
  if (dims.observed) noise.observed = rng.normal_matrix(mc_n, dims.observed_dim);
  return noise;
}

ElboTerms ElboGraph::terms() const {
  ElboTerms t;
  t.recon = recon.item();
  t.kl_z_l = kl_z_l.item();
  t.kl_y_l = kl_y_l.item();
  if (kl_z_o.valid()) t.kl_z_o = kl_z_o.item();
  t.total = total.item();
  return t;
}

// ---------------------------------------------------------------------------

BoundModel::BoundModel(ad::Tape& tape, ModelParams& params) : tape_(tape), params_(params) {
  latent_enc_ = bind_encoder(params.latent_encoder);
  TextEncoderParams& t = params.text;
  embedding_ = tape.leaf(t.embedding);
  fwd_w_in_ = tape.leaf(t.fwd_w_in);
  fwd_w_rec_ = tape.leaf(t.fwd_w_rec);
  fwd_b_ = tape.leaf(t.fwd_b);
  bwd_w_in_ = tape.leaf(t.bwd_w_in);
  bwd_w_rec_ = tape.leaf(t.bwd_w_rec);
  bwd_b_ = tape.leaf(t.bwd_b);
  if (params.dims.observed) {
    observed_enc_ = bind_encoder(params.observed_encoder);
    observed_prior_ = bind(tape, params.observed_prior);
  } else {
    class_embedding_ = tape.leaf(params.class_embedding);
  }
  DecoderParams& d = params.decoder;
  w_text_ = tape.leaf(d.w_text);
  w_cond_ = tape.leaf(d.w_cond);
  w_prev_ = tape.leaf(d.w_prev);
  w_rec_ = tape.leaf(d.w_rec);
  b_ = tape.leaf(d.b);
  v_hidden_ = tape.leaf(d.v_hidden);
  v_text_ = tape.leaf(d.v_text);
  v_cond_ = tape.leaf(d.v_cond);
  v_prev_ = tape.leaf(d.v_prev);
  c_ = tape.leaf(d.c);
  latent_prior_ = bind(tape, params.latent_prior);
}

BoundModel::EncoderVars BoundModel::bind_encoder(EncoderParams& p) {
  return {tape_.leaf(p.w_in),   tape_.leaf(p.b_in),      tape_.leaf(p.w_mean),
          tape_.leaf(p.b_mean), tape_.leaf(p.w_log_var), tape_.leaf(p.b_log_var)};
}

GaussianVar BoundModel::run_encoder(const EncoderVars& e, const Matrix& frames) {
  Var x = tape_.constant(frames);
  Var h = ad::tanh(ad::matmul(x, e.w_in) + e.b_in);
  Var pooled = ad::mean_rows(h);
  return {ad::matmul(pooled, e.w_mean) + e.b_mean, ad::matmul(pooled, e.w_log_var) + e.b_log_var};
}

GaussianVar BoundModel::encode_latent(const Matrix& frames) {
  check_frames(params_.dims, frames, "encode_latent");
  return run_encoder(latent_enc_, frames);
}

GaussianVar BoundModel::encode_observed(const Matrix& frames) {
  if (!params_.dims.observed) throw std::logic_error("encode_observed: model has no observed encoder");
  check_frames(params_.dims, frames, "encode_observed");
  return run_encoder(observed_enc_, frames);
}

Var BoundModel::encode_text(const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("encode_text: empty token sequence");
  std::vector<Index> ids(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= params_.dims.vocab) {
      throw std::out_of_range("encode_text: token " + std::to_string(tokens[i]) +
                              " outside vocabulary of " + std::to_string(params_.dims.vocab));
    }
    ids[i] = tokens[i];
  }
  const Index n = static_cast<Index>(ids.size());
  Var emb = ad::gather_rows(embedding_, ids);
  Var fwd_in = ad::matmul(emb, fwd_w_in_) + fwd_b_;
  Var bwd_in = ad::matmul(emb, bwd_w_in_) + bwd_b_;
  std::vector<Var> fwd(ids.size()), bwd(ids.size());
  for (Index t = 0; t < n; ++t) {
    Var pre = ad::slice_rows(fwd_in, t, 1);
    if (t > 0) pre = pre + ad::matmul(fwd[t - 1], fwd_w_rec_);
    fwd[t] = ad::tanh(pre);
  }
  for (Index t = n - 1; t >= 0; --t) {
    Var pre = ad::slice_rows(bwd_in, t, 1);
    if (t < n - 1) pre = pre + ad::matmul(bwd[t + 1], bwd_w_rec_);
    bwd[t] = ad::tanh(pre);
  }
  return ad::concat_cols({ad::concat_rows(fwd), ad::concat_rows(bwd)});
}

Var BoundModel::class_embedding(int class_id) {
  if (params_.dims.observed) throw std::logic_error("class_embedding: observed-attribute model");
  if (class_id < 0 || class_id >= params_.dims.n_classes) {
    throw std::out_of_range("class id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(params_.dims.n_classes) + ")");
  }
  return ad::slice_rows(class_embedding_, class_id, 1);
}

Var BoundModel::decode(Var text_enc, Var cond, Index n_frames, const Matrix* teacher) {
  const ModelDims& dims = params_.dims;
  if (n_frames < 1) throw std::invalid_argument("decode: n_frames must be >= 1");
  if (text_enc.cols() != dims.text_dim()) throw DimensionError("decode: text encoding width");
  if (cond.rows() != 1 || cond.cols() != dims.cond_dim()) {
    throw DimensionError("decode: conditioning vector must be 1 x " +
                         std::to_string(dims.cond_dim()));
  }
  const Index n_text = text_enc.rows();
  std::vector<Index> align(static_cast<std::size_t>(n_frames));
  for (Index n = 0; n < n_frames; ++n) align[n] = aligned_index(n, n_text, n_frames);
  Var a = ad::gather_rows(text_enc, align);
  Var cond_h = ad::matmul(cond, w_cond_) + b_;
  Var cond_y = ad::matmul(cond, v_cond_) + c_;

  if (teacher != nullptr) {
    if (teacher->rows() != n_frames) throw DimensionError("decode: teacher length mismatch");
    check_frames(dims, *teacher, "decode");
    Var prev = tape_.constant(shift_down(*teacher));
    Var pre = ad::matmul(a, w_text_) + ad::matmul(prev, w_prev_) + cond_h;
    std::vector<Var> hs(static_cast<std::size_t>(n_frames));
    for (Index n = 0; n < n_frames; ++n) {
      Var p = ad::slice_rows(pre, n, 1);
      if (n > 0) p = p + ad::matmul(hs[n - 1], w_rec_);
      hs[n] = ad::tanh(p);
    }
    Var h = ad::concat_rows(hs);
    return ad::matmul(h, v_hidden_) + ad::matmul(a, v_text_) + ad::matmul(prev, v_prev_) + cond_y;
  }

  Var text_h = ad::matmul(a, w_text_);
  Var text_y = ad::matmul(a, v_text_);
  std::vector<Var> ys(static_cast<std::size_t>(n_frames));
  Var h;
  for (Index n = 0; n < n_frames; ++n) {
    Var p = ad::slice_rows(text_h, n, 1) + cond_h;
    Var y = ad::slice_rows(text_y, n, 1) + cond_y;
    if (n > 0) {
      p = p + ad::matmul(ys[n - 1], w_prev_) + ad::matmul(h, w_rec_);
      y = y + ad::matmul(ys[n - 1], v_prev_);
    }
    h = ad::tanh(p);
    ys[n] = ad::matmul(h, v_hidden_) + y;
  }
  return ad::concat_rows(ys);
}

// ---------------------------------------------------------------------------

double recon_log_likelihood(const Matrix& pred, const Matrix& target, double sigma_x2) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("recon_log_likelihood: shape mismatch");
  }
  const double count = static_cast<double>(target.size());
  return -0.5 * count * (kLog2Pi + std::log(sigma_x2)) -
         (pred - target).squaredNorm() / (2.0 * sigma_x2);
}

Var recon_log_likelihood(Var pred, const Matrix& target, double sigma_x2) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw DimensionError("recon_log_likelihood: shape mismatch");
  }
  const double count = static_cast<double>(target.size());
  Var diff = pred - pred.tape()->constant(target);
  return ad::sum(ad::square(diff)) * (-0.5 / sigma_x2) - 0.5 * count * (kLog2Pi + std::log(sigma_x2));
}

namespace {

struct LatentTerms {
  Var kl_z_l, kl_y_l;
  std::vector<Var> z;
};

LatentTerms latent_terms(BoundModel& model, const Utterance& utt, const Matrix& noise) {
  ad::Tape& tape = model.tape();
  GaussianVar q = model.encode_latent(utt.frames);
  const MixtureVar prior = model.latent_prior();
  Var log_q = log_mc_categorical_posterior(q, prior, noise);
  LatentTerms t;
  t.kl_z_l = ad::matmul(ad::exp(log_q), kl_to_components(q, prior));
  t.kl_y_l = kl_categorical_uniform_log(log_q);
  for (Index s = 0; s < noise.rows(); ++s) {
    t.z.push_back(reparameterize(q, tape.constant(noise.row(s))));
  }
  return t;
}

Var mean_recon(BoundModel& model, const Utterance& utt, Var text, const std::vector<Var>& conds) {
  std::vector<Var> terms;
  for (const Var& cond : conds) {
    Var pred = model.decode(text, cond, utt.n_frames(), &utt.frames);
    terms.push_back(recon_log_likelihood(pred, utt.frames, model.params().sigma_x2));
  }
  Var total = terms.size() == 1 ? terms[0] : ad::sum(ad::concat_rows(terms));
  return total * (1.0 / static_cast<double>(terms.size()));
}

void check_noise(const ModelDims& dims, const ElboNoise& noise) {
  if (noise.latent.rows() < 1) throw std::invalid_argument("elbo: no Monte Carlo samples");
  if (noise.latent.cols() != dims.latent_dim) throw DimensionError("elbo: latent noise width");
}

}  // namespace

ElboGraph elbo(BoundModel& model, const Utterance& utt, const ElboNoise& noise) {
  const ModelDims& dims = model.params().dims;
  if (dims.observed) throw std::logic_error("elbo: model has an observed prior, use elbo_observed");
  check_noise(dims, noise);
  LatentTerms lt = latent_terms(model, utt, noise.latent);
  Var text = model.encode_text(utt.tokens);
  Var label = model.class_embedding(utt.class_id);
  std::vector<Var> conds;
  for (const Var& z : lt.z) conds.push_back(ad::concat_cols({z, label}));
  ElboGraph g;
  g.recon = mean_recon(model, utt, text, conds);
  g.kl_z_l = lt.kl_z_l;
  g.kl_y_l = lt.kl_y_l;
  g.total = g.recon - g.kl_z_l - g.kl_y_l;
  return g;
}

ElboGraph elbo_observed(BoundModel& model, const Utterance& utt, const ElboNoise& noise) {
  const ModelDims& dims = model.params().dims;
  if (!dims.observed) throw std::logic_error("elbo_observed: model has no observed prior");
  if (utt.class_id < 0 || utt.class_id >= dims.n_classes) {
    throw std::out_of_range("elbo_observed: class id " + std::to_string(utt.class_id) +
                            " outside [0, " + std::to_string(dims.n_classes) + ")");
  }
  check_noise(dims, noise);
  if (noise.observed.rows() != noise.latent.rows() || noise.observed.cols() != dims.observed_dim) {
    throw DimensionError("elbo_observed: observed noise must be " +
                         std::to_string(noise.latent.rows()) + " x " +
                         std::to_string(dims.observed_dim));
  }
  ad::Tape& tape = model.tape();
  LatentTerms lt = latent_terms(model, utt, noise.latent);
  GaussianVar q_o = model.encode_observed(utt.frames);
  const MixtureVar prior_o = model.observed_prior();
  GaussianVar p_o{ad::slice_rows(prior_o.means, utt.class_id, 1),
                  ad::slice_rows(prior_o.log_vars, utt.class_id, 1)};
  Var text = model.encode_text(utt.tokens);
  std::vector<Var> conds;
  for (std::size_t s = 0; s < lt.z.size(); ++s) {
    Var z_o = reparameterize(q_o, tape.constant(noise.observed.row(static_cast<Index>(s))));
    conds.push_back(ad::concat_cols({lt.z[s], z_o}));
  }
  ElboGraph g;
  g.recon = mean_recon(model, utt, text, conds);
  g.kl_z_l = lt.kl_z_l;
  g.kl_y_l = lt.kl_y_l;
  g.kl_z_o = kl_diag_gaussians(q_o, p_o);
  g.total = g.recon - g.kl_z_l - g.kl_y_l - g.kl_z_o;
  return g;
}

ElboGraph objective(BoundModel& model, const Utterance& utt, const ElboNoise& noise) {
  return model.params().has_observed() ? elbo_observed(model, utt, noise) : elbo(model, utt, noise);
}

// ---------------------------------------------------------------------------

DiagGaussian encode_latent(ModelParams& params, const Matrix& frames) {
  ad::Tape tape;
  BoundModel m(tape, params);
  GaussianVar q = m.encode_latent(frames);
  return {q.mean.value(), q.log_var.value()};
}

DiagGaussian encode_observed(ModelParams& params, const Matrix& frames) {
  ad::Tape tape;
  BoundModel m(tape, params);
  GaussianVar q = m.encode_observed(frames);
  return {q.mean.value(), q.log_var.value()};
}

Matrix encode_text(ModelParams& params, const std::vector<int>& tokens) {
  ad::Tape tape;
  BoundModel m(tape, params);
  return m.encode_text(tokens).value();
}

Matrix decode(ModelParams& params, const Matrix& text_enc, const RowVector& cond, Index n_frames,
              const Matrix* teacher) {
  ad::Tape tape;
  BoundModel m(tape, params);
  return m.decode(tape.constant(text_enc), tape.constant(Matrix(cond)), n_frames, teacher).value();
}

ElboTerms elbo(const Utterance& utt, ModelParams& params, const ElboNoise& noise) {
  ad::Tape tape;
  BoundModel m(tape, params);
  return elbo(m, utt, noise).terms();
}

ElboTerms elbo_observed(const Utterance& utt, ModelParams& params, const ElboNoise& noise) {
  ad::Tape tape;
  BoundModel m(tape, params);
  return elbo_observed(m, utt, noise).terms();
}

RowVector condition_vector(ModelParams& params, const RowVector& z_latent,
                           const LabelCondition& label) {
  const ModelDims& dims = params.dims;
  if (z_latent.size() != dims.latent_dim) {
    throw DimensionError("z_l has dimension " + std::to_string(z_latent.size()) + ", expected " +
                         std::to_string(dims.latent_dim));
  }
  RowVector part;
  if (const int* cls = std::get_if<int>(&label)) {
    if (*cls < 0 || *cls >= dims.n_classes) {
      throw std::out_of_range("class id " + std::to_string(*cls) + " outside [0, " +
                              std::to_string(dims.n_classes) + ")");
    }
    part = dims.observed ? RowVector(params.observed_prior.means.value().row(*cls))
                         : RowVector(params.class_embedding.value().row(*cls));
  } else {
    part = std::get<RowVector>(label);
    if (part.size() != dims.label_dim()) {
      throw DimensionError("label vector has dimension " + std::to_string(part.size()) +
                           ", expected " + std::to_string(dims.label_dim()));
    }
  }
  RowVector cond(dims.cond_dim());
  cond << z_latent, part;
  return cond;
}

Matrix generate(ModelParams& params, const GenerateRequest& req, Rng& rng) {
  const ModelDims& dims = params.dims;
  RowVector z;
  if (req.z_latent) {
    z = *req.z_latent;
  } else {
    Index k;
    if (req.component) {
      if (*req.component < 0 || *req.component >= dims.latent_components) {
        throw std::out_of_range("component " + std::to_string(*req.component) + " outside [0, " +
                                std::to_string(dims.latent_components) + ")");
      }
      k = *req.component;
    } else {
      k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(dims.latent_components)));
    }
    const DiagGaussian comp = params.latent_prior.component(k);
    z = reparameterize(comp, rng.normal_matrix(1, dims.latent_dim));
  }
  const RowVector cond = condition_vector(params, z, req.label);
  ad::Tape tape;
  BoundModel m(tape, params);
  Var text = m.encode_text(req.tokens);
  return m.decode(text, tape.constant(Matrix(cond)), req.n_frames).value();
}

}  // namespace gmvae
