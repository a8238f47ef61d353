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

#include "gmvae/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gmvae {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMadToStd = 1.482602218505602;
constexpr double kBoundaryThreshold = 0.2;

RowVector cosine_row(int f_dim, double cycles, double phase = 0.0) {
  RowVector r(f_dim);
  for (int f = 0; f < f_dim; ++f) r(f) = std::cos(kTwoPi * cycles * f / f_dim + phase);
  return r;
}

RowVector sine_row(int f_dim, double cycles) {
  RowVector r(f_dim);
  for (int f = 0; f < f_dim; ++f) r(f) = std::sin(kTwoPi * cycles * f / f_dim);
  return r;
}

// Columns: const, cos1, sin1 (class band); cos/sin at the token frequency; the
// disturbance signature.
Matrix nuisance_basis(int f_dim) {
  const int tok = f_dim / 2 - 2;
  Matrix b(f_dim, 6);
  b.col(0).setOnes();
  b.col(1) = cosine_row(f_dim, 1.0).transpose();
  b.col(2) = sine_row(f_dim, 1.0).transpose();
  b.col(3) = cosine_row(f_dim, tok).transpose();
  b.col(4) = sine_row(f_dim, tok).transpose();
  for (int f = 0; f < f_dim; ++f) b(f, 5) = (f % 2 == 0) ? 1.0 : -1.0;
  return b;
}

Matrix with_sinusoid(const Matrix& nuisance, double cycles) {
  const int f_dim = static_cast<int>(nuisance.rows());
  Matrix b(f_dim, nuisance.cols() + 2);
  b.leftCols(nuisance.cols()) = nuisance;
  b.col(nuisance.cols()) = sine_row(f_dim, cycles).transpose();
  b.col(nuisance.cols() + 1) = cosine_row(f_dim, cycles).transpose();
  return b;
}

// Energy of the frames left after projecting every row onto span(basis).
double residual_energy(const Matrix& frames, const Matrix& basis) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(basis.rows(), basis.cols());
  const Eigen::MatrixXd proj = frames * q;
  return frames.squaredNorm() - proj.squaredNorm();
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

void require_range(double lo, double hi, const char* what) {
  if (!(lo <= hi)) throw std::invalid_argument(std::string("FactorSpec: empty range for ") + what);
}

}  // namespace

void FactorSpec::validate() const {
  if (n_classes < 1) throw std::invalid_argument("FactorSpec: n_classes must be >= 1");
  if (!(noisy_fraction >= 0.0 && noisy_fraction <= 1.0)) {
    throw std::invalid_argument("FactorSpec: noisy_fraction must lie in [0, 1]");
  }
  if (heldout_noisy_class >= n_classes) {
    throw std::invalid_argument("FactorSpec: heldout_noisy_class out of range");
  }
  require_range(rate_min, rate_max, "rate");
  require_range(pitch_min, pitch_max, "pitch");
  require_range(clean_noise_min, clean_noise_max, "clean noise");
  require_range(noisy_noise_min, noisy_noise_max, "noisy noise");
  require_range(min_tokens, max_tokens, "tokens");
  if (!(rate_min > 0.0) || rate_max > 0.5) {
    throw std::invalid_argument("FactorSpec: rate must lie in (0, 0.5]");
  }
  if (!(pitch_min > 0.0)) throw std::invalid_argument("FactorSpec: pitch must be positive");
  if (clean_noise_min < 0.0 || noisy_noise_min < 0.0) {
    throw std::invalid_argument("FactorSpec: noise levels must be nonnegative");
  }
  if (frame_dim < 12 || frame_dim % 2 != 0) {
    throw std::invalid_argument("FactorSpec: frame_dim must be even and >= 12");
  }
  if (pitch_max > token_frequency(*this) - 1.5) {
    throw std::invalid_argument("FactorSpec: pitch range overlaps the token band");
  }
  if (vocab < 4) throw std::invalid_argument("FactorSpec: vocab must be >= 4");
  if (min_tokens < 1) throw std::invalid_argument("FactorSpec: min_tokens must be >= 1");
}

int token_frequency(const FactorSpec& spec) { return spec.frame_dim / 2 - 2; }

int token_gap(const FactorSpec& spec) { return std::max(1, spec.vocab / 3); }

double token_gain(const FactorSpec& spec, int token) {
  return -1.0 + 2.0 * static_cast<double>(token) / static_cast<double>(spec.vocab - 1);
}

RowVector class_template(const FactorSpec& spec, int class_id) {
  const double theta = kTwoPi * class_id / spec.n_classes;
  const double offset = (class_id % 2 == 0) ? -0.5 : 0.5;
  const int f_dim = spec.frame_dim;
  RowVector r = std::cos(theta) * cosine_row(f_dim, 1.0) + std::sin(theta) * sine_row(f_dim, 1.0);
  return r.array() + offset;
}

RowVector pitch_pattern(const FactorSpec& spec, double pitch) {
  return sine_row(spec.frame_dim, pitch);
}

RowVector token_pattern(const FactorSpec& spec, int token) {
  return token_gain(spec, token) * cosine_row(spec.frame_dim, token_frequency(spec));
}

RowVector noise_signature(const FactorSpec& spec) {
  RowVector r(spec.frame_dim);
  for (int f = 0; f < spec.frame_dim; ++f) r(f) = (f % 2 == 0) ? 1.0 : -1.0;
  return r;
}

Index frames_for(Index n_tokens, double rate) {
  const Index n = static_cast<Index>(std::llround(static_cast<double>(n_tokens) / rate));
  return std::max<Index>(n, 2 * n_tokens);
}

Matrix render_frames(const FactorSpec& spec, const std::vector<int>& tokens,
                     const TruthRecord& truth, Rng& rng) {
  const Index t_len = static_cast<Index>(tokens.size());
  const Index n_frames = frames_for(t_len, truth.rate);
  const RowVector base = class_template(spec, truth.class_id) + pitch_pattern(spec, truth.pitch);
  const RowVector signature = noise_signature(spec);
  Matrix frames(n_frames, spec.frame_dim);
  for (Index n = 0; n < n_frames; ++n) {
    const Index seg = (n * t_len) / n_frames;
    frames.row(n) = base + token_pattern(spec, tokens[static_cast<std::size_t>(seg)]);
    if (truth.noise_level > 0.0) {
      if (n % 2 == 0) frames.row(n) += (kDisturbanceKappa * truth.noise_level) * signature;
      for (Index f = 0; f < frames.cols(); ++f) {
        frames(n, f) += kDisturbanceEta * truth.noise_level * rng.normal();
      }
    }
  }
  return frames;
}

Utterance generate_utterance(const FactorSpec& spec, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  Utterance u;
  TruthRecord& t = u.truth;
  t.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_classes)));
  const bool forced_noisy = t.class_id == spec.heldout_noisy_class;
  const double draw = rng.uniform();
  t.condition = (forced_noisy || draw < spec.noisy_fraction) ? 1 : 0;
  t.rate = rng.uniform(spec.rate_min, spec.rate_max);
  t.pitch = rng.uniform(spec.pitch_min, spec.pitch_max);
  t.noise_level = t.condition == 1 ? rng.uniform(spec.noisy_noise_min, spec.noisy_noise_max)
                                   : rng.uniform(spec.clean_noise_min, spec.clean_noise_max);

  const int n_tokens =
      spec.min_tokens + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
  const int gap = token_gap(spec);
  std::vector<int> allowed;
  u.tokens.reserve(static_cast<std::size_t>(n_tokens));
  u.tokens.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab))));
  for (int i = 1; i < n_tokens; ++i) {
    allowed.clear();
    for (int v = 0; v < spec.vocab; ++v) {
      if (std::abs(v - u.tokens.back()) >= gap) allowed.push_back(v);
    }
    u.tokens.push_back(allowed[rng.below(allowed.size())]);
  }
  u.class_id = t.class_id;
  u.frames = render_frames(spec, u.tokens, t, rng);
  return u;
}

Corpus generate_corpus(const FactorSpec& spec, std::size_t size, std::uint64_t seed) {
  spec.validate();
  if (size < 1) throw std::invalid_argument("generate_corpus: size must be >= 1");
  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  corpus.utterances.reserve(size);
  for (std::size_t i = 0; i < size; ++i) corpus.utterances.push_back(generate_utterance(spec, seed, i));
  return corpus;
}

double measure_noise_level(const Matrix& frames) {
  if (frames.rows() < 2) throw std::invalid_argument("measure_noise_level: need at least 2 frames");
  std::vector<double> diffs;
  diffs.reserve(static_cast<std::size_t>((frames.rows() - 1) * frames.cols()));
  for (Index n = 1; n < frames.rows(); ++n) {
    for (Index f = 0; f < frames.cols(); ++f) diffs.push_back(std::abs(frames(n, f) - frames(n - 1, f)));
  }
  return kMadToStd * median(std::move(diffs)) / std::numbers::sqrt2;
}

double measure_pitch(const Matrix& frames) {
  if (frames.rows() < 4) throw std::invalid_argument("measure_pitch: need at least 4 frames");
  const int f_dim = static_cast<int>(frames.cols());
  const Matrix nuisance = nuisance_basis(f_dim);
  const double base = residual_energy(frames, nuisance);
  const double total = frames.squaredNorm();
  if (base <= 1e-12 * (1.0 + total)) throw NoStructureError();

  const double lo = 1.0;
  const double hi = f_dim / 2.0 - 2.5;
  double best = lo;
  double best_energy = base;
  for (double p = lo; p <= hi + 1e-12; p += 0.02) {
    const double e = residual_energy(frames, with_sinusoid(nuisance, p));
    if (e < best_energy) {
      best_energy = e;
      best = p;
    }
  }
  const double coarse = best;
  for (double p = coarse - 0.02; p <= coarse + 0.02 + 1e-12; p += 0.001) {
    if (p < lo || p > hi) continue;
    const double e = residual_energy(frames, with_sinusoid(nuisance, p));
    if (e < best_energy) {
      best_energy = e;
      best = p;
    }
  }
  if (base - best_energy < 0.25 * base) throw NoStructureError();
  return best;
}

double measure_rate(const Matrix& frames) {
  if (frames.rows() < 4) throw std::invalid_argument("measure_rate: need at least 4 frames");
  const int f_dim = static_cast<int>(frames.cols());
  const RowVector carrier = cosine_row(f_dim, f_dim / 2 - 2);
  const Eigen::VectorXd gains = frames * carrier.transpose() * (2.0 / f_dim);
  const double spread = (frames.rowwise() - frames.row(0)).cwiseAbs().maxCoeff();
  if (spread <= 1e-12) throw NoStructureError();

  // A boundary event is a maximal run of consecutive above-threshold jumps.
  Index events = 0;
  bool in_event = false;
  for (Index n = 1; n < frames.rows(); ++n) {
    const bool jump = std::abs(gains(n) - gains(n - 1)) > kBoundaryThreshold;
    if (jump && !in_event) ++events;
    in_event = jump;
  }
  return static_cast<double>(events + 1) / static_cast<double>(frames.rows());
}

int nearest_class(const FactorSpec& spec, const Matrix& frames) {
  const int f_dim = spec.frame_dim;
  if (frames.cols() != f_dim) throw std::invalid_argument("nearest_class: frame dimension mismatch");
  const RowVector mean = frames.colwise().mean();
  double pitch = 0.5 * (spec.pitch_min + spec.pitch_max);
  try {
    pitch = measure_pitch(frames);
  } catch (const NoStructureError&) {
  } catch (const std::invalid_argument&) {
  }
  const Matrix basis = with_sinusoid(nuisance_basis(f_dim), pitch);
  const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(mean.transpose());
  const RowVector class_part = (basis.leftCols(3) * coef.head(3)).transpose();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < spec.n_classes; ++c) {
    const double d = (class_part - class_template(spec, c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace gmvae
