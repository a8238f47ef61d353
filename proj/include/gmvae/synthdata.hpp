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

// Synthetic corpus with known, independently drawn generating factors.
//
// Each frame row is a sum of band-limited parts over the F feature bins:
//   class template   constant + one-cycle cosine/sine (coefficients per class)
//   pitch pattern    sin(2 pi pitch f / F), pitch in cycles across the row
//   token pattern    gain(token) * cos(2 pi f_tok f / F), f_tok = F/2 - 2
//   disturbance      noise_level * (kappa * [n even] * (-1)^f + eta * N(0, 1))
// Token segments follow the length-proportional alignment floor(n T / N) with
// N = round(T / rate), so the token rate is T / N.

#ifndef GMVAE_SYNTHDATA_HPP_
#define GMVAE_SYNTHDATA_HPP_

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "gmvae/rng.hpp"
#include "gmvae/types.hpp"
#include "gmvae/utterance.hpp"

namespace gmvae {

struct FactorSpec {
  int n_classes = 8;
  double noisy_fraction = 0.5;
  /// Class whose utterances are all noisy; -1 for none.
  int heldout_noisy_class = -1;
  double rate_min = 0.2;
  double rate_max = 0.35;
  double pitch_min = 2.0;
  double pitch_max = 3.5;
  double clean_noise_min = 0.0;
  double clean_noise_max = 0.01;
  double noisy_noise_min = 0.4;
  double noisy_noise_max = 0.7;
  int vocab = 10;
  int frame_dim = 16;
  int min_tokens = 5;
  int max_tokens = 8;

  /// Throws std::invalid_argument on empty ranges or unsupported sizes.
  void validate() const;
  double max_noise() const { return noisy_noise_max > clean_noise_max ? noisy_noise_max : clean_noise_max; }
  bool operator==(const FactorSpec&) const = default;
};

/// Amplitude of the alternating disturbance relative to noise_level; chosen so
/// that measure_noise_level of the disturbance alone returns noise_level.
inline constexpr double kDisturbanceKappa = 0.95387;
/// Std of the i.i.d. part relative to noise_level.
inline constexpr double kDisturbanceEta = 0.3;

struct Corpus {
  FactorSpec spec;
  std::uint64_t seed = 0;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
};

RowVector class_template(const FactorSpec& spec, int class_id);
RowVector pitch_pattern(const FactorSpec& spec, double pitch);
RowVector token_pattern(const FactorSpec& spec, int token);
/// (-1)^f over the feature bins.
RowVector noise_signature(const FactorSpec& spec);
double token_gain(const FactorSpec& spec, int token);
int token_frequency(const FactorSpec& spec);
/// Minimum index distance between consecutive tokens.
int token_gap(const FactorSpec& spec);

Index frames_for(Index n_tokens, double rate);

/// Deterministic frames for given factors. With noise_level = 0 the result is
/// an exact function of (tokens, class, rate, pitch); `rng` feeds only the
/// i.i.d. part of the disturbance.
Matrix render_frames(const FactorSpec& spec, const std::vector<int>& tokens, const TruthRecord& truth,
                     Rng& rng);

/// Utterance `index` of the corpus with the given seed. Utterances are drawn
/// from independent sub-streams, so this matches generate_corpus(...)[index].
Utterance generate_utterance(const FactorSpec& spec, std::uint64_t seed, std::size_t index);

/// Throws std::invalid_argument when size < 1 or the spec is invalid.
Corpus generate_corpus(const FactorSpec& spec, std::size_t size, std::uint64_t seed);

class NoStructureError : public std::runtime_error {
 public:
  NoStructureError() : std::runtime_error("no structure detected") {}
};

/// Robust frame-noise std: 1.4826 * median|x[n] - x[n-1]| / sqrt(2).
/// Requires N >= 2.
double measure_noise_level(const Matrix& frames);
/// Dominant row-pattern frequency (cycles per row) from a fine frequency scan
/// with the class, token and disturbance bands projected out. Requires N >= 4.
double measure_pitch(const Matrix& frames);
/// Token segments per frame from jumps in the token-band coefficient.
double measure_rate(const Matrix& frames);
/// Class whose template is nearest to the time-averaged class band.
int nearest_class(const FactorSpec& spec, const Matrix& frames);

}  // namespace gmvae

#endif  // GMVAE_SYNTHDATA_HPP_
