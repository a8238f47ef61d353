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

// Small, fast training setups shared by several test binaries.

#ifndef GMVAE_TESTS_FIXTURES_HPP_
#define GMVAE_TESTS_FIXTURES_HPP_

#include "gmvae/synthdata.hpp"
#include "gmvae/training.hpp"

namespace gmvae::testing {

inline FactorSpec small_spec() {
  FactorSpec s;
  s.n_classes = 3;
  s.frame_dim = 14;
  s.min_tokens = 3;
  s.max_tokens = 4;
  return s;
}

inline TrainConfig small_config(bool observed = false) {
  TrainConfig c;
  c.K = 3;
  c.D = 3;
  c.D_o = 3;
  c.S = 3;
  c.text_embed = 3;
  c.text_hidden = 3;
  c.enc_hidden = 6;
  c.dec_hidden = 6;
  c.class_embed_dim = 2;
  c.batch_size = 4;
  c.total_steps = 12;
  c.decay_start_steps = 6;
  c.decay_halflife_steps = 3;
  c.sigma_x2 = 0.5;
  c.seed = 5;
  c.observed = observed;
  return c;
}

inline Corpus small_corpus(std::size_t n = 24, std::uint64_t seed = 3) {
  return generate_corpus(small_spec(), n, seed);
}

}  // namespace gmvae::testing

#endif  // GMVAE_TESTS_FIXTURES_HPP_
