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

#ifndef GMVAE_UTTERANCE_HPP_
#define GMVAE_UTTERANCE_HPP_

#include <vector>

#include "gmvae/types.hpp"

namespace gmvae {

/// Generating factors of a synthetic utterance. Never seen by the model;
/// used only to score it.
struct TruthRecord {
  int condition = 0;  // 0 clean, 1 noisy
  double rate = 0.0;
  double pitch = 0.0;
  double noise_level = 0.0;
  int class_id = 0;
};

struct Utterance {
  std::vector<int> tokens;  // text
  Matrix frames;            // N x F acoustic features
  int class_id = 0;         // observed label
  TruthRecord truth;

  Index n_frames() const { return frames.rows(); }
};

}  // namespace gmvae

#endif  // GMVAE_UTTERANCE_HPP_
