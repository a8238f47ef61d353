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

#ifndef GMVAE_TYPES_HPP_
#define GMVAE_TYPES_HPP_

#include <Eigen/Dense>

namespace gmvae {

using Index = Eigen::Index;

/// Dense row-major matrix. Rows are time steps / samples / components; a
/// vector is a single row.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace gmvae

#endif  // GMVAE_TYPES_HPP_
