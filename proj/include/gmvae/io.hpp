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

// Persistence: corpus and checkpoint containers, run configuration files and
// the training log.
//
// Container layout (corpus and checkpoint alike):
//   8-byte magic | u32 LE format version | u64 LE header length |
//   header JSON (sorted keys, compact) | little-endian float64 blob
// Header entries locate arrays in the blob by element offset.

#ifndef GMVAE_IO_HPP_
#define GMVAE_IO_HPP_

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gmvae/synthdata.hpp"
#include "gmvae/training.hpp"

namespace gmvae {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCorpusVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view bytes);
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

struct Checkpoint {
  FactorSpec spec;
  TrainState state;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on a bad magic, a version mismatch or inconsistent
/// tensor shapes.
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct RunConfig {
  TrainConfig train;
  FactorSpec data;
  std::size_t corpus_size = 2000;
  std::uint64_t corpus_seed = 1;
  std::string corpus_path;
  std::string checkpoint_path;
  std::string log_path;
};

/// Parses `key = value` lines grouped in [train], [data] and [paths]
/// sections. Unknown sections or keys throw std::invalid_argument. Keys left
/// out keep their defaults and are listed in `defaulted` when given.
RunConfig parse_run_config(std::istream& in, std::vector<std::string>* defaulted = nullptr);
RunConfig load_run_config(const std::string& path, std::vector<std::string>* defaulted = nullptr);
/// Every key with its current value; parse_run_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& config);

std::string log_line(const LogRecord& record);
LogRecord parse_log_line(std::string_view line);
std::vector<LogRecord> read_log(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace gmvae

#endif  // GMVAE_IO_HPP_
