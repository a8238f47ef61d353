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

#include "gmvae/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

namespace gmvae {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FactorSpec, n_classes, noisy_fraction, heldout_noisy_class,
                                   rate_min, rate_max, pitch_min, pitch_max, clean_noise_min,
                                   clean_noise_max, noisy_noise_min, noisy_noise_max, vocab,
                                   frame_dim, min_tokens, max_tokens)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, lr0, decay_start_steps, decay_halflife_steps,
                                   batch_size, total_steps, mc_n, sigma_l_init, sigma_l_floor,
                                   sigma_o_init, sigma_o_floor, K, D, D_o, S, seed, observed,
                                   sigma_x2, adam_beta1, adam_beta2, adam_eps, grad_clip,
                                   prior_mean_scale,
                                   text_embed, text_hidden, enc_hidden, dec_hidden,
                                   class_embed_dim)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TruthRecord, condition, rate, pitch, noise_level, class_id)

namespace {

using json = nlohmann::json;

constexpr char kCorpusMagic[8] = {'G', 'M', 'V', 'A', 'E', 'C', 'R', 'P'};
constexpr char kCheckpointMagic[8] = {'G', 'M', 'V', 'A', 'E', 'C', 'K', 'P'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  v = to_little(v);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t pos) {
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  return to_little(v);
}

// Accumulates float64 arrays and records their element offsets.
class Blob {
 public:
  std::uint64_t add(const double* data, Index count) {
    const std::uint64_t offset = values_.size();
    values_.insert(values_.end(), data, data + count);
    return offset;
  }
  std::uint64_t add(const Matrix& m) { return add(m.data(), m.size()); }
  void append_to(std::string& out) const {
    for (double v : values_) put(out, v);
  }

 private:
  std::vector<double> values_;
};

std::string container(const char (&magic)[8], std::uint32_t version, const json& header,
                      const Blob& blob) {
  const std::string text = header.dump();
  std::string out(magic, 8);
  put(out, version);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  blob.append_to(out);
  return out;
}

struct Opened {
  json header;
  std::string_view blob;
};

Opened open_container(std::string_view bytes, const char (&magic)[8], std::uint32_t version,
                      const char* what) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw FormatError(std::string(what) + ": not a " + what + " file");
  }
  const auto found = get<std::uint32_t>(bytes, 8);
  if (found != version) {
    throw FormatError(std::string(what) + ": format version " + std::to_string(found) +
                      ", expected " + std::to_string(version));
  }
  const auto len = get<std::uint64_t>(bytes, 12);
  if (len > bytes.size() - 20) throw FormatError(std::string(what) + ": truncated header");
  Opened o;
  try {
    o.header = json::parse(bytes.substr(20, len));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": bad header: " + e.what());
  }
  o.blob = bytes.substr(20 + len);
  if (o.blob.size() % sizeof(double) != 0) throw FormatError(std::string(what) + ": ragged blob");
  return o;
}

Matrix read_matrix(std::string_view blob, std::uint64_t offset, Index rows, Index cols,
                   const std::string& what) {
  if (rows < 0 || cols < 0) throw FormatError(what + ": negative shape");
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  if ((offset + count) * sizeof(double) > blob.size()) {
    throw FormatError(what + ": array extends past the end of the file");
  }
  Matrix m(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    m.data()[i] = get<double>(blob, (offset + i) * sizeof(double));
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Corpus

std::string serialize_corpus(const Corpus& corpus) {
  Blob blob;
  json utts = json::array();
  for (const Utterance& u : corpus.utterances) {
    utts.push_back({{"tokens", u.tokens},
                    {"class_id", u.class_id},
                    {"truth", u.truth},
                    {"rows", u.frames.rows()},
                    {"cols", u.frames.cols()},
                    {"offset", blob.add(u.frames)}});
  }
  json header{{"kind", "corpus"},
              {"spec", corpus.spec},
              {"seed", corpus.seed},
              {"size", corpus.utterances.size()},
              {"utterances", std::move(utts)}};
  return container(kCorpusMagic, kCorpusVersion, header, blob);
}

Corpus parse_corpus(std::string_view bytes) {
  const Opened o = open_container(bytes, kCorpusMagic, kCorpusVersion, "corpus");
  Corpus c;
  try {
    c.spec = o.header.at("spec").get<FactorSpec>();
    c.seed = o.header.at("seed").get<std::uint64_t>();
    const auto& utts = o.header.at("utterances");
    if (utts.size() != o.header.at("size").get<std::size_t>()) {
      throw FormatError("corpus: size does not match the utterance list");
    }
    for (const auto& ju : utts) {
      Utterance u;
      u.tokens = ju.at("tokens").get<std::vector<int>>();
      u.class_id = ju.at("class_id").get<int>();
      u.truth = ju.at("truth").get<TruthRecord>();
      u.frames = read_matrix(o.blob, ju.at("offset").get<std::uint64_t>(), ju.at("rows").get<Index>(),
                             ju.at("cols").get<Index>(), "corpus");
      c.utterances.push_back(std::move(u));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus: bad manifest: ") + e.what());
  }
  return c;
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  write_file(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoint

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Blob blob;
  const TrainState& st = ckpt.state;
  json tensors = json::array();
  const auto named = st.params.named_tensors();
  if (st.opt.m.size() != named.size()) throw std::invalid_argument("checkpoint: optimizer state does not match parameters");
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (st.opt.names[i] != name) throw std::invalid_argument("checkpoint: optimizer order mismatch at " + name);
    const std::uint64_t value = blob.add(t->value());
    const std::uint64_t m = blob.add(st.opt.m[i]);
    const std::uint64_t v = blob.add(st.opt.v[i]);
    tensors.push_back({{"name", name},
                       {"rows", t->rows()},
                       {"cols", t->cols()},
                       {"offset", value},
                       {"adam_m", m},
                       {"adam_v", v}});
  }
  json header{{"kind", "checkpoint"},
              {"train_config", st.config},
              {"factor_spec", ckpt.spec},
              {"step", st.opt.step},
              {"lr", st.opt.lr},
              {"sigma_x2", st.params.sigma_x2},
              {"tensors", std::move(tensors)}};
  return container(kCheckpointMagic, kCheckpointVersion, header, blob);
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  const Opened o = open_container(bytes, kCheckpointMagic, kCheckpointVersion, "checkpoint");
  Checkpoint c;
  try {
    c.spec = o.header.at("factor_spec").get<FactorSpec>();
    TrainState& st = c.state;
    st.config = o.header.at("train_config").get<TrainConfig>();
    st.config.validate();
    st.params = ModelParams::zeros(st.config.dims(c.spec), o.header.at("sigma_x2").get<double>(),
                                   st.config.sigma_l_floor, st.config.sigma_o_floor);
    auto named = st.params.named_tensors();
    st.opt = OptimizerState::for_params(named);
    st.opt.step = o.header.at("step").get<long>();
    st.opt.lr = o.header.at("lr").get<double>();
    const auto& tensors = o.header.at("tensors");
    if (tensors.size() != named.size()) {
      throw FormatError("checkpoint: " + std::to_string(tensors.size()) + " tensors, model needs " +
                        std::to_string(named.size()));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& jt = tensors[i];
      const std::string name = jt.at("name").get<std::string>();
      ad::Tensor& t = *named[i].tensor;
      if (name != named[i].name || jt.at("rows").get<Index>() != t.rows() ||
          jt.at("cols").get<Index>() != t.cols()) {
        throw FormatError("checkpoint: tensor " + name + " does not match the model layout");
      }
      t.value() = read_matrix(o.blob, jt.at("offset").get<std::uint64_t>(), t.rows(), t.cols(), name);
      st.opt.m[i] = read_matrix(o.blob, jt.at("adam_m").get<std::uint64_t>(), t.rows(), t.cols(), name);
      st.opt.v[i] = read_matrix(o.blob, jt.at("adam_v").get<std::uint64_t>(), t.rows(), t.cols(), name);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Run configuration

namespace {

template <typename T>
T parse_value(const std::string& text, const std::string& key) {
  auto fail = [&] { return std::invalid_argument("config: bad value '" + text + "' for " + key); };
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw fail();
  } else {
    T v{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw fail();
    return v;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Owner, typename T>
Field field(const char* section, const char* key, Owner RunConfig::*owner, T Owner::*member) {
  const std::string full = std::string(section) + "." + key;
  return {section, key,
          [=](RunConfig& c, const std::string& s) { (c.*owner).*member = parse_value<T>(s, full); },
          [=](const RunConfig& c) { return format_value((c.*owner).*member); }};
}

template <typename T>
Field top(const char* section, const char* key, T RunConfig::*member) {
  const std::string full = std::string(section) + "." + key;
  return {section, key, [=](RunConfig& c, const std::string& s) { c.*member = parse_value<T>(s, full); },
          [=](const RunConfig& c) { return format_value(c.*member); }};
}

const std::vector<Field>& fields() {
  using R = RunConfig;
  using TC = TrainConfig;
  using FS = FactorSpec;
  static const std::vector<Field> all{
      field("train", "lr0", &R::train, &TC::lr0),
      field("train", "decay_start_steps", &R::train, &TC::decay_start_steps),
      field("train", "decay_halflife_steps", &R::train, &TC::decay_halflife_steps),
      field("train", "batch_size", &R::train, &TC::batch_size),
      field("train", "total_steps", &R::train, &TC::total_steps),
      field("train", "mc_n", &R::train, &TC::mc_n),
      field("train", "sigma_l_init", &R::train, &TC::sigma_l_init),
      field("train", "sigma_l_floor", &R::train, &TC::sigma_l_floor),
      field("train", "sigma_o_init", &R::train, &TC::sigma_o_init),
      field("train", "sigma_o_floor", &R::train, &TC::sigma_o_floor),
      field("train", "K", &R::train, &TC::K),
      field("train", "D", &R::train, &TC::D),
      field("train", "D_o", &R::train, &TC::D_o),
      field("train", "S", &R::train, &TC::S),
      field("train", "seed", &R::train, &TC::seed),
      field("train", "observed", &R::train, &TC::observed),
      field("train", "sigma_x2", &R::train, &TC::sigma_x2),
      field("train", "adam_beta1", &R::train, &TC::adam_beta1),
      field("train", "adam_beta2", &R::train, &TC::adam_beta2),
      field("train", "adam_eps", &R::train, &TC::adam_eps),
      field("train", "grad_clip", &R::train, &TC::grad_clip),
      field("train", "prior_mean_scale", &R::train, &TC::prior_mean_scale),
      field("train", "text_embed", &R::train, &TC::text_embed),
      field("train", "text_hidden", &R::train, &TC::text_hidden),
      field("train", "enc_hidden", &R::train, &TC::enc_hidden),
      field("train", "dec_hidden", &R::train, &TC::dec_hidden),
      field("train", "class_embed_dim", &R::train, &TC::class_embed_dim),
      field("data", "n_classes", &R::data, &FS::n_classes),
      field("data", "noisy_fraction", &R::data, &FS::noisy_fraction),
      field("data", "heldout_noisy_class", &R::data, &FS::heldout_noisy_class),
      field("data", "rate_min", &R::data, &FS::rate_min),
      field("data", "rate_max", &R::data, &FS::rate_max),
      field("data", "pitch_min", &R::data, &FS::pitch_min),
      field("data", "pitch_max", &R::data, &FS::pitch_max),
      field("data", "clean_noise_min", &R::data, &FS::clean_noise_min),
      field("data", "clean_noise_max", &R::data, &FS::clean_noise_max),
      field("data", "noisy_noise_min", &R::data, &FS::noisy_noise_min),
      field("data", "noisy_noise_max", &R::data, &FS::noisy_noise_max),
      field("data", "vocab", &R::data, &FS::vocab),
      field("data", "frame_dim", &R::data, &FS::frame_dim),
      field("data", "min_tokens", &R::data, &FS::min_tokens),
      field("data", "max_tokens", &R::data, &FS::max_tokens),
      top("data", "corpus_size", &R::corpus_size),
      top("data", "corpus_seed", &R::corpus_seed),
      top("paths", "corpus", &R::corpus_path),
      top("paths", "checkpoint", &R::checkpoint_path),
      top("paths", "log", &R::log_path),
  };
  return all;
}

}  // namespace

RunConfig parse_run_config(std::istream& in, std::vector<std::string>* defaulted) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.message() + " at line " +
                                std::to_string(e.line()));
  }
  std::map<std::string, const Field*> index;
  for (const Field& f : fields()) index[f.section + "." + f.key] = &f;

  RunConfig config;
  std::map<std::string, bool> seen;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = index.find(full);
      if (it == index.end()) throw std::invalid_argument("config: unknown key '" + full + "'");
      it->second->set(config, value.data());
      seen[full] = true;
    }
  }
  if (defaulted != nullptr) {
    defaulted->clear();
    for (const Field& f : fields()) {
      if (!seen.contains(f.section + "." + f.key)) defaulted->push_back(f.section + "." + f.key);
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path, std::vector<std::string>* defaulted) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return parse_run_config(in, defaulted);
}

std::string to_ini(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << "\n";
      section = f.section;
      out << "[" << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Training log

std::string log_line(const LogRecord& r) {
  nlohmann::ordered_json j{{"step", r.step},
                           {"lr", r.lr},
                           {"recon", r.terms.recon},
                           {"kl_z_l", r.terms.kl_z_l},
                           {"kl_y_l", r.terms.kl_y_l},
                           {"kl_z_o", nullptr},
                           {"total", r.terms.total}};
  if (r.terms.kl_z_o) j["kl_z_o"] = *r.terms.kl_z_o;
  return j.dump();
}

LogRecord parse_log_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    LogRecord r;
    r.step = j.at("step").get<long>();
    r.lr = j.at("lr").get<double>();
    r.terms.recon = j.at("recon").get<double>();
    r.terms.kl_z_l = j.at("kl_z_l").get<double>();
    r.terms.kl_y_l = j.at("kl_y_l").get<double>();
    if (!j.at("kl_z_o").is_null()) r.terms.kl_z_o = j.at("kl_z_o").get<double>();
    r.terms.total = j.at("total").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("log: bad record: ") + e.what());
  }
}

std::vector<LogRecord> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path);
  std::vector<LogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(parse_log_line(line));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace gmvae
