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

// gmvae: corpus generation, training, sampling and analysis from the shell.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 numeric failure,
// 3 training finished but the collapse check fired.
// GMVAE_LOG=quiet|info|debug controls stderr chatter (default info).

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gmvae/analysis.hpp"
#include "gmvae/io.hpp"

namespace {

using namespace gmvae;

enum ExitCode { kOk = 0, kUsage = 1, kNumeric = 2, kCollapse = 3 };

enum class Level { kQuiet, kInfo, kDebug };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("GMVAE_LOG");
    const std::string v = env ? env : "info";
    if (v == "quiet") return Level::kQuiet;
    if (v == "debug") return Level::kDebug;
    return Level::kInfo;
  }();
  return level;
}

template <typename... Args>
void say(Level at, const char* fmt, Args... args) {
  if (log_level() < at) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

std::vector<int> parse_tokens(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad token '" + item + "' in --text");
    }
  }
  if (out.empty()) throw std::invalid_argument("--text is empty");
  return out;
}

RowVector read_row(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> values;
  std::string cell;
  while (std::getline(in, cell, ',')) {
    std::stringstream ss(cell);
    double v;
    while (ss >> v) values.push_back(v);
  }
  RowVector r(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) r(static_cast<Index>(i)) = values[i];
  return r;
}

void write_csv(std::ostream& out, const Matrix& m) {
  char buf[32];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_file(path, text);
  }
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  std::vector<std::string> defaulted;
  RunConfig c = load_run_config(path, &defaulted);
  if (!defaulted.empty()) {
    say(Level::kInfo, "config: %zu keys not set, using defaults", defaulted.size());
    for (const auto& k : defaulted) say(Level::kDebug, "  default %s", k.c_str());
  }
  return c;
}

std::string pick(const std::string& flag, const std::string& from_config, const char* what) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw std::invalid_argument(std::string("no ") + what + " given (flag or [paths] entry)");
}

// --- gen-corpus -------------------------------------------------------------

struct GenCorpusArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> size;
};

int gen_corpus(const GenCorpusArgs& a) {
  RunConfig rc = load_config(a.config);
  if (a.seed) rc.corpus_seed = *a.seed;
  if (a.size) rc.corpus_size = *a.size;
  const std::string out = pick(a.out, rc.corpus_path, "output path");
  const Corpus c = generate_corpus(rc.data, rc.corpus_size, rc.corpus_seed);
  save_corpus(out, c);
  std::size_t noisy = 0;
  std::vector<std::size_t> per_class(static_cast<std::size_t>(c.spec.n_classes), 0);
  Index frames = 0;
  for (const Utterance& u : c.utterances) {
    noisy += u.truth.condition;
    per_class[static_cast<std::size_t>(u.class_id)] += 1;
    frames += u.n_frames();
  }
  std::printf("utterances %zu\nnoisy %zu\nmean_frames %.2f\n", c.size(), noisy,
              static_cast<double>(frames) / static_cast<double>(c.size()));
  for (std::size_t k = 0; k < per_class.size(); ++k) std::printf("class_%zu %zu\n", k, per_class[k]);
  return kOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, corpus, out, log, resume;
  bool observed = false;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  long report_every = 500;
};

int train_cmd(const TrainArgs& a) {
  std::vector<std::string> defaulted;
  RunConfig rc;
  if (!a.config.empty()) {
    rc = load_run_config(a.config, &defaulted);
    if (!defaulted.empty()) say(Level::kInfo, "config: %zu keys not set, using defaults", defaulted.size());
    for (const auto& k : defaulted) say(Level::kDebug, "  default %s", k.c_str());
  }
  const Corpus corpus = load_corpus(pick(a.corpus, rc.corpus_path, "corpus"));
  const std::string out = pick(a.out, rc.checkpoint_path, "checkpoint path");
  const std::string log_path = !a.log.empty() ? a.log : !rc.log_path.empty() ? rc.log_path : out + ".log.ndjson";

  TrainState state;
  std::vector<LogRecord> history;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    if (!(ck.spec == corpus.spec)) throw std::invalid_argument("resume: checkpoint was trained on a different corpus spec");
    state = std::move(ck.state);
    if (a.observed && !state.config.observed) throw std::invalid_argument("resume: checkpoint is not the observed variant");
    if (a.steps) state.config.total_steps = *a.steps;
    history = read_log(log_path);
    if (static_cast<long>(history.size()) != state.step()) {
      throw std::invalid_argument("resume: log " + log_path + " has " + std::to_string(history.size()) +
                                  " records, checkpoint is at step " + std::to_string(state.step()));
    }
    say(Level::kInfo, "resuming at step %ld", state.step());
  } else {
    TrainConfig cfg = rc.train;
    // S follows the corpus unless the config pins it.
    if (a.config.empty() || std::find(defaulted.begin(), defaulted.end(), "train.S") != defaulted.end()) {
      cfg.S = corpus.spec.n_classes;
    }
    if (a.observed) cfg.observed = true;
    if (a.steps) cfg.total_steps = *a.steps;
    if (a.seed) cfg.seed = *a.seed;
    state = init_train_state(corpus, cfg);
  }

  std::ofstream log(log_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  try {
    train_steps(state, corpus, state.config.total_steps, [&](const LogRecord& r) {
      log << log_line(r) << '\n';
      history.push_back(r);
      if (a.report_every > 0 && r.step % a.report_every == 0) {
        say(Level::kInfo, "step %ld lr %.3g elbo %.2f recon %.2f kl_z %.3f kl_y %.3f", r.step, r.lr,
            r.terms.total, r.terms.recon, r.terms.kl_z_l, r.terms.kl_y_l);
      }
    });
  } catch (const NumericError&) {
    log.flush();
    throw;
  }
  log.close();
  save_checkpoint(out, {corpus.spec, state});
  say(Level::kInfo, "wrote %s (step %ld)", out.c_str(), state.step());

  if (history.empty()) return kOk;
  std::vector<Index> assignments;
  assignments.reserve(corpus.size());
  for (const Utterance& u : corpus.utterances) assignments.push_back(assign_component(state.params, u));
  const CollapseReport cr = collapse_report(history, assignments, state.params.latent_prior.components());
  std::printf("final_smoothed_kl_z_l %.6g\nusage_entropy %.6g\ncollapsed %s\n", cr.final_smoothed_kl_z_l,
              cr.usage_entropy, cr.collapsed ? "true" : "false");
  return cr.collapsed ? kCollapse : kOk;
}

// --- sample -----------------------------------------------------------------

struct SampleArgs {
  std::string ckpt, text, z_file, out;
  int n = 1;
  std::optional<int> component;
  bool at_mean = false;
  int label = 0;
  std::optional<Index> frames;
  std::uint64_t seed = 0;
};

int sample_cmd(const SampleArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  ModelParams& p = ck.state.params;
  const std::vector<int> tokens = parse_tokens(a.text);
  const Index k = p.latent_prior.components();
  if (a.component && (*a.component < 0 || *a.component >= k)) {
    throw std::out_of_range("--component " + std::to_string(*a.component) + " but K = " + std::to_string(k));
  }
  GenerateRequest req;
  req.tokens = tokens;
  req.component = a.component;
  req.label = a.label;
  req.n_frames = a.frames.value_or(frames_for(static_cast<Index>(tokens.size()), 0.25));
  if (!a.z_file.empty()) {
    req.z_latent = read_row(a.z_file);
  } else if (a.at_mean) {
    if (!a.component) throw std::invalid_argument("--at-mean needs --component");
    req.z_latent = RowVector(p.latent_prior.means.value().row(*a.component));
  }
  for (int i = 0; i < a.n; ++i) {
    Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(i)));
    const Matrix frames = generate(p, req, rng);
    std::ostringstream csv;
    write_csv(csv, frames);
    if (a.out.empty() || a.out == "-") {
      if (a.n > 1) std::cout << "# sample " << i << '\n';
      std::cout << csv.str();
    } else {
      write_file(a.n == 1 ? a.out : a.out + "." + std::to_string(i) + ".csv", csv.str());
    }
  }
  return kOk;
}

// --- traverse ---------------------------------------------------------------

struct TraverseArgs {
  std::string ckpt, text, out;
  std::optional<Index> dim;
  std::optional<int> component;
  int points = 5;
  int label = 0;
  std::optional<Index> frames;
};

int traverse_cmd(const TraverseArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  ModelParams& p = ck.state.params;
  const std::vector<int> tokens = parse_tokens(a.text);
  const MarginalStats ms = marginal_stats(p.latent_prior);
  const Index dim = a.dim.value_or(p.latent_prior.components() >= 2 ? dims_by_scattering(p.latent_prior)[0] : 0);
  RowVector seed = ms.mean;
  if (a.component) {
    if (*a.component < 0 || *a.component >= p.latent_prior.components()) throw std::out_of_range("--component");
    seed = p.latent_prior.means.value().row(*a.component);
  }
  const std::vector<double> grid = traversal_grid(ms.mean(dim), ms.stddev(dim), a.points);
  const Index n_frames = a.frames.value_or(frames_for(static_cast<Index>(tokens.size()), 0.25));
  const auto outs = traverse(p, tokens, seed, dim, grid, a.label, n_frames);

  std::ostringstream csv;
  csv << "point,value,frame";
  for (Index f = 0; f < p.dims.frame_dim; ++f) csv << ",f" << f;
  csv << '\n';
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (Index n = 0; n < outs[i].rows(); ++n) {
      csv << i << ',' << grid[i] << ',' << n;
      char buf[32];
      for (Index f = 0; f < outs[i].cols(); ++f) {
        std::snprintf(buf, sizeof buf, ",%.17g", outs[i](n, f));
        csv << buf;
      }
      csv << '\n';
    }
    const double noise = measure_noise_level(outs[i]);
    std::string pitch = "none";
    try {
      pitch = std::to_string(measure_pitch(outs[i]));
    } catch (const NoStructureError&) {
    }
    say(Level::kInfo, "dim %ld point %zu value %.4f noise %.4f pitch %s", static_cast<long>(dim), i, grid[i],
        noise, pitch.c_str());
  }
  write_text(a.out, csv.str());
  return kOk;
}

// --- analyze / transfer -------------------------------------------------------

struct AnalyzeArgs {
  std::string ckpt, corpus, log, out;
};

int analyze_cmd(const AnalyzeArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  const Corpus corpus = load_corpus(a.corpus);
  std::vector<LogRecord> log;
  if (!a.log.empty()) log = read_log(a.log);
  const AnalysisReport rep = analyze(ck.state.params, corpus, a.log.empty() ? nullptr : &log);
  write_text(a.out, to_json(rep));
  return kOk;
}

struct TransferArgs {
  std::string ckpt, corpus, text, out;
  std::size_t ref = 0;
  bool denoise = false;
  int dims = 1;
  std::optional<Index> clean;
};

int transfer_cmd(const TransferArgs& a) {
  Checkpoint ck = load_checkpoint(a.ckpt);
  const Corpus corpus = load_corpus(a.corpus);
  if (a.ref >= corpus.size()) throw std::out_of_range("--ref beyond the corpus");
  const Utterance& ref = corpus.utterances[a.ref];
  TransferOptions opts;
  opts.denoise = a.denoise;
  opts.denoise_dims = a.dims;
  opts.clean_component = a.clean;
  const TransferResult r = transfer_eval(ck.state.params, ref, a.text.empty() ? ref.tokens : parse_tokens(a.text), opts);
  write_text(a.out, to_json(r));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-mixture VAE over synthetic controllable sequences"};
  app.require_subcommand(1);
  int code = kOk;

  GenCorpusArgs gc;
  auto* c_gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
  c_gen->add_option("--config", gc.config, "run configuration (INI)")->check(CLI::ExistingFile);
  c_gen->add_option("--out", gc.out, "corpus file to write");
  c_gen->add_option("--seed", gc.seed, "corpus seed (overrides config)");
  c_gen->add_option("--size", gc.size, "number of utterances (overrides config)");
  c_gen->callback([&] { code = gen_corpus(gc); });

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model and write a checkpoint");
  c_train->add_option("--config", tr.config, "run configuration (INI)")->check(CLI::ExistingFile);
  c_train->add_option("--corpus", tr.corpus, "corpus file");
  c_train->add_option("--out", tr.out, "checkpoint to write");
  c_train->add_option("--log", tr.log, "newline-JSON training log (default <out>.log.ndjson)");
  c_train->add_option("--resume", tr.resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  c_train->add_flag("--observed", tr.observed, "use the observed-attribute variant");
  c_train->add_option("--steps", tr.steps, "total steps (overrides config)");
  c_train->add_option("--seed", tr.seed, "training seed (overrides config)");
  c_train->add_option("--report-every", tr.report_every, "progress line interval; 0 disables");
  c_train->callback([&] { code = train_cmd(tr); });

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "decode samples from the prior");
  c_sample->add_option("--ckpt", sa.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_sample->add_option("--text", sa.text, "comma-separated token ids")->required();
  c_sample->add_option("--n", sa.n, "number of samples")->check(CLI::PositiveNumber);
  c_sample->add_option("--component", sa.component, "pin y_l to this component");
  c_sample->add_flag("--at-mean", sa.at_mean, "use the pinned component's mean as z_l");
  c_sample->add_option("--z", sa.z_file, "file holding an explicit z_l (comma or space separated)")
      ->check(CLI::ExistingFile);
  c_sample->add_option("--label", sa.label, "class index for the observed pathway");
  c_sample->add_option("--frames", sa.frames, "output length (default: 4 frames per token)");
  c_sample->add_option("--seed", sa.seed, "sampling seed");
  c_sample->add_option("--out", sa.out, "CSV output (n > 1 appends .<i>.csv)");
  c_sample->callback([&] { code = sample_cmd(sa); });

  TraverseArgs tv;
  auto* c_trav = app.add_subcommand("traverse", "decode along one latent dimension");
  c_trav->add_option("--ckpt", tv.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_trav->add_option("--text", tv.text, "comma-separated token ids")->required();
  c_trav->add_option("--dim", tv.dim, "dimension (default: largest scattering ratio)");
  c_trav->add_option("--component", tv.component, "start from this component's mean");
  c_trav->add_option("--points", tv.points, "grid size")->check(CLI::PositiveNumber);
  c_trav->add_option("--label", tv.label, "class index");
  c_trav->add_option("--frames", tv.frames, "output length");
  c_trav->add_option("--out", tv.out, "CSV output (default stdout)");
  c_trav->callback([&] { code = traverse_cmd(tv); });

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "assignment, scattering and distance report");
  c_an->add_option("--ckpt", an.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_an->add_option("--corpus", an.corpus, "corpus file")->required()->check(CLI::ExistingFile);
  c_an->add_option("--log", an.log, "training log for the collapse section")->check(CLI::ExistingFile);
  c_an->add_option("--out", an.out, "JSON output (default stdout)");
  c_an->callback([&] { code = analyze_cmd(an); });

  TransferArgs tf;
  auto* c_tf = app.add_subcommand("transfer", "decode new text in the style of a reference");
  c_tf->add_option("--ckpt", tf.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_tf->add_option("--corpus", tf.corpus, "corpus holding the reference")->required()->check(CLI::ExistingFile);
  c_tf->add_option("--ref", tf.ref, "reference utterance index");
  c_tf->add_option("--text", tf.text, "comma-separated token ids (default: the reference's)");
  c_tf->add_flag("--denoise", tf.denoise, "overwrite top scattering dimensions with the clean mean");
  c_tf->add_option("--dims", tf.dims, "dimensions to overwrite when denoising")->check(CLI::PositiveNumber);
  c_tf->add_option("--clean-component", tf.clean, "clean component (default: detected)");
  c_tf->add_option("--out", tf.out, "JSON output (default stdout)");
  c_tf->callback([&] { code = transfer_cmd(tf); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "gmvae: numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gmvae: %s\n", e.what());
    return kUsage;
  }
  return code;
}
