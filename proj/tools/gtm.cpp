// gtm: synth | prepare | train | generate | evaluate
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime abort.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gtm/checkpoint.hpp"
#include "gtm/config.hpp"
#include "gtm/data.hpp"
#include "gtm/metrics.hpp"
#include "gtm/sampler.hpp"
#include "gtm/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kRuntime = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  ordered_json inputs = ordered_json::object();
  std::vector<std::pair<std::string, fs::path>> outputs;
  std::uint64_t seed{0};

  void write(const fs::path& path) const {
    ordered_json j;
    j["command"] = command;
    j["config"] = config;
    j["inputs"] = inputs;
    ordered_json outs = ordered_json::object();
    ordered_json sums = ordered_json::object();
    for (const auto& [key, p] : outputs) {
      outs[key] = p.string();
      sums[key] = "fnv1a64:" + hex64(gtm::file_checksum(p));
    }
    j["outputs"] = outs;
    j["seed"] = seed;
    j["checksums"] = sums;
    j["timestamp"] = utc_now();
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  }
};

fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void require_readable(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw gtm::DataError(std::string(what) + " not found: " + p.string());
}

ordered_json config_json(const gtm::TrainConfig& c) {
  ordered_json j = ordered_json::object();
  std::istringstream is(c.to_text());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed{1};
  long long n{2000};
  fs::path out;
};

void run_synth(const SynthArgs& a) {
  if (a.n < 1) throw UsageError("--n must be >= 1");
  const auto corpus = gtm::generate_synthetic_corpus(a.seed, static_cast<std::size_t>(a.n));
  gtm::write_corpus(a.out, corpus);
  Manifest m;
  m.command = "synth";
  m.config = {{"n", a.n}};
  m.outputs = {{"corpus", a.out}};
  m.seed = a.seed;
  m.write(manifest_for(a.out));
}

// ---- prepare --------------------------------------------------------------

struct PrepareArgs {
  fs::path train;
  fs::path valid;
  std::size_t vocab_size{40000};
  fs::path out;
};

void run_prepare(const PrepareArgs& a) {
  if (a.vocab_size < 1) throw UsageError("--vocab-size must be >= 1");
  require_readable(a.train, "training corpus");
  const auto train = gtm::load_corpus(a.train);
  if (!a.valid.empty()) {
    require_readable(a.valid, "validation corpus");
    gtm::load_corpus(a.valid);  // parsed for errors only; never feeds the vocabulary
  }
  const gtm::Vocabulary vocab = gtm::build_vocabulary(train, a.vocab_size);
  vocab.save(a.out);
  Manifest m;
  m.command = "prepare";
  m.config = {{"vocab_size", a.vocab_size}, {"vocabulary_entries", vocab.size()}};
  m.inputs["train"] = a.train.string();
  if (!a.valid.empty()) m.inputs["valid"] = a.valid.string();
  m.outputs = {{"vocabulary", a.out}};
  m.write(manifest_for(a.out));
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path config;
  fs::path train;
  fs::path valid;
  fs::path vocab;
  fs::path out_dir;
  bool resume{false};
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  gtm::TrainConfig config = a.config.empty() ? gtm::TrainConfig::desk() : gtm::TrainConfig::load(a.config);
  if (a.seed) config.seed = *a.seed;
  require_readable(a.train, "training corpus");
  require_readable(a.vocab, "vocabulary");
  const auto train = gtm::load_corpus(a.train);
  std::vector<gtm::Triple> valid;
  if (!a.valid.empty()) {
    require_readable(a.valid, "validation corpus");
    valid = gtm::load_corpus(a.valid);
  }
  const gtm::Vocabulary vocab = gtm::Vocabulary::load(a.vocab);

  std::unique_ptr<gtm::Trainer> trainer;
  const fs::path latest = a.out_dir / "latest.ckpt";
  if (a.resume) {
    if (!fs::exists(latest)) throw gtm::DataError("--resume: no checkpoint at " + latest.string());
    gtm::Checkpoint ck = gtm::load_checkpoint(latest, config);
    if (!(ck.model->vocab() == vocab)) throw gtm::DataError("--resume: checkpoint vocabulary differs from " + a.vocab.string());
    ck.config.max_epochs = config.max_epochs;
    ck.config.patience = config.patience;
    trainer = std::make_unique<gtm::Trainer>(std::move(ck));
    std::cerr << "resuming at epoch " << trainer->epoch() << ", step " << trainer->step() << '\n';
  } else {
    trainer = std::make_unique<gtm::Trainer>(config, vocab);
  }

  const auto enc_train = gtm::encode_corpus(train, vocab, config.max_len);
  const auto enc_valid = gtm::encode_corpus(valid, vocab, config.max_len);
  gtm::FitOptions opts;
  opts.out_dir = a.out_dir;
  opts.on_epoch = [](const gtm::TrainingLogRecord& r) {
    std::cerr << "epoch " << r.epoch << " step " << r.step << " total " << r.train.total << " kl/word "
              << r.kl_per_word;
    if (r.valid) std::cerr << " valid " << r.valid->loss.total;
    std::cerr << '\n';
    return true;
  };
  trainer->fit(enc_train, enc_valid, opts);

  Manifest m;
  m.command = "train";
  m.config = config_json(trainer->config());
  m.inputs = {{"train", a.train.string()}, {"vocab", a.vocab.string()}};
  if (!a.valid.empty()) m.inputs["valid"] = a.valid.string();
  if (!a.config.empty()) m.inputs["config"] = a.config.string();
  m.outputs = {{"latest", latest}, {"log", a.out_dir / "train_log.jsonl"}};
  if (fs::exists(a.out_dir / "best.ckpt")) m.outputs.emplace_back("best", a.out_dir / "best.ckpt");
  m.seed = trainer->config().seed;
  m.write(a.out_dir / "manifest.json");
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  fs::path checkpoint;
  fs::path posts;
  fs::path vocab;
  std::string strategy{"sample"};
  int n_samples{1};
  std::uint64_t seed{0};
  fs::path out;
};

void run_generate(const GenerateArgs& a) {
  if (a.n_samples < 1) throw UsageError("--n-samples must be >= 1");
  gtm::GenerateOptions opts;
  opts.n_samples = a.n_samples;
  if (a.strategy == "greedy") {
    opts.strategy = gtm::DecodeStrategy::greedy;
    if (a.n_samples > 1) {
      std::cerr << "warning: --strategy greedy is deterministic; ignoring --n-samples " << a.n_samples << '\n';
      opts.n_samples = 1;
    }
  } else if (a.strategy != "sample") {
    throw UsageError("--strategy must be greedy or sample");
  }
  require_readable(a.checkpoint, "checkpoint");
  require_readable(a.posts, "posts file");
  gtm::Checkpoint ck = gtm::load_checkpoint(a.checkpoint);
  if (!a.vocab.empty()) {
    require_readable(a.vocab, "vocabulary");
    if (!(gtm::Vocabulary::load(a.vocab) == ck.model->vocab())) {
      throw gtm::DataError("vocabulary " + a.vocab.string() + " does not match the checkpoint");
    }
  }
  opts.max_len = ck.config.max_len;
  const auto posts = gtm::read_posts(a.posts);
  gtm::batch_generate(posts, *ck.model, a.seed, opts, a.out);

  Manifest m;
  m.command = "generate";
  m.config = {{"strategy", a.strategy}, {"n_samples", opts.n_samples}, {"max_len", opts.max_len}};
  m.inputs = {{"checkpoint", a.checkpoint.string()}, {"posts", a.posts.string()}};
  if (!a.vocab.empty()) m.inputs["vocab"] = a.vocab.string();
  m.outputs = {{"results", a.out}};
  m.seed = a.seed;
  m.write(manifest_for(a.out));
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  fs::path predictions;
  fs::path references;
  fs::path embeddings;
  fs::path out;
};

void run_evaluate(const EvaluateArgs& a) {
  require_readable(a.predictions, "predictions");
  require_readable(a.references, "references");
  require_readable(a.embeddings, "embedding table");
  const gtm::MetricReport r = gtm::evaluate(a.predictions, a.references, a.embeddings);
  {
    std::ofstream os(a.out);
    os << gtm::to_json(r).dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + a.out.string());
  }
  Manifest m;
  m.command = "evaluate";
  m.inputs = {{"predictions", a.predictions.string()},
              {"references", a.references.string()},
              {"embeddings", a.embeddings.string()}};
  m.outputs = {{"report", a.out}};
  m.write(manifest_for(a.out));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triple-wise latent variable question generation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic post/question/answer corpus");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--n", synth.n, "Number of triples")->required();
  s->add_option("--out", synth.out, "Output corpus (JSON lines)")->required();

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "Build the vocabulary from the training split");
  p->add_option("--train", prep.train, "Training corpus")->required();
  p->add_option("--valid", prep.valid, "Validation corpus (checked, not counted)");
  p->add_option("--vocab-size", prep.vocab_size, "Most frequent tokens to keep")->capture_default_str();
  p->add_option("--out", prep.out, "Vocabulary file")->required();

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "key=value config file (preset=paper|desk)");
  t->add_option("--train", tr.train, "Training corpus")->required();
  t->add_option("--valid", tr.valid, "Validation corpus");
  t->add_option("--vocab", tr.vocab, "Vocabulary file")->required();
  t->add_option("--out-dir", tr.out_dir, "Checkpoints and log")->required();
  t->add_flag("--resume", tr.resume, "Continue from out-dir/latest.ckpt");
  auto* seed_opt = t->add_option("--seed", train_seed, "Overrides the config seed");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate questions for posts");
  g->add_option("--checkpoint", gen.checkpoint, "Model checkpoint")->required();
  g->add_option("--posts", gen.posts, "Posts, one per line")->required();
  g->add_option("--vocab", gen.vocab, "Optional vocabulary to check against the checkpoint");
  g->add_option("--strategy", gen.strategy, "greedy or sample")->capture_default_str();
  g->add_option("--n-samples", gen.n_samples, "Questions per post")->capture_default_str();
  g->add_option("--seed", gen.seed, "Base seed; post i uses seed + i")->capture_default_str();
  g->add_option("--out", gen.out, "Results (JSON lines)")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score predictions against references");
  e->add_option("--predictions", ev.predictions, "One tokenized sentence per line")->required();
  e->add_option("--references", ev.references, "One tokenized sentence per line")->required();
  e->add_option("--embeddings", ev.embeddings, "word2vec text table")->required();
  e->add_option("--out", ev.out, "Report (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (s->parsed()) run_synth(synth);
    if (p->parsed()) run_prepare(prep);
    if (t->parsed()) {
      if (seed_opt->count() > 0) tr.seed = train_seed;
      run_train(tr);
    }
    if (g->parsed()) run_generate(gen);
    if (e->parsed()) run_evaluate(ev);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsage;
  } catch (const gtm::ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return kUsage;
  } catch (const gtm::TrainingAborted& err) {
    std::cerr << "training aborted: " << err.what() << '\n';
    if (!err.record_path().empty()) std::cerr << "diagnostic record: " << err.record_path().string() << '\n';
    return kRuntime;
  } catch (const gtm::DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const gtm::CheckpointError& err) {
    std::cerr << "checkpoint error: " << err.what() << '\n';
    return kData;
  } catch (const gtm::MetricError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kRuntime;
  }
  return 0;
}
