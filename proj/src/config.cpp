#include "gtm/config.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gtm {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(v) + "' for key " + std::string(key));
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const std::string s(v);
    const double d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + std::string(v) + "' for key " + std::string(key));
  }
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid value '" + std::string(v) + "' for key " + std::string(key));
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os << std::setprecision(17) << d;
  return os.str();
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.preset = "paper";
  c.vocab_size = 40000;
  c.max_len = 30;
  c.embed_dim = 300;
  c.hidden = 300;
  c.latent_dim = 100;
  c.mlp_hidden = 300;
  c.dropout = 0.2;
  c.batch_size = 64;
  c.learning_rate = 1e-4;
  c.word_drop = 0.25;
  c.max_epochs = 30;
  c.patience = 10;
  return c;
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::from_preset(std::string_view name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> TrainConfig::keys() {
  return {"preset",     "vocab_size", "max_len",       "embed_dim", "hidden",    "latent_dim",
          "mlp_hidden", "dropout",    "batch_size",    "learning_rate", "word_drop", "anneal_steps",
          "max_epochs", "patience",   "seed",          "use_bow",   "use_anneal", "clip_norm",
          "min_sigma"};
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "preset") {
    *this = from_preset(value);
  } else if (key == "vocab_size") {
    vocab_size = parse_number<std::size_t>(key, value);
  } else if (key == "max_len") {
    max_len = parse_number<int>(key, value);
  } else if (key == "embed_dim") {
    embed_dim = parse_number<int>(key, value);
  } else if (key == "hidden") {
    hidden = parse_number<int>(key, value);
  } else if (key == "latent_dim") {
    latent_dim = parse_number<int>(key, value);
  } else if (key == "mlp_hidden") {
    mlp_hidden = parse_number<int>(key, value);
  } else if (key == "dropout") {
    dropout = parse_double(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_number<int>(key, value);
  } else if (key == "learning_rate") {
    learning_rate = parse_double(key, value);
  } else if (key == "word_drop") {
    word_drop = parse_double(key, value);
  } else if (key == "anneal_steps") {
    anneal_steps = parse_number<std::int64_t>(key, value);
  } else if (key == "max_epochs") {
    max_epochs = parse_number<int>(key, value);
  } else if (key == "patience") {
    patience = parse_number<int>(key, value);
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "use_bow") {
    use_bow = parse_bool(key, value);
  } else if (key == "use_anneal") {
    use_anneal = parse_bool(key, value);
  } else if (key == "clip_norm") {
    clip_norm = parse_double(key, value);
  } else if (key == "min_sigma") {
    min_sigma = parse_double(key, value);
  } else {
    throw ConfigError("invalid config key: " + std::string(key));
  }
}

TrainConfig TrainConfig::parse(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    entries.emplace_back(std::string(trim(l.substr(0, eq))), std::string(trim(l.substr(eq + 1))));
  }
  TrainConfig c;
  for (const auto& [k, v] : entries) {
    if (k == "preset") c = from_preset(v);
  }
  for (const auto& [k, v] : entries) {
    if (k != "preset") c.set(k, v);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "preset=" << preset << '\n'
     << "vocab_size=" << vocab_size << '\n'
     << "max_len=" << max_len << '\n'
     << "embed_dim=" << embed_dim << '\n'
     << "hidden=" << hidden << '\n'
     << "latent_dim=" << latent_dim << '\n'
     << "mlp_hidden=" << mlp_hidden << '\n'
     << "dropout=" << fmt_double(dropout) << '\n'
     << "batch_size=" << batch_size << '\n'
     << "learning_rate=" << fmt_double(learning_rate) << '\n'
     << "word_drop=" << fmt_double(word_drop) << '\n'
     << "anneal_steps=" << anneal_steps << '\n'
     << "max_epochs=" << max_epochs << '\n'
     << "patience=" << patience << '\n'
     << "seed=" << seed << '\n'
     << "use_bow=" << (use_bow ? "true" : "false") << '\n'
     << "use_anneal=" << (use_anneal ? "true" : "false") << '\n'
     << "clip_norm=" << fmt_double(clip_norm) << '\n'
     << "min_sigma=" << fmt_double(min_sigma) << '\n';
  return os.str();
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(vocab_size >= 1, "vocab_size must be positive");
  require(max_len >= 2, "max_len must be >= 2");
  require(embed_dim > 0 && hidden > 0 && latent_dim > 0 && mlp_hidden > 0, "dimensions must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(word_drop >= 0.0 && word_drop <= 1.0, "word_drop must lie in [0, 1]");
  require(anneal_steps >= 0, "anneal_steps must be >= 0");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(patience >= 0, "patience must be >= 0");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(min_sigma > 0.0, "min_sigma must be positive");
}

ModelConfig TrainConfig::model_config(std::size_t actual_vocab_size) const {
  ModelConfig m;
  m.vocab_size = static_cast<Eigen::Index>(actual_vocab_size);
  m.embed_dim = embed_dim;
  m.hidden = hidden;
  m.latent_dim = latent_dim;
  m.qt_dim = latent_dim;
  m.mlp_hidden = mlp_hidden;
  m.min_sigma = min_sigma;
  return m;
}

}  // namespace gtm
