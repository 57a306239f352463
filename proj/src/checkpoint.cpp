#include "gtm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace gtm {

namespace {

constexpr char kMagic[8] = {'G', 'T', 'M', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  template <class T>
  void pod(T v) {
    raw(&v, sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void matrix(const ad::Matrix& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : b_(bytes) {}
  void raw(void* p, std::size_t n, const char* field) {
    if (n > b_.size() - pos_) throw CheckpointError("corrupt checkpoint: truncated while reading " + std::string(field));
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod(const char* field) {
    T v;
    raw(&v, sizeof v, field);
    return v;
  }
  std::string str(const char* field) {
    const auto n = pod<std::uint64_t>(field);
    if (n > b_.size() - pos_) throw CheckpointError("corrupt checkpoint: truncated while reading " + std::string(field));
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  ad::Matrix matrix(const std::string& field) {
    const auto rows = pod<std::int64_t>(field.c_str());
    const auto cols = pod<std::int64_t>(field.c_str());
    if (rows < 0 || cols < 0) throw CheckpointError("corrupt checkpoint: negative shape for " + field);
    const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (n > (b_.size() - pos_) / sizeof(double)) {
      throw CheckpointError("corrupt checkpoint: truncated while reading " + field);
    }
    ad::Matrix m(rows, cols);
    raw(m.data(), n * sizeof(double), field.c_str());
    return m;
  }
  void skip_matrix(const std::string& field) {
    const auto rows = pod<std::int64_t>(field.c_str());
    const auto cols = pod<std::int64_t>(field.c_str());
    if (rows < 0 || cols < 0) throw CheckpointError("corrupt checkpoint: negative shape for " + field);
    const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (n > (b_.size() - pos_) / sizeof(double)) {
      throw CheckpointError("corrupt checkpoint: truncated while reading " + field);
    }
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view b_;
  std::size_t pos_{0};
};

void require_shape(const ad::Matrix& got, const ad::Matrix& want, const std::string& field) {
  if (got.rows() != want.rows() || got.cols() != want.cols()) {
    throw CheckpointError("checkpoint shape mismatch for " + field + ": file " + std::to_string(got.rows()) + "x" +
                          std::to_string(got.cols()) + ", model " + std::to_string(want.rows()) + "x" +
                          std::to_string(want.cols()));
  }
}

/// Walks the payload without building anything so truncation is reported
/// against the field where the bytes ran out.
void scan_payload(std::string_view payload) {
  Reader r(payload);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic, "magic");
  r.pod<std::uint32_t>("format_version");
  r.str("config");
  r.str("vocabulary");
  r.pod<std::int64_t>("step");
  r.pod<std::int64_t>("epoch");
  const auto count = r.pod<std::uint64_t>("parameter_count");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.str("parameter name");
    r.skip_matrix(name);
  }
  const auto has_opt = r.pod<std::uint8_t>("optimizer flag");
  if (has_opt == 1) {
    r.pod<std::int64_t>("optimizer steps");
    for (std::uint64_t i = 0; i < 2 * count; ++i) r.skip_matrix("optimizer moments");
  }
  if (r.pos() != payload.size()) throw CheckpointError("corrupt checkpoint: trailing bytes before checksum");
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a64(ss.str());
}

void save_checkpoint(const std::filesystem::path& path, const GtmModel& model, const TrainConfig& config,
                     std::int64_t step, std::int64_t epoch, const Adam* optimizer) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(config.to_text());
  std::ostringstream vs;
  model.vocab().write(vs);
  w.str(vs.str());
  w.pod<std::int64_t>(step);
  w.pod<std::int64_t>(epoch);
  const auto params = model.params().all();
  w.pod<std::uint64_t>(params.size());
  for (const auto& p : params) {
    w.str(p->name);
    w.matrix(p->value);
  }
  w.pod<std::uint8_t>(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    w.pod<std::int64_t>(optimizer->steps_taken());
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.matrix(optimizer->first_moments()[i]);
      w.matrix(optimizer->second_moments()[i]);
    }
  }
  const std::uint64_t sum = fnv1a64(w.bytes());

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint " + tmp.string());
    os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    os.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    if (!os) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string bytes = ss.str();

  Reader r(bytes);
  char magic[sizeof kMagic];
  r.raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint file: bad magic");
  const auto version = r.pod<std::uint32_t>("format_version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < sizeof(std::uint64_t) + r.pos()) throw CheckpointError("corrupt checkpoint: truncated checksum");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  const std::string_view payload(bytes.data(), body);
  scan_payload(payload);
  if (fnv1a64(payload) != stored) throw CheckpointError("corrupt checkpoint: checksum mismatch");

  Reader pr(payload);
  pr.raw(magic, sizeof magic, "magic");
  pr.pod<std::uint32_t>("format_version");
  Checkpoint ck;
  try {
    ck.config = TrainConfig::parse(pr.str("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: config: ") + e.what());
  }
  Vocabulary vocab;
  {
    const std::string vtext = pr.str("vocabulary");
    std::istringstream vis(vtext);
    try {
      vocab = Vocabulary::read(vis);
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("corrupt checkpoint: vocabulary: ") + e.what());
    }
  }
  ck.step = pr.pod<std::int64_t>("step");
  ck.epoch = pr.pod<std::int64_t>("epoch");
  ck.model = std::make_unique<GtmModel>(ck.config.model_config(vocab.size()), std::move(vocab));
  const auto params = ck.model->params().all();
  const auto count = pr.pod<std::uint64_t>("parameter_count");
  if (count != params.size()) {
    throw CheckpointError("checkpoint parameter_count " + std::to_string(count) + " does not match model (" +
                          std::to_string(params.size()) + ")");
  }
  for (const auto& p : params) {
    const std::string name = pr.str("parameter name");
    if (name != p->name) throw CheckpointError("checkpoint parameter order: expected " + p->name + ", found " + name);
    ad::Matrix m = pr.matrix(name);
    require_shape(m, p->value, name);
    p->value = std::move(m);
  }
  const auto has_opt = pr.pod<std::uint8_t>("optimizer flag");
  if (has_opt > 1) throw CheckpointError("corrupt checkpoint: bad optimizer flag");
  if (has_opt == 1) {
    Adam adam(ck.model->params(), ck.config.learning_rate);
    adam.set_steps_taken(pr.pod<std::int64_t>("optimizer steps"));
    for (std::size_t i = 0; i < params.size(); ++i) {
      ad::Matrix m = pr.matrix("adam.m " + params[i]->name);
      ad::Matrix v = pr.matrix("adam.v " + params[i]->name);
      require_shape(m, params[i]->value, "adam.m " + params[i]->name);
      require_shape(v, params[i]->value, "adam.v " + params[i]->name);
      adam.first_moments()[i] = std::move(m);
      adam.second_moments()[i] = std::move(v);
    }
    ck.optimizer = std::move(adam);
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const TrainConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const TrainConfig& c = ck.config;
  auto check = [](const char* field, auto got, auto want) {
    if (got != want) {
      std::ostringstream os;
      os << "config mismatch: " << field << " is " << got << " in checkpoint, expected " << want;
      throw CheckpointError(os.str());
    }
  };
  check("embed_dim", c.embed_dim, expected.embed_dim);
  check("hidden", c.hidden, expected.hidden);
  check("latent_dim", c.latent_dim, expected.latent_dim);
  check("mlp_hidden", c.mlp_hidden, expected.mlp_hidden);
  check("max_len", c.max_len, expected.max_len);
  check("min_sigma", c.min_sigma, expected.min_sigma);
  return ck;
}

}  // namespace gtm
