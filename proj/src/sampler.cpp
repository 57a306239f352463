#include "gtm/sampler.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace gtm {

std::vector<GenerationResult> generate(std::span<const std::string> post, const GtmModel& model, std::uint64_t seed,
                                       const GenerateOptions& opts) {
  return generate_with(InferenceView(model), post, seed, opts);
}

void batch_generate(std::span<const Tokens> posts, const GtmModel& model, std::uint64_t seed,
                    const GenerateOptions& opts, std::ostream& out) {
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const std::uint64_t s = seed + i;
    std::vector<GenerationResult> results;
    try {
      results = generate(posts[i], model, s, opts);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("post " + std::to_string(i + 1) + ": " + e.what());
    }
    for (const GenerationResult& r : results) {
      nlohmann::ordered_json j;
      j["post"] = join(posts[i]);
      j["question"] = join(r.question);
      j["predicted_type"] = std::string(to_string(r.predicted_type));
      j["seed"] = s;
      if (opts.n_samples > 1) j["sample"] = r.sample_index;
      out << j.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("batch_generate: write failed");
}

void batch_generate(std::span<const Tokens> posts, const GtmModel& model, std::uint64_t seed,
                    const GenerateOptions& opts, const std::filesystem::path& out_path) {
  std::ostringstream buf;
  batch_generate(posts, model, seed, opts, buf);
  std::ofstream os(out_path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + out_path.string());
  os << buf.str();
  if (!os) throw std::runtime_error("failed writing " + out_path.string());
}

std::vector<Tokens> read_posts(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read posts file " + path.string(), 0);
  std::vector<Tokens> posts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto first = line.find_first_not_of(" \t");
    if (line[first] == '{') {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw DataError("malformed JSON", line_no);
      const auto it = j.find("post");
      if (it == j.end() || !it->is_string()) throw DataError("missing field 'post'", line_no);
      Tokens t = tokenize(it->get<std::string>());
      if (t.empty()) throw DataError("empty post", line_no);
      posts.push_back(std::move(t));
      continue;
    }
    posts.push_back(tokenize(line));
  }
  return posts;
}

std::vector<Reconstruction> reconstruct_questions(const GtmModel& model, std::span<const EncodedTriple> data,
                                                  int max_len, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("reconstruct_questions: batch_size must be positive");
  std::vector<Reconstruction> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t begin = 0; begin < data.size(); begin += bs) {
    const std::size_t end = std::min(data.size(), begin + bs);
    const Batch batch = make_batch(data.subspan(begin, end - begin));
    ad::Graph g;
    const UtteranceEncoding post = model.encode_utterance(g, batch.post);
    const UtteranceEncoding question = model.encode_utterance(g, batch.question);
    const UtteranceEncoding answer = model.encode_utterance(g, batch.answer);
    const ad::Var utterances[] = {post.summary, question.summary, answer.summary};
    const LatentNetworks& lat = model.latent();
    const ad::Var z_t = lat.posterior_triple(g, model.encode_triple_sequence(g, utterances)).mu;
    const ContextBridge bridge = lat.context_bridge(g, z_t, post.summary);
    const ad::Var z_a = lat.posterior_answer(g, bridge, z_t, answer.summary).mu;
    const ad::Var v_qt = model.question_type_vectors(g, batch.question_types);
    const ad::Var z_q = lat.posterior_question(g, bridge, z_t, question.summary, v_qt, z_a).mu;
    const ad::Matrix probs = ad::softmax_cols(model.question_type_logits(g, z_q, z_t, post.summary).value());
    const ad::Var s0 = model.init_question_decoder(g, z_q, z_t, bridge.h_ctx_q, v_qt);
    const Decoder& dec = model.question_decoder();
    const auto ids = dec.decode(g, s0, model.post_memory(g, post, dec), max_len, DecodeStrategy::greedy, nullptr);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      out.push_back({ids[b], probs.col(static_cast<Eigen::Index>(b))});
    }
  }
  return out;
}

}  // namespace gtm
