#include "gtm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gtm/data.hpp"

namespace gtm {

Attention::Attention(nn::ParameterStore& store, const std::string& name, Eigen::Index query_dim,
                     Eigen::Index memory_dim, Eigen::Index attn_dim)
    : query_(store, name + ".query", ad::ParamGroup::generation, query_dim, attn_dim, false),
      key_(store, name + ".key", ad::ParamGroup::generation, memory_dim, attn_dim),
      score_(store, name + ".score", ad::ParamGroup::generation, attn_dim, 1, false) {}

AttentionMemory Attention::prepare(ad::Graph& g, std::span<const ad::Var> states, const ad::Matrix& mask) const {
  if (states.empty() || static_cast<Eigen::Index>(states.size()) != mask.rows()) {
    throw std::invalid_argument("attention: memory/mask size mismatch");
  }
  AttentionMemory m;
  m.states.assign(states.begin(), states.end());
  m.mask = mask;
  for (const ad::Var& s : states) m.keys.push_back(key_(g, s));
  return m;
}

AttentionResult Attention::operator()(ad::Graph& g, ad::Var query, const AttentionMemory& memory) const {
  for (Eigen::Index c = 0; c < memory.mask.cols(); ++c) {
    if (memory.mask.col(c).sum() == 0.0) throw std::invalid_argument("attention: every position masked");
  }
  ad::Var q = query_(g, query);
  std::vector<ad::Var> scores;
  scores.reserve(memory.keys.size());
  for (const ad::Var& k : memory.keys) scores.push_back(score_(g, ad::tanh(ad::add(q, k))));
  ad::Var weights = ad::masked_softmax_cols(ad::concat_rows(scores), memory.mask);
  std::vector<ad::Var> parts;
  parts.reserve(memory.states.size());
  for (std::size_t i = 0; i < memory.states.size(); ++i) {
    parts.push_back(ad::mul_row_broadcast(memory.states[i], ad::slice_rows(weights, static_cast<Eigen::Index>(i), 1)));
  }
  return {ad::add_n(parts), weights};
}

Decoder::Decoder(nn::ParameterStore& store, const std::string& name, ad::Parameter& embedding, Eigen::Index init_dim,
                 Eigen::Index memory_dim, Eigen::Index hidden, Eigen::Index vocab)
    : embedding_(&embedding),
      init_(store, name + ".init", ad::ParamGroup::generation, init_dim, hidden),
      attention_(store, name + ".attn", hidden, memory_dim, hidden),
      cell_(store, name + ".gru", ad::ParamGroup::generation, embedding.value.rows() + memory_dim, hidden),
      fusion_(store, name + ".fusion", ad::ParamGroup::generation, embedding.value.rows() + memory_dim + hidden,
              hidden),
      output_(store, name + ".out", ad::ParamGroup::generation, hidden, vocab) {}

ad::Var Decoder::init_state(ad::Graph& g, std::span<const ad::Var> parts) const {
  return init_(g, ad::concat_rows(parts));
}

ad::Var Decoder::embed(ad::Graph& g, std::span<const int> ids) const { return ad::lookup(g, *embedding_, ids); }

DecoderStep Decoder::step(ad::Graph& g, ad::Var prev_embedding, ad::Var s_prev, const AttentionMemory& memory,
                          const StepRegularizer& reg) const {
  ad::Var e = prev_embedding;
  if (reg.dropout > 0.0 && reg.rng != nullptr) e = ad::dropout(e, reg.dropout, *reg.rng);
  AttentionResult att = attention_(g, s_prev, memory);
  const ad::Var cell_in[] = {e, att.context};
  ad::Var s = cell_(g, ad::concat_rows(cell_in), s_prev);
  const ad::Var fuse_in[] = {e, att.context, s};
  ad::Var fused = ad::tanh(fusion_(g, ad::concat_rows(fuse_in)));
  if (reg.dropout > 0.0 && reg.rng != nullptr) fused = ad::dropout(fused, reg.dropout, *reg.rng);
  return {s, att.context, output_(g, fused), att.weights};
}

int argmax_excluding(const ad::Matrix& logits, Eigen::Index col, std::span<const int> excluded) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (std::find(excluded.begin(), excluded.end(), static_cast<int>(r)) != excluded.end()) continue;
    if (best < 0 || logits(r, col) > best_v) {
      best = static_cast<int>(r);
      best_v = logits(r, col);
    }
  }
  return best;
}

std::vector<std::vector<int>> Decoder::decode(ad::Graph& g, ad::Var s0, const AttentionMemory& memory, int max_len,
                                              DecodeStrategy strategy, std::mt19937_64* rng) const {
  if (max_len < 1) throw std::invalid_argument("decode: max_len must be >= 1");
  if (strategy == DecodeStrategy::sample && rng == nullptr) throw std::invalid_argument("decode: sampling needs rng");
  const auto batch = static_cast<std::size_t>(s0.cols());
  static constexpr int kNever[] = {Vocabulary::kPad, Vocabulary::kSos};
  std::vector<std::vector<int>> out(batch);
  std::vector<bool> done(batch, false);
  std::vector<int> prev(batch, Vocabulary::kSos);
  ad::Var s = s0;
  for (int t = 0; t < max_len; ++t) {
    DecoderStep st = step(g, embed(g, prev), s, memory);
    s = st.state;
    const ad::Matrix& logits = st.logits.value();
    bool all_done = true;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto col = static_cast<Eigen::Index>(b);
      int tok = Vocabulary::kEos;
      if (!done[b]) {
        if (strategy == DecodeStrategy::greedy) {
          tok = argmax_excluding(logits, col, kNever);
        } else {
          ad::Vector p = ad::softmax_cols(logits.col(col));
          for (int ex : kNever) p(ex) = 0.0;
          std::discrete_distribution<int> pick(p.data(), p.data() + p.size());
          tok = pick(*rng);
        }
        if (tok == Vocabulary::kEos) {
          done[b] = true;
        } else {
          out[b].push_back(tok);
        }
      }
      prev[b] = tok;
      all_done = all_done && done[b];
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace gtm
