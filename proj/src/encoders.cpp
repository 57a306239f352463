#include "gtm/encoders.hpp"

#include <algorithm>
#include <stdexcept>

#include "gtm/data.hpp"

namespace gtm {

ad::RowVector SequenceBatch::step_mask(std::size_t t) const {
  ad::RowVector m(static_cast<Eigen::Index>(batch()));
  for (std::size_t b = 0; b < batch(); ++b) m(static_cast<Eigen::Index>(b)) = static_cast<int>(t) < lengths[b] ? 1.0 : 0.0;
  return m;
}

ad::Matrix SequenceBatch::mask() const {
  ad::Matrix m(static_cast<Eigen::Index>(steps()), static_cast<Eigen::Index>(batch()));
  for (std::size_t t = 0; t < steps(); ++t) m.row(static_cast<Eigen::Index>(t)) = step_mask(t);
  return m;
}

SequenceBatch make_sequence_batch(std::span<const std::vector<int>* const> rows, std::span<const int> lengths) {
  if (rows.size() != lengths.size() || rows.empty()) throw std::invalid_argument("make_sequence_batch: bad sizes");
  SequenceBatch sb;
  sb.lengths.assign(lengths.begin(), lengths.end());
  int steps = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (lengths[b] < 1) throw std::invalid_argument("make_sequence_batch: length must be >= 1");
    if (static_cast<std::size_t>(lengths[b]) > rows[b]->size()) {
      throw std::invalid_argument("make_sequence_batch: length exceeds padded row");
    }
    steps = std::max(steps, lengths[b]);
  }
  sb.ids.assign(static_cast<std::size_t>(steps), std::vector<int>(rows.size(), Vocabulary::kPad));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (int t = 0; t < steps; ++t) {
      if (static_cast<std::size_t>(t) < rows[b]->size()) sb.ids[static_cast<std::size_t>(t)][b] = (*rows[b])[static_cast<std::size_t>(t)];
    }
  }
  return sb;
}

SequenceBatch make_sequence_batch(const std::vector<int>& ids, int length) {
  const std::vector<int>* rows[] = {&ids};
  const int lengths[] = {length};
  return make_sequence_batch(rows, lengths);
}

UtteranceEncoder::UtteranceEncoder(nn::ParameterStore& store, const std::string& name, ad::Parameter& embedding,
                                   Eigen::Index hidden)
    : embedding_(&embedding), rnn_(store, name, ad::ParamGroup::generation, embedding.value.rows(), hidden) {}

UtteranceEncoding UtteranceEncoder::encode(ad::Graph& g, const SequenceBatch& batch) const {
  if (batch.steps() == 0) throw std::invalid_argument("encode_utterance: empty sequence");
  for (int len : batch.lengths) {
    if (len < 1) throw std::invalid_argument("encode_utterance: length must be >= 1");
  }
  std::vector<ad::Var> inputs;
  std::vector<ad::RowVector> masks;
  inputs.reserve(batch.steps());
  for (std::size_t t = 0; t < batch.steps(); ++t) {
    inputs.push_back(ad::lookup(g, *embedding_, batch.ids[t]));
    masks.push_back(batch.step_mask(t));
  }
  nn::BiGru::Output out = rnn_.run(g, inputs, masks);
  UtteranceEncoding enc;
  enc.summary = out.summary;
  enc.mask = batch.mask();
  enc.token_states.reserve(batch.steps());
  for (std::size_t t = 0; t < batch.steps(); ++t) {
    const ad::Var parts[] = {out.fwd_states[t], out.bwd_states[t]};
    enc.token_states.push_back(ad::concat_rows(parts));
  }
  return enc;
}

TripleEncoder::TripleEncoder(nn::ParameterStore& store, const std::string& name, Eigen::Index in,
                             Eigen::Index hidden)
    : rnn_(store, name, ad::ParamGroup::recognition, in, hidden) {}

TripleEncoding TripleEncoder::encode(ad::Graph& g, std::span<const ad::Var> summaries) const {
  if (summaries.empty()) throw std::invalid_argument("encode_triple_sequence: no utterances");
  for (const ad::Var& s : summaries) {
    if (s.rows() != input_dim()) {
      throw std::invalid_argument("encode_triple_sequence: expected dim " + std::to_string(input_dim()) + ", got " +
                                  std::to_string(s.rows()));
    }
  }
  return {rnn_.run(g, summaries, {}).summary};
}

}  // namespace gtm
