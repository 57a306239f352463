#ifndef GTM_ENCODERS_HPP
#define GTM_ENCODERS_HPP

#include <span>
#include <vector>

#include "gtm/nn.hpp"

namespace gtm {

/// Time-major ids for a batch of padded sentences, cut at the longest true
/// length in the batch.
struct SequenceBatch {
  std::vector<std::vector<int>> ids;  // [step][column]
  std::vector<int> lengths;
  std::size_t steps() const { return ids.size(); }
  std::size_t batch() const { return lengths.size(); }
  /// 0/1 row marking columns still inside their sentence at step t.
  ad::RowVector step_mask(std::size_t t) const;
  /// steps x batch mask.
  ad::Matrix mask() const;
};

/// Builds a batch from padded id rows; lengths must be >= 1.
SequenceBatch make_sequence_batch(std::span<const std::vector<int>* const> rows, std::span<const int> lengths);
SequenceBatch make_sequence_batch(const std::vector<int>& ids, int length);

struct UtteranceEncoding {
  ad::Var summary;                    // 2H x B
  std::vector<ad::Var> token_states;  // per step, 2H x B
  ad::Matrix mask;                    // steps x B
};

struct TripleEncoding {
  ad::Var summary;  // 2H_t x B
};

/// Embedding lookup plus one bidirectional GRU layer.
class UtteranceEncoder {
 public:
  UtteranceEncoder() = default;
  UtteranceEncoder(nn::ParameterStore& store, const std::string& name, ad::Parameter& embedding,
                   Eigen::Index hidden);

  UtteranceEncoding encode(ad::Graph& g, const SequenceBatch& batch) const;
  Eigen::Index output_dim() const { return 2 * rnn_.hidden_dim(); }

 private:
  ad::Parameter* embedding_{nullptr};
  nn::BiGru rnn_;
};

/// Bidirectional GRU over the sequence of utterance summaries.
class TripleEncoder {
 public:
  TripleEncoder() = default;
  TripleEncoder(nn::ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden);

  /// Training uses (h_p, h_q, h_a); inference passes h_p alone.
  TripleEncoding encode(ad::Graph& g, std::span<const ad::Var> summaries) const;
  Eigen::Index input_dim() const { return rnn_.fwd.in_dim(); }
  Eigen::Index output_dim() const { return 2 * rnn_.hidden_dim(); }

 private:
  nn::BiGru rnn_;
};

}  // namespace gtm

#endif  // GTM_ENCODERS_HPP
