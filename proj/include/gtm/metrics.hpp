#ifndef GTM_METRICS_HPP
#define GTM_METRICS_HPP

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtm/autodiff.hpp"
#include "json.hpp"

namespace gtm {

using Sentence = std::vector<std::string>;

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corpus BLEU with uniform weights over 1..n-gram precisions (count
/// clipping, brevity penalty, no smoothing). Any zero precision gives 0.
double bleu_n(std::span<const Sentence> candidates, std::span<const Sentence> references, int n);

/// Unique n-grams across all candidates over the total n-gram count.
double distinct_n(std::span<const Sentence> candidates, int n);

/// Word vectors in word2vec text form: "token v1 v2 ..." per line, with an
/// optional leading "count dim" header.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}
  void add(const std::string& token, ad::Vector v);
  /// nullptr for OOV tokens.
  const ad::Vector* find(const std::string& token) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }

  static EmbeddingTable load(const std::filesystem::path& path);
  static EmbeddingTable read(std::istream& is);

 private:
  std::size_t dim_{0};
  std::unordered_map<std::string, ad::Vector> table_;
};

struct EmbeddingScores {
  double average{0.0};
  double extrema{0.0};
  double greedy{0.0};
};

/// Per-pair cosine scores averaged over the corpus, then clamped to [0, 1].
/// OOV words are dropped; a pair left with an empty side scores 0.
EmbeddingScores embedding_metrics(std::span<const Sentence> candidates, std::span<const Sentence> references,
                                  const EmbeddingTable& table);

/// Single-pair scores without clamping.
double embedding_average(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table);
double embedding_extrema(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table);
double embedding_greedy(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table);

/// Dimension-wise value of largest magnitude; on a magnitude tie between
/// opposite signs the larger raw value (the positive one) wins.
ad::Vector extrema_vector(std::span<const ad::Vector* const> vectors);

struct MetricReport {
  double bleu1{0.0};
  double bleu2{0.0};
  double emb_average{0.0};
  double emb_extrema{0.0};
  double emb_greedy{0.0};
  double dist1{0.0};
  double dist2{0.0};
  std::size_t n_examples{0};
};

nlohmann::ordered_json to_json(const MetricReport& r);

MetricReport compute_report(std::span<const Sentence> predictions, std::span<const Sentence> references,
                            const EmbeddingTable& table);

/// One whitespace-tokenized sentence per line.
std::vector<Sentence> read_sentences(const std::filesystem::path& path);

MetricReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& references,
                      const std::filesystem::path& embeddings);

}  // namespace gtm

#endif  // GTM_METRICS_HPP
