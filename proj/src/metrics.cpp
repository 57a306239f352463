#include "gtm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace gtm {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const Sentence& s, int n) {
  std::map<Ngram, int> counts;
  const auto k = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + k <= s.size(); ++i) ++counts[Ngram(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + k))];
  return counts;
}

void check_order(int n) {
  if (n < 1 || n > 2) throw MetricError("n-gram order must be 1 or 2");
}

double cosine(const ad::Vector& a, const ad::Vector& b) {
  // sqrt of the product keeps cosine(a, a) exactly 1.
  const double aa = a.dot(a);
  const double bb = b.dot(b);
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return a.dot(b) / std::sqrt(aa * bb);
}

std::vector<const ad::Vector*> known(const Sentence& s, const EmbeddingTable& table) {
  std::vector<const ad::Vector*> out;
  for (const std::string& w : s) {
    if (const ad::Vector* v = table.find(w)) out.push_back(v);
  }
  return out;
}

double directional_greedy(std::span<const ad::Vector* const> from, std::span<const ad::Vector* const> to) {
  double sum = 0.0;
  for (const ad::Vector* f : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const ad::Vector* t : to) best = std::max(best, cosine(*f, *t));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

void check_pairs(std::size_t a, std::size_t b) {
  if (a != b) throw MetricError("candidate and reference counts differ (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
  if (a == 0) throw MetricError("no examples");
}

}  // namespace

double bleu_n(std::span<const Sentence> candidates, std::span<const Sentence> references, int n) {
  check_order(n);
  check_pairs(candidates.size(), references.size());
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    long matched = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto cand = ngram_counts(candidates[i], k);
      const auto ref = ngram_counts(references[i], k);
      for (const auto& [g, c] : cand) {
        const auto it = ref.find(g);
        matched += std::min(c, it == ref.end() ? 0 : it->second);
        total += c;
      }
    }
    if (matched == 0 || total == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }
  std::size_t c = 0, r = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c += candidates[i].size();
    r += references[i].size();
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum / n);
}

double distinct_n(std::span<const Sentence> candidates, int n) {
  check_order(n);
  std::set<Ngram> unique;
  std::size_t total = 0;
  for (const Sentence& s : candidates) {
    for (const auto& [g, c] : ngram_counts(s, n)) {
      unique.insert(g);
      total += static_cast<std::size_t>(c);
    }
  }
  if (total == 0) throw MetricError("distinct_n: no " + std::to_string(n) + "-grams");
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

void EmbeddingTable::add(const std::string& token, ad::Vector v) {
  if (dim_ == 0) dim_ = static_cast<std::size_t>(v.size());
  if (static_cast<std::size_t>(v.size()) != dim_) {
    throw MetricError("embedding for '" + token + "' has dimension " + std::to_string(v.size()) + ", expected " +
                      std::to_string(dim_));
  }
  table_[token] = std::move(v);
}

const ad::Vector* EmbeddingTable::find(const std::string& token) const {
  const auto it = table_.find(token);
  return it == table_.end() ? nullptr : &it->second;
}

EmbeddingTable EmbeddingTable::read(std::istream& is) {
  EmbeddingTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> vals;
    std::string field;
    while (ls >> field) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw MetricError("embedding table line " + std::to_string(line_no) + ": bad number '" + field + "'");
      }
    }
    // word2vec header: "<count> <dim>"
    if (line_no == 1 && vals.size() == 1 && token.find_first_not_of("0123456789") == std::string::npos) continue;
    if (vals.empty()) throw MetricError("embedding table line " + std::to_string(line_no) + ": no values");
    try {
      t.add(token, Eigen::Map<const ad::Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    } catch (const MetricError& e) {
      throw MetricError("embedding table line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (t.size() == 0) throw MetricError("embedding table is empty");
  return t;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MetricError("cannot read embedding table " + path.string());
  return read(is);
}

ad::Vector extrema_vector(std::span<const ad::Vector* const> vectors) {
  if (vectors.empty()) throw std::invalid_argument("extrema_vector: no vectors");
  ad::Vector out = *vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    const ad::Vector& v = *vectors[i];
    for (Eigen::Index d = 0; d < out.size(); ++d) {
      const double a = std::abs(v(d)), b = std::abs(out(d));
      if (a > b || (a == b && v(d) > out(d))) out(d) = v(d);
    }
  }
  return out;
}

double embedding_average(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table) {
  const auto c = known(cand, table), r = known(ref, table);
  if (c.empty() || r.empty()) return 0.0;
  ad::Vector mc = ad::Vector::Zero(static_cast<Eigen::Index>(table.dim()));
  ad::Vector mr = mc;
  for (const ad::Vector* v : c) mc += *v;
  for (const ad::Vector* v : r) mr += *v;
  return cosine(mc / static_cast<double>(c.size()), mr / static_cast<double>(r.size()));
}

double embedding_extrema(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table) {
  const auto c = known(cand, table), r = known(ref, table);
  if (c.empty() || r.empty()) return 0.0;
  return cosine(extrema_vector(c), extrema_vector(r));
}

double embedding_greedy(const Sentence& cand, const Sentence& ref, const EmbeddingTable& table) {
  const auto c = known(cand, table), r = known(ref, table);
  if (c.empty() || r.empty()) return 0.0;
  return 0.5 * (directional_greedy(c, r) + directional_greedy(r, c));
}

EmbeddingScores embedding_metrics(std::span<const Sentence> candidates, std::span<const Sentence> references,
                                  const EmbeddingTable& table) {
  check_pairs(candidates.size(), references.size());
  EmbeddingScores s;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    s.average += embedding_average(candidates[i], references[i], table);
    s.extrema += embedding_extrema(candidates[i], references[i], table);
    s.greedy += embedding_greedy(candidates[i], references[i], table);
  }
  const double n = static_cast<double>(candidates.size());
  auto finish = [n](double v) { return std::clamp(v / n, 0.0, 1.0); };
  s.average = finish(s.average);
  s.extrema = finish(s.extrema);
  s.greedy = finish(s.greedy);
  return s;
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  return {{"bleu1", r.bleu1},   {"bleu2", r.bleu2}, {"emb_average", r.emb_average}, {"emb_extrema", r.emb_extrema},
          {"emb_greedy", r.emb_greedy}, {"dist1", r.dist1}, {"dist2", r.dist2},    {"n_examples", r.n_examples}};
}

MetricReport compute_report(std::span<const Sentence> predictions, std::span<const Sentence> references,
                            const EmbeddingTable& table) {
  check_pairs(predictions.size(), references.size());
  MetricReport r;
  r.n_examples = predictions.size();
  r.bleu1 = bleu_n(predictions, references, 1);
  r.bleu2 = bleu_n(predictions, references, 2);
  const EmbeddingScores e = embedding_metrics(predictions, references, table);
  r.emb_average = e.average;
  r.emb_extrema = e.extrema;
  r.emb_greedy = e.greedy;
  r.dist1 = distinct_n(predictions, 1);
  r.dist2 = distinct_n(predictions, 2);
  return r;
}

std::vector<Sentence> read_sentences(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MetricError("cannot read " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    Sentence s;
    std::string w;
    while (ls >> w) s.push_back(w);
    out.push_back(std::move(s));
  }
  return out;
}

MetricReport evaluate(const std::filesystem::path& predictions, const std::filesystem::path& references,
                      const std::filesystem::path& embeddings) {
  const auto preds = read_sentences(predictions);
  const auto refs = read_sentences(references);
  if (preds.size() != refs.size()) {
    throw MetricError("line count mismatch: " + std::to_string(preds.size()) + " predictions, " +
                      std::to_string(refs.size()) + " references");
  }
  return compute_report(preds, refs, EmbeddingTable::load(embeddings));
}

}  // namespace gtm
