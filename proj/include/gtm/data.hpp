#ifndef GTM_DATA_HPP
#define GTM_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace gtm {

/// Raised for malformed corpus, vocabulary or grammar input. `line` is
/// 1-based when the error is tied to a line of a file, 0 otherwise.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

using Tokens = std::vector<std::string>;

enum class QuestionType : std::uint8_t { what, when, where, who, why, how, can, do_, be };
inline constexpr int kNumQuestionTypes = 9;

std::string_view to_string(QuestionType t);
QuestionType question_type_from_string(std::string_view name);
/// Interrogative surface forms that select a type.
std::span<const std::string_view> surface_forms(QuestionType t);

/// First token (left to right) belonging to any type's surface-form set
/// decides the type; WHAT when nothing matches. Tokens must be lowercase.
QuestionType classify_question_type(std::span<const std::string> question);

struct Triple {
  Tokens post;
  Tokens question;
  Tokens answer;
  QuestionType question_type{QuestionType::what};
};

/// Validates non-empty utterances and derives the question type.
Triple make_triple(Tokens post, Tokens question, Tokens answer);

/// Lowercased whitespace tokenization.
Tokens tokenize(std::string_view text);
std::string join(std::span<const std::string> tokens);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;
  static constexpr std::string_view kReserved[kNumReserved] = {"PAD", "UNK", "SOS", "EOS"};

  Vocabulary();
  /// `tokens` excludes the reserved entries; duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(std::string_view token) const;
  static bool is_special(int id) { return id == kPad || id == kSos || id == kEos; }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  void save(const std::filesystem::path& path) const;
  void write(std::ostream& os) const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary read(std::istream& is);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

/// Keeps the max_size most frequent tokens over post+question+answer, ties
/// broken by earlier first occurrence.
Vocabulary build_vocabulary(std::span<const Triple> corpus, std::size_t max_size);

struct EncodedTriple {
  std::vector<int> post_ids;
  std::vector<int> question_ids;
  std::vector<int> answer_ids;
  int post_len{0};
  int question_len{0};
  int answer_len{0};
  int question_type_id{0};
};

/// Truncates to max_len-1 tokens, appends EOS, pads to max_len. Returns the
/// true length (EOS included) through `length`.
std::vector<int> encode_sentence(std::span<const std::string> tokens, const Vocabulary& vocab, int max_len,
                                 int& length);
EncodedTriple encode_triple(const Triple& t, const Vocabulary& vocab, int max_len);
/// Maps ids back to tokens, stopping at the first EOS and skipping PAD/SOS.
Tokens decode_ids(std::span<const int> ids, const Vocabulary& vocab);

// Corpus files: one JSON object per line with string fields post, question
// and answer. Blank lines are skipped.
Triple parse_corpus_line(std::string_view line, std::size_t line_no);
std::string corpus_line(const Triple& t);
std::vector<Triple> load_corpus(const std::filesystem::path& path);
std::vector<Triple> read_corpus(std::istream& is);
void write_corpus(const std::filesystem::path& path, std::span<const Triple> corpus);

// ------------------------------------------------------------ synthetic corpus

struct GrammarQuestion {
  QuestionType type;
  std::string text;
};

struct GrammarAnswer {
  std::string text;
  std::vector<GrammarQuestion> questions;
};

struct GrammarTopic {
  std::string name;
  std::string post;
  std::vector<GrammarAnswer> answers;
};

struct SyntheticGrammar {
  int version{0};
  std::unordered_map<std::string, std::vector<std::string>> fillers;
  std::vector<GrammarTopic> topics;
};

/// Parses and validates a grammar document (every slot resolvable, every
/// question template classifies as its declared type).
SyntheticGrammar parse_grammar(std::string_view json_text);
/// The bundled grammar compiled from data/synthetic_grammar.json.
const SyntheticGrammar& bundled_grammar();

struct SyntheticSample {
  Triple triple;
  QuestionType declared_type;
  std::size_t topic{0};
  std::size_t answer{0};
  std::size_t question{0};
};

std::vector<SyntheticSample> generate_synthetic_samples(std::uint64_t seed, std::size_t n_triples,
                                                        const SyntheticGrammar& grammar = bundled_grammar());
std::vector<Triple> generate_synthetic_corpus(std::uint64_t seed, std::size_t n_triples);

}  // namespace gtm

#endif  // GTM_DATA_HPP
