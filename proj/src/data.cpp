#include "gtm/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace gtm {

extern const char* const kSyntheticGrammarJson;

namespace {

constexpr std::array<std::string_view, kNumQuestionTypes> kTypeNames = {
    "WHAT", "WHEN", "WHERE", "WHO", "WHY", "HOW", "CAN", "DO", "BE"};

constexpr std::array<std::string_view, 1> kWhat = {"what"};
constexpr std::array<std::string_view, 1> kWhen = {"when"};
constexpr std::array<std::string_view, 1> kWhere = {"where"};
constexpr std::array<std::string_view, 1> kWho = {"who"};
constexpr std::array<std::string_view, 1> kWhy = {"why"};
constexpr std::array<std::string_view, 1> kHow = {"how"};
constexpr std::array<std::string_view, 2> kCan = {"can", "could"};
constexpr std::array<std::string_view, 3> kDo = {"do", "did", "does"};
constexpr std::array<std::string_view, 5> kBe = {"is", "am", "are", "was", "were"};

}  // namespace

std::string_view to_string(QuestionType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

QuestionType question_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<QuestionType>(i);
  }
  throw DataError("unknown question type '" + std::string(name) + "'");
}

std::span<const std::string_view> surface_forms(QuestionType t) {
  switch (t) {
    case QuestionType::what: return kWhat;
    case QuestionType::when: return kWhen;
    case QuestionType::where: return kWhere;
    case QuestionType::who: return kWho;
    case QuestionType::why: return kWhy;
    case QuestionType::how: return kHow;
    case QuestionType::can: return kCan;
    case QuestionType::do_: return kDo;
    case QuestionType::be: return kBe;
  }
  return {};
}

QuestionType classify_question_type(std::span<const std::string> question) {
  if (question.empty()) throw std::invalid_argument("classify_question_type: empty question");
  for (const std::string& tok : question) {
    for (int t = 0; t < kNumQuestionTypes; ++t) {
      const auto type = static_cast<QuestionType>(t);
      for (std::string_view form : surface_forms(type)) {
        if (tok == form) return type;
      }
    }
  }
  return QuestionType::what;
}

Triple make_triple(Tokens post, Tokens question, Tokens answer) {
  if (post.empty()) throw DataError("empty post");
  if (question.empty()) throw DataError("empty question");
  if (answer.empty()) throw DataError("empty answer");
  Triple t{std::move(post), std::move(question), std::move(answer), QuestionType::what};
  t.question_type = classify_question_type(t.question);
  return t;
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ------------------------------------------------------------ vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  for (std::string_view r : kReserved) {
    token_to_id_.emplace(std::string(r), static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(r);
  }
  for (const std::string& t : tokens) {
    if (t.empty()) throw DataError("vocabulary: empty token");
    if (!token_to_id_.emplace(t, static_cast<int>(id_to_token_.size())).second) {
      throw DataError("vocabulary: duplicate token '" + t + "'");
    }
    id_to_token_.push_back(t);
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

void Vocabulary::write(std::ostream& os) const {
  for (const std::string& t : id_to_token_) os << t << '\n';
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocabulary " + path.string());
  write(os);
  if (!os) throw std::runtime_error("failed writing vocabulary " + path.string());
}

Vocabulary Vocabulary::read(std::istream& is) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  if (lines.size() < kNumReserved) throw DataError("vocabulary: fewer than 4 reserved lines");
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (lines[i] != kReserved[i]) {
      throw DataError("vocabulary: expected reserved token " + std::string(kReserved[i]), i + 1);
    }
  }
  std::vector<std::string> rest(lines.begin() + kNumReserved, lines.end());
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i].empty() || rest[i].find_first_of(" \t\r") != std::string::npos) {
      throw DataError("vocabulary: malformed token", i + kNumReserved + 1);
    }
  }
  return Vocabulary(rest);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read vocabulary " + path.string());
  return read(is);
}

Vocabulary build_vocabulary(std::span<const Triple> corpus, std::size_t max_size) {
  if (max_size < 1) throw std::invalid_argument("build_vocabulary: max_size must be >= 1");
  if (corpus.empty()) throw DataError("build_vocabulary: empty corpus");
  struct Entry {
    std::size_t count{0};
    std::size_t first{0};
  };
  std::unordered_map<std::string, Entry> counts;
  std::vector<std::string> order;
  auto visit = [&](const Tokens& toks) {
    for (const std::string& t : toks) {
      if (std::find(std::begin(Vocabulary::kReserved), std::end(Vocabulary::kReserved), t) !=
          std::end(Vocabulary::kReserved)) {
        continue;
      }
      auto [it, inserted] = counts.try_emplace(t, Entry{0, order.size()});
      if (inserted) order.push_back(t);
      ++it->second.count;
    }
  };
  for (const Triple& tr : corpus) {
    visit(tr.post);
    visit(tr.question);
    visit(tr.answer);
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    const Entry& ea = counts.at(a);
    const Entry& eb = counts.at(b);
    if (ea.count != eb.count) return ea.count > eb.count;
    return ea.first < eb.first;
  });
  if (order.size() > max_size) order.resize(max_size);
  return Vocabulary(order);
}

std::vector<int> encode_sentence(std::span<const std::string> tokens, const Vocabulary& vocab, int max_len,
                                 int& length) {
  if (max_len < 2) throw std::invalid_argument("encode_sentence: max_len must be >= 2");
  const std::size_t keep = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_len - 1));
  std::vector<int> ids(static_cast<std::size_t>(max_len), Vocabulary::kPad);
  for (std::size_t i = 0; i < keep; ++i) ids[i] = vocab.id(tokens[i]);
  ids[keep] = Vocabulary::kEos;
  length = static_cast<int>(keep) + 1;
  return ids;
}

EncodedTriple encode_triple(const Triple& t, const Vocabulary& vocab, int max_len) {
  EncodedTriple e;
  e.post_ids = encode_sentence(t.post, vocab, max_len, e.post_len);
  e.question_ids = encode_sentence(t.question, vocab, max_len, e.question_len);
  e.answer_ids = encode_sentence(t.answer, vocab, max_len, e.answer_len);
  e.question_type_id = static_cast<int>(t.question_type);
  return e;
}

Tokens decode_ids(std::span<const int> ids, const Vocabulary& vocab) {
  Tokens out;
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    if (id == Vocabulary::kPad || id == Vocabulary::kSos) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

// ------------------------------------------------------------ corpus files

Triple parse_corpus_line(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("malformed record: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw DataError("record is not an object", line_no);
  auto field = [&](const char* name) -> Tokens {
    auto it = j.find(name);
    if (it == j.end()) throw DataError(std::string("missing field '") + name + "'", line_no);
    if (!it->is_string()) throw DataError(std::string("field '") + name + "' is not a string", line_no);
    Tokens toks = tokenize(it->get<std::string>());
    if (toks.empty()) throw DataError(std::string("field '") + name + "' is empty", line_no);
    return toks;
  };
  Tokens post = field("post");
  Tokens question = field("question");
  Tokens answer = field("answer");
  return make_triple(std::move(post), std::move(question), std::move(answer));
}

std::string corpus_line(const Triple& t) {
  nlohmann::ordered_json j;
  j["post"] = join(t.post);
  j["question"] = join(t.question);
  j["answer"] = join(t.answer);
  return j.dump();
}

std::vector<Triple> read_corpus(std::istream& is) {
  std::vector<Triple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_corpus_line(line, line_no));
  }
  return out;
}

std::vector<Triple> load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read corpus " + path.string());
  return read_corpus(is);
}

void write_corpus(const std::filesystem::path& path, std::span<const Triple> corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write corpus " + path.string());
  for (const Triple& t : corpus) os << corpus_line(t) << '\n';
  if (!os) throw std::runtime_error("failed writing corpus " + path.string());
}

// ------------------------------------------------------------ synthetic corpus

namespace {

// Splits "a {slot} b" into literal and slot pieces; slot names carry a
// leading '{' marker in the returned list.
std::vector<std::string> template_pieces(const std::string& text) {
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t open = text.find('{', pos);
    if (open == std::string::npos) {
      pieces.push_back(text.substr(pos));
      break;
    }
    if (open > pos) pieces.push_back(text.substr(pos, open - pos));
    const std::size_t close = text.find('}', open);
    if (close == std::string::npos) throw DataError("grammar: unterminated slot in '" + text + "'");
    pieces.push_back(text.substr(open, close - open));
    pos = close + 1;
  }
  return pieces;
}

void check_slots(const SyntheticGrammar& g, const std::string& text) {
  for (const std::string& p : template_pieces(text)) {
    if (!p.empty() && p[0] == '{') {
      const std::string name = p.substr(1);
      auto it = g.fillers.find(name);
      if (it == g.fillers.end() || it->second.empty()) throw DataError("grammar: unknown slot '" + name + "'");
    }
  }
}

std::string render(const std::string& text, const SyntheticGrammar& g, std::map<std::string, std::size_t>& bound,
                   std::mt19937_64& rng) {
  std::string out;
  for (const std::string& p : template_pieces(text)) {
    if (p.empty() || p[0] != '{') {
      out += p;
      continue;
    }
    const std::string name = p.substr(1);
    const auto& options = g.fillers.at(name);
    auto it = bound.find(name);
    if (it == bound.end()) {
      std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
      it = bound.emplace(name, pick(rng)).first;
    }
    out += options[it->second];
  }
  return out;
}

}  // namespace

SyntheticGrammar parse_grammar(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("grammar: ") + e.what());
  }
  SyntheticGrammar g;
  try {
    g.version = j.at("version").get<int>();
    for (const auto& [name, options] : j.at("fillers").items()) {
      g.fillers[name] = options.get<std::vector<std::string>>();
    }
    for (const auto& jt : j.at("topics")) {
      GrammarTopic topic;
      topic.name = jt.at("name").get<std::string>();
      topic.post = jt.at("post").get<std::string>();
      for (const auto& ja : jt.at("answers")) {
        GrammarAnswer ans;
        ans.text = ja.at("text").get<std::string>();
        for (const auto& jq : ja.at("questions")) {
          ans.questions.push_back({question_type_from_string(jq.at("type").get<std::string>()),
                                   jq.at("text").get<std::string>()});
        }
        topic.answers.push_back(std::move(ans));
      }
      g.topics.push_back(std::move(topic));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("grammar: ") + e.what());
  }
  if (g.topics.empty()) throw DataError("grammar: no topics");
  for (const GrammarTopic& t : g.topics) {
    check_slots(g, t.post);
    std::size_t n_questions = 0;
    for (const GrammarAnswer& a : t.answers) {
      check_slots(g, a.text);
      if (a.questions.size() < 2) throw DataError("grammar: answer in topic '" + t.name + "' has < 2 phrasings");
      for (const GrammarQuestion& q : a.questions) {
        check_slots(g, q.text);
        n_questions += 1;
        if (classify_question_type(tokenize(q.text)) != q.type) {
          throw DataError("grammar: question '" + q.text + "' does not classify as " + std::string(to_string(q.type)));
        }
      }
    }
    if (n_questions < 2) throw DataError("grammar: topic '" + t.name + "' admits < 2 questions");
  }
  return g;
}

const SyntheticGrammar& bundled_grammar() {
  static const SyntheticGrammar g = parse_grammar(kSyntheticGrammarJson);
  return g;
}

std::vector<SyntheticSample> generate_synthetic_samples(std::uint64_t seed, std::size_t n_triples,
                                                        const SyntheticGrammar& grammar) {
  if (n_triples < 1) throw std::invalid_argument("generate_synthetic_corpus: n_triples must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<SyntheticSample> out;
  out.reserve(n_triples);
  for (std::size_t i = 0; i < n_triples; ++i) {
    SyntheticSample s;
    s.topic = std::uniform_int_distribution<std::size_t>(0, grammar.topics.size() - 1)(rng);
    const GrammarTopic& topic = grammar.topics[s.topic];
    s.answer = std::uniform_int_distribution<std::size_t>(0, topic.answers.size() - 1)(rng);
    const GrammarAnswer& ans = topic.answers[s.answer];
    s.question = std::uniform_int_distribution<std::size_t>(0, ans.questions.size() - 1)(rng);
    const GrammarQuestion& q = ans.questions[s.question];
    std::map<std::string, std::size_t> bound;
    const std::string post = render(topic.post, grammar, bound, rng);
    const std::string answer = render(ans.text, grammar, bound, rng);
    const std::string question = render(q.text, grammar, bound, rng);
    s.triple = make_triple(tokenize(post), tokenize(question), tokenize(answer));
    s.declared_type = q.type;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Triple> generate_synthetic_corpus(std::uint64_t seed, std::size_t n_triples) {
  std::vector<Triple> out;
  for (auto& s : generate_synthetic_samples(seed, n_triples)) out.push_back(std::move(s.triple));
  return out;
}

}  // namespace gtm
