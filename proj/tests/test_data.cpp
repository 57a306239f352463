#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "curated_questions.hpp"
#include "doctest.h"
#include "gtm/data.hpp"
#include "json.hpp"

using namespace gtm;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gtm_test_" + name);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("question type classification") {
    CHECK(classify_question_type(tokenize("What do you mean ?")) == QuestionType::what);
    CHECK(classify_question_type(tokenize("Did you eat something special ?")) == QuestionType::do_);
    CHECK(classify_question_type(tokenize("tell me more .")) == QuestionType::what);
    CHECK_THROWS_AS(classify_question_type(Tokens{}), std::invalid_argument);
    for (const auto& q : curated::kQuestions) {
      CAPTURE(q.text);
      CHECK(classify_question_type(tokenize(q.text)) == q.type);
    }
  }

  TEST_CASE("earliest interrogative decides the type") {
    CHECK(classify_question_type(tokenize("is it why ?")) == QuestionType::be);
    CHECK(classify_question_type(tokenize("ok why is it ?")) == QuestionType::why);
    // Appending words after the first match never changes the type.
    const Tokens base = tokenize("so where did it go");
    Tokens longer = base;
    for (const char* w : {"what", "who", "can", "is"}) {
      longer.push_back(w);
      CHECK(classify_question_type(longer) == classify_question_type(base));
    }
  }

  TEST_CASE("question type names and surface forms") {
    CHECK(kNumQuestionTypes == 9);
    CHECK(to_string(QuestionType::do_) == "DO");
    CHECK(question_type_from_string("BE") == QuestionType::be);
    CHECK_THROWS(question_type_from_string("WHICH"));
    std::set<std::string_view> be(surface_forms(QuestionType::be).begin(), surface_forms(QuestionType::be).end());
    CHECK(be == std::set<std::string_view>{"is", "am", "are", "was", "were"});
    CHECK(surface_forms(QuestionType::can).size() == 2);
    CHECK(surface_forms(QuestionType::do_).size() == 3);
  }

  TEST_CASE("make_triple validates and types") {
    const Triple t = make_triple(tokenize("i ate out ."), tokenize("where did you eat ?"), tokenize("a cafe ."));
    CHECK(t.question_type == QuestionType::where);
    CHECK_THROWS(make_triple({}, tokenize("why ?"), tokenize("x")));
    CHECK_THROWS(make_triple(tokenize("x"), {}, tokenize("x")));
    CHECK_THROWS(make_triple(tokenize("x"), tokenize("why ?"), {}));
  }

  TEST_CASE("vocabulary by frequency") {
    const std::vector<Triple> corpus = {make_triple({"a", "b"}, {"a", "c"}, {"a", "b"})};
    const Vocabulary v = build_vocabulary(corpus, 2);
    REQUIRE(v.size() == 6);
    CHECK(v.token(0) == "PAD");
    CHECK(v.token(1) == "UNK");
    CHECK(v.token(2) == "SOS");
    CHECK(v.token(3) == "EOS");
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");
    CHECK(v.id("c") == Vocabulary::kUnk);
    CHECK_THROWS_AS(build_vocabulary(corpus, 0), std::invalid_argument);
    CHECK_THROWS(build_vocabulary(std::vector<Triple>{}, 10));
  }

  TEST_CASE("vocabulary ties keep the earlier first occurrence") {
    const std::vector<Triple> corpus = {make_triple({"z", "y"}, {"y", "z"}, {"x", "w"})};
    const Vocabulary v = build_vocabulary(corpus, 3);
    CHECK(v.token(4) == "z");
    CHECK(v.token(5) == "y");
    CHECK(v.token(6) == "x");
  }

  TEST_CASE("vocabulary frequencies are order invariant") {
    auto corpus = generate_synthetic_corpus(5, 300);
    const Vocabulary a = build_vocabulary(corpus, 1000);
    std::reverse(corpus.begin(), corpus.end());
    const Vocabulary b = build_vocabulary(corpus, 1000);
    CHECK(std::set<std::string>(a.tokens().begin(), a.tokens().end()) ==
          std::set<std::string>(b.tokens().begin(), b.tokens().end()));
  }

  TEST_CASE("vocabulary save and load") {
    const auto corpus = generate_synthetic_corpus(1, 50);
    const Vocabulary v = build_vocabulary(corpus, 40000);
    const auto path = temp_path("vocab.txt");
    v.save(path);
    std::ifstream is(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == v.size());
    CHECK(lines[0] == "PAD");
    CHECK(lines[3] == "EOS");
    CHECK(Vocabulary::load(path) == v);
    std::istringstream bad("UNK\nPAD\nSOS\nEOS\n");
    CHECK_THROWS(Vocabulary::read(bad));
  }

  TEST_CASE("encode_sentence pads, truncates and maps OOV") {
    const Vocabulary v(std::vector<std::string>{"hi", "there"});
    int len = 0;
    auto ids = encode_sentence(Tokens{"hi"}, v, 4, len);
    CHECK(ids == std::vector<int>{v.id("hi"), Vocabulary::kEos, Vocabulary::kPad, Vocabulary::kPad});
    CHECK(len == 2);
    Tokens forty(40, "there");
    ids = encode_sentence(forty, v, 30, len);
    CHECK(len == 30);
    CHECK(ids.size() == 30);
    CHECK(ids[28] == v.id("there"));
    CHECK(ids[29] == Vocabulary::kEos);
    ids = encode_sentence(Tokens{"hi", "stranger"}, v, 5, len);
    CHECK(ids[1] == Vocabulary::kUnk);
  }

  TEST_CASE("encoded triples round trip through decode_ids") {
    const auto corpus = generate_synthetic_corpus(2, 100);
    const Vocabulary v = build_vocabulary(corpus, 40000);
    for (const Triple& t : corpus) {
      const EncodedTriple e = encode_triple(t, v, 30);
      CHECK(decode_ids(e.question_ids, v) == t.question);
      CHECK(decode_ids(e.post_ids, v) == t.post);
      CHECK(e.question_type_id == static_cast<int>(t.question_type));
      for (int i = 0; i < 30; ++i) {
        const bool live = i < e.answer_len;
        CHECK((e.answer_ids[static_cast<std::size_t>(i)] == Vocabulary::kPad) == !live);
      }
    }
  }

  TEST_CASE("corpus files") {
    const auto path = temp_path("corpus.jsonl");
    const auto corpus = generate_synthetic_corpus(3, 3);
    write_corpus(path, corpus);
    const auto back = load_corpus(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back[i].post == corpus[i].post);
      CHECK(back[i].question == corpus[i].question);
      CHECK(back[i].question_type == corpus[i].question_type);
    }
    std::istringstream missing(
        "{\"post\":\"a\",\"question\":\"why ?\",\"answer\":\"b\"}\n{\"post\":\"a\",\"question\":\"why ?\"}\n");
    try {
      read_corpus(missing);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("answer") != std::string::npos);
    }
    std::istringstream malformed("{not json\n");
    CHECK_THROWS_AS(read_corpus(malformed), DataError);
    std::istringstream empty("");
    CHECK(read_corpus(empty).empty());
  }

  TEST_CASE("synthetic corpus is seed-deterministic") {
    const auto a = generate_synthetic_corpus(7, 10);
    const auto b = generate_synthetic_corpus(7, 10);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(corpus_line(a[i]) == corpus_line(b[i]));
    CHECK_THROWS(generate_synthetic_corpus(7, 0));
  }

  TEST_CASE("synthetic corpus covers all types and declared types match") {
    const auto samples = generate_synthetic_samples(11, 10000);
    std::set<QuestionType> types;
    for (const auto& s : samples) {
      types.insert(s.triple.question_type);
      CHECK(s.triple.question_type == s.declared_type);
    }
    CHECK(types.size() == 9);
  }

  TEST_CASE("every synthetic post maps to at least two questions") {
    const auto corpus = generate_synthetic_corpus(13, 2000);
    std::map<std::string, std::set<std::string>> by_post;
    for (const Triple& t : corpus) by_post[join(t.post)].insert(join(t.question));
    for (const auto& [post, qs] : by_post) {
      CAPTURE(post);
      CHECK(qs.size() >= 2);
    }
  }

  TEST_CASE("grammar templates admit several questions per post and per answer") {
    const SyntheticGrammar& g = bundled_grammar();
    std::set<std::string> words;
    for (const auto& topic : g.topics) {
      std::set<std::string> questions;
      for (const auto& a : topic.answers) {
        CHECK(a.questions.size() >= 2);
        for (const auto& q : a.questions) questions.insert(q.text);
      }
      CHECK(questions.size() >= 2);
    }
    // Word types reachable from the grammar, counted on a large sample.
    for (const Triple& t : generate_synthetic_corpus(17, 20000)) {
      for (const auto* s : {&t.post, &t.question, &t.answer}) words.insert(s->begin(), s->end());
    }
    CHECK(words.size() <= 200);
  }

  TEST_CASE("grammar validation rejects bad templates") {
    const char* mistyped = R"({"version":1,"fillers":{},"topics":[{"name":"x","post":"p .","answers":[
      {"text":"a .","questions":[{"type":"WHY","text":"where is it ?"},{"type":"WHY","text":"why ?"}]}]}]})";
    CHECK_THROWS(parse_grammar(mistyped));
    const char* unknown_slot = R"({"version":1,"fillers":{},"topics":[{"name":"x","post":"p {thing} .","answers":[
      {"text":"a .","questions":[{"type":"WHY","text":"why ?"},{"type":"WHY","text":"why so ?"}]}]}]})";
    CHECK_THROWS(parse_grammar(unknown_slot));
  }
}
