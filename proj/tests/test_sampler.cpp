#include <filesystem>
#include <fstream>
#include <sstream>

#include "contract.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "gtm/sampler.hpp"
#include "json.hpp"

using namespace gtm;

namespace {

GenerateOptions opts(DecodeStrategy s, int n, int max_len = 12) {
  GenerateOptions o;
  o.strategy = s;
  o.n_samples = n;
  o.max_len = max_len;
  return o;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("generation encodes the post and nothing else") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 31);
    contract::RecordingView view{InferenceView(*t.model)};
    const Tokens& post = t.corpus[0].post;
    const auto out = generate_with(view, std::span<const std::string>(post), 5, opts(DecodeStrategy::sample, 3));
    CHECK(out.size() == 3);
    CHECK(view.encoder_calls == 1);
    int len = 0;
    const auto ids = encode_sentence(post, t.model->vocab(), 12, len);
    const std::vector<int> expect(ids.begin(), ids.begin() + len);
    REQUIRE(view.encoded.size() == 3);
    for (const auto& row : view.encoded) CHECK(row == expect);
    // Same result as the plain facade.
    CHECK(contract::same_results(out, generate(post, *t.model, 5, opts(DecodeStrategy::sample, 3))));
  }

  TEST_CASE("training-only parameters do not influence generation") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 32);
    const Tokens& post = t.corpus[1].post;
    const auto before_s = generate(post, *t.model, 9, opts(DecodeStrategy::sample, 4));
    const auto before_g = generate(post, *t.model, 9, opts(DecodeStrategy::greedy, 1));
    CHECK(contract::poison_training_only(*t.model) >= 10);
    const auto after_s = generate(post, *t.model, 9, opts(DecodeStrategy::sample, 4));
    const auto after_g = generate(post, *t.model, 9, opts(DecodeStrategy::greedy, 1));
    CHECK(contract::same_results(before_s, after_s));
    CHECK(contract::same_results(before_g, after_g));
  }

  TEST_CASE("the answer latent reaches the question prior") {
    auto t = fixtures::tiny(2, fixtures::small_config(), 33);
    const InferenceView view(*t.model);
    int len = 0;
    const auto ids = encode_sentence(t.corpus[0].post, view.vocab(), 12, len);
    ad::Graph g;
    const auto enc = view.encode_post(g, make_sequence_batch(ids, len));
    const ad::Var z_t = g.constant(ad::Matrix::Constant(2, 1, 0.1));
    const auto bridge = view.context_bridge(g, z_t, enc.summary);
    const auto a = view.prior_question(g, bridge, z_t, g.constant(ad::Matrix::Zero(2, 1)));
    const auto b = view.prior_question(g, bridge, z_t, g.constant(ad::Matrix::Constant(2, 1, 1.0)));
    CHECK((a.mu.value() - b.mu.value()).norm() > 1e-6);
  }

  TEST_CASE("seeded sampling is reproducible") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 34);
    const Tokens& post = t.corpus[2].post;
    const auto a = generate(post, *t.model, 77, opts(DecodeStrategy::sample, 5));
    const auto b = generate(post, *t.model, 77, opts(DecodeStrategy::sample, 5));
    CHECK(contract::same_results(a, b));
    const auto c = generate(post, *t.model, 78, opts(DecodeStrategy::sample, 5));
    CHECK_FALSE(contract::same_results(a, c));
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].sample_index == static_cast<int>(i));
      CHECK(a[i].seed == 77);
      CHECK(a[i].latents.type_distribution.sum() == doctest::Approx(1.0));
      CHECK(a[i].question_ids.size() <= 12);
    }
  }

  TEST_CASE("greedy ignores the seed and uses latent means") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 35);
    const Tokens& post = t.corpus[3].post;
    const auto a = generate(post, *t.model, 1, opts(DecodeStrategy::greedy, 1));
    const auto b = generate(post, *t.model, 999, opts(DecodeStrategy::greedy, 1));
    CHECK(contract::same_results(a, b));
    CHECK(a[0].latents.z_t == a[0].latents.triple.mu);
    CHECK(a[0].latents.z_a == a[0].latents.answer_prior.mu);
    CHECK(a[0].latents.z_q == a[0].latents.question_prior.mu);
  }

  TEST_CASE("invalid requests") {
    auto t = fixtures::tiny(2, fixtures::small_config(), 36);
    const Tokens empty;
    CHECK_THROWS_AS(generate(empty, *t.model, 1, opts(DecodeStrategy::sample, 1)), std::invalid_argument);
    CHECK_THROWS_AS(generate(t.corpus[0].post, *t.model, 1, opts(DecodeStrategy::sample, 0)), std::invalid_argument);
    CHECK_THROWS_AS(generate(t.corpus[0].post, *t.model, 1, opts(DecodeStrategy::sample, 1, 1)), std::invalid_argument);
  }

  TEST_CASE("batch generation is per-post seeded") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 37);
    std::vector<Tokens> posts;
    for (const auto& tr : t.corpus) posts.push_back(tr.post);
    std::ostringstream all;
    batch_generate(posts, *t.model, 100, opts(DecodeStrategy::sample, 2), all);
    std::istringstream lines(all.str());
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(lines, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 8);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].at("post") == join(posts[i / 2]));
      CHECK(rows[i].at("seed") == 100 + i / 2);
      CHECK(rows[i].at("sample") == i % 2);
    }
    // Post 2 alone with its seed gives the same lines.
    std::ostringstream one;
    const std::vector<Tokens> just = {posts[2]};
    batch_generate(just, *t.model, 102, opts(DecodeStrategy::sample, 2), one);
    std::istringstream ol(one.str());
    std::getline(ol, line);
    CHECK(nlohmann::json::parse(line) == rows[4]);
  }

  TEST_CASE("read_posts accepts JSON lines and plain text") {
    const auto path = std::filesystem::temp_directory_path() / "gtm_test_posts.txt";
    {
      std::ofstream os(path);
      os << "{\"post\": \"i got a dog .\", \"id\": 3}\n\nhello there\n";
    }
    const auto posts = read_posts(path);
    REQUIRE(posts.size() == 2);
    CHECK(posts[0] == Tokens{"i", "got", "a", "dog", "."});
    CHECK(posts[1] == Tokens{"hello", "there"});
  }

  TEST_CASE("reconstruction returns one decode per example") {
    auto t = fixtures::tiny(5, fixtures::small_config(), 38);
    const auto r = reconstruct_questions(*t.model, t.encoded, 12, 2);
    REQUIRE(r.size() == 5);
    for (const auto& x : r) {
      CHECK(x.question_ids.size() <= 12);
      CHECK(x.type_distribution.size() == kNumQuestionTypes);
    }
  }
}
