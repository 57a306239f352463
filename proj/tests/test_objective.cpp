#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "gtm/objective.hpp"
#include "oracle.hpp"

using namespace gtm;

TEST_SUITE("objective") {
  TEST_CASE("loss terms match the unbatched oracle") {
    auto t = fixtures::tiny(6, fixtures::small_config(), 3);
    const Batch batch = make_batch(t.encoded);
    for (const bool bow : {true, false}) {
      for (const double lambda : {0.0, 0.37, 1.0}) {
        ad::Graph g;
        const LossGraph l = fixtures::loss_at(g, *t.model, batch, lambda, 99, bow);
        // Replay the noise in the order forward_training draws it.
        std::mt19937_64 rng(99);
        const Eigen::Index dz = t.model->config().latent_dim, B = 6;
        const ad::Matrix et = standard_normal(dz, B, rng), ea = standard_normal(dz, B, rng),
                         eq = standard_normal(dz, B, rng);
        oracle::Terms sum;
        double total = 0.0;
        for (Eigen::Index b = 0; b < B; ++b) {
          const auto x = oracle::example_terms(*t.model, t.encoded[static_cast<std::size_t>(b)], et.col(b), ea.col(b),
                                               eq.col(b), bow);
          sum.rec_q += x.rec_q;
          sum.rec_a += x.rec_a;
          sum.qt += x.qt;
          sum.kl_t += x.kl_t;
          sum.kl_a += x.kl_a;
          sum.kl_q += x.kl_q;
          sum.bow += x.bow;
          total += x.total(lambda);
        }
        CHECK(l.values.rec_q == doctest::Approx(sum.rec_q / B).epsilon(1e-12));
        CHECK(l.values.rec_a == doctest::Approx(sum.rec_a / B).epsilon(1e-12));
        CHECK(l.values.qt_ce == doctest::Approx(sum.qt / B).epsilon(1e-12));
        CHECK(l.values.kl_t == doctest::Approx(sum.kl_t / B).epsilon(1e-12));
        CHECK(l.values.kl_a == doctest::Approx(sum.kl_a / B).epsilon(1e-12));
        CHECK(l.values.kl_q == doctest::Approx(sum.kl_q / B).epsilon(1e-12));
        CHECK(l.values.bow == doctest::Approx(sum.bow / B).epsilon(1e-12));
        CHECK(l.values.total == doctest::Approx(total / B).epsilon(1e-12));
        CHECK(l.values.lambda == lambda);
      }
    }
  }

  TEST_CASE("batched loss equals the mean of single-example losses") {
    auto t = fixtures::tiny(5, fixtures::small_config(), 4);
    ForwardOptions opts;
    opts.sample_latents = false;
    std::mt19937_64 rng(0);
    ad::Graph g;
    const double batched = elbo_loss(forward_training(g, *t.model, make_batch(t.encoded), opts, rng), 0.5).values.total;
    double singles = 0.0;
    for (const auto& e : t.encoded) {
      ad::Graph g1;
      singles += elbo_loss(forward_training(g1, *t.model, make_batch(std::span(&e, 1)), opts, rng), 0.5).values.total;
    }
    CHECK(batched == doctest::Approx(singles / 5).epsilon(1e-12));
  }

  TEST_CASE("full-graph gradients match finite differences") {
    auto t = fixtures::tiny(2, fixtures::small_config(), 5);
    const auto gc = fixtures::gradient_check(*t.model, make_batch(t.encoded), 0.6, 2, 17);
    CAPTURE(gc.worst);
    CHECK(gc.tensors == t.model->params().all().size());
    CHECK(gc.max_rel_error < 1e-4);
  }

  TEST_CASE("kl annealing schedule") {
    CHECK(kl_anneal(0, 100) == 0.0);
    CHECK(kl_anneal(50, 100) == 0.5);
    CHECK(kl_anneal(100, 100) == 1.0);
    CHECK(kl_anneal(1000, 100) == 1.0);
    CHECK_THROWS(kl_anneal(0, 0));
    CHECK_THROWS(kl_anneal(-1, 10));
    double prev = -1.0;
    for (int s = 0; s < 300; ++s) {
      const double l = kl_anneal(s, 120);
      CHECK(l >= prev);
      CHECK(l <= 1.0);
      prev = l;
    }
  }

  TEST_CASE("elbo rejects lambda outside [0, 1]") {
    auto t = fixtures::tiny(2, fixtures::small_config(), 6);
    ad::Graph g;
    ForwardOptions opts;
    std::mt19937_64 rng(1);
    const TrainingForward f = forward_training(g, *t.model, make_batch(t.encoded), opts, rng);
    CHECK_THROWS(elbo_loss(f, 1.5));
    CHECK_THROWS(elbo_loss(f, -0.1));
  }

  TEST_CASE("word drop replaces only ordinary tokens") {
    std::mt19937_64 rng(2);
    const std::vector<int> ids = {Vocabulary::kSos, 5, 6, 7, Vocabulary::kEos, Vocabulary::kPad};
    CHECK(word_drop(ids, 0.0, rng) == ids);
    const auto all = word_drop(ids, 1.0, rng);
    CHECK(all == std::vector<int>{Vocabulary::kSos, 1, 1, 1, Vocabulary::kEos, Vocabulary::kPad});
    std::vector<int> many(20000, 9);
    const auto dropped = word_drop(many, 0.25, rng);
    const double frac = static_cast<double>(std::count(dropped.begin(), dropped.end(), Vocabulary::kUnk)) / 20000;
    CHECK(frac == doctest::Approx(0.25).epsilon(0.05));
    CHECK_THROWS(word_drop(ids, 1.5, rng));
  }

  TEST_CASE("bag-of-words counts skip PAD, SOS and EOS") {
    const std::vector<int> a = {5, 5, 6, Vocabulary::kEos, 0}, b = {7, Vocabulary::kEos, 0, 0, 0};
    const std::vector<int>* rows[] = {&a, &b};
    const int lens[] = {4, 2};
    const ad::Matrix c = bow_counts(make_sequence_batch(rows, lens), 8);
    CHECK(c(5, 0) == 2.0);
    CHECK(c(6, 0) == 1.0);
    CHECK(c(7, 1) == 1.0);
    CHECK(c(Vocabulary::kEos, 0) == 0.0);
    CHECK(c.sum() == 4.0);
  }

  TEST_CASE("forward pass is deterministic given the rng seed") {
    auto t = fixtures::tiny(4, fixtures::small_config(), 7);
    ForwardOptions opts;
    opts.word_drop = 0.3;
    opts.dropout = 0.2;
    const Batch batch = make_batch(t.encoded);
    auto run = [&](std::uint64_t seed) {
      std::mt19937_64 rng(seed);
      ad::Graph g;
      return elbo_loss(forward_training(g, *t.model, batch, opts, rng), 1.0).values.total;
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
  }

  TEST_CASE("disabling BOW removes only the BOW term") {
    auto t = fixtures::tiny(3, fixtures::small_config(), 8);
    const Batch batch = make_batch(t.encoded);
    ad::Graph g1, g2;
    const auto with = fixtures::loss_at(g1, *t.model, batch, 1.0, 5, true).values;
    const auto without = fixtures::loss_at(g2, *t.model, batch, 1.0, 5, false).values;
    CHECK(without.bow == 0.0);
    CHECK(with.bow > 0.0);
    CHECK(with.total - with.bow == doctest::Approx(without.total).epsilon(1e-12));
  }
}
