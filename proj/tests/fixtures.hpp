#ifndef GTM_TESTS_FIXTURES_HPP
#define GTM_TESTS_FIXTURES_HPP

#include <cstdio>
#include <memory>
#include <random>

#include "gtm/model.hpp"
#include "gtm/objective.hpp"

namespace fixtures {

struct Tiny {
  std::vector<gtm::Triple> corpus;
  std::vector<gtm::EncodedTriple> encoded;
  std::unique_ptr<gtm::GtmModel> model;
};

/// Small model over a small synthetic corpus. Parameters are drawn wider than
/// the training initializer so every term carries signal.
inline Tiny tiny(std::size_t n_triples, gtm::ModelConfig cfg, std::uint64_t seed, int max_len = 12) {
  Tiny t;
  t.corpus = gtm::generate_synthetic_corpus(seed, n_triples);
  gtm::Vocabulary vocab = gtm::build_vocabulary(t.corpus, 40000);
  for (const auto& tr : t.corpus) t.encoded.push_back(gtm::encode_triple(tr, vocab, max_len));
  cfg.vocab_size = static_cast<Eigen::Index>(vocab.size());
  t.model = std::make_unique<gtm::GtmModel>(cfg, std::move(vocab));
  t.model->params().initialize(seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.3);
  for (const auto& p : t.model->params().all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += n(rng);
  }
  return t;
}

inline gtm::ModelConfig small_config() {
  gtm::ModelConfig c;
  c.embed_dim = 4;
  c.hidden = 3;
  c.latent_dim = 2;
  c.qt_dim = 2;
  c.mlp_hidden = 3;
  return c;
}

/// Loss of one forward pass with noise drawn from a fresh rng(seed).
inline gtm::LossGraph loss_at(gtm::ad::Graph& g, const gtm::GtmModel& m, const gtm::Batch& batch, double lambda,
                              std::uint64_t seed, bool use_bow = true) {
  gtm::ForwardOptions opts;
  opts.use_bow = use_bow;
  std::mt19937_64 rng(seed);
  const gtm::TrainingForward f = gtm::forward_training(g, m, batch, opts, rng);
  return gtm::elbo_loss(f, lambda);
}

struct GradCheck {
  double max_rel_error{0.0};
  std::string worst;
  std::size_t entries{0};
  std::size_t tensors{0};
};

/// Backprop vs five-point central differences on a sample of entries per
/// tensor: the largest-|grad| entry plus `per_tensor` random ones. Noise is
/// replayed from the same seed for every evaluation.
inline GradCheck gradient_check(gtm::GtmModel& m, const gtm::Batch& batch, double lambda, int per_tensor,
                                std::uint64_t seed, double h = 1e-3, double floor = 1e-6) {
  {
    gtm::ad::Graph g;
    const gtm::LossGraph l = loss_at(g, m, batch, lambda, seed);
    m.params().zero_grad();
    g.backward(l.total);
  }
  auto eval = [&]() {
    gtm::ad::Graph g;
    return loss_at(g, m, batch, lambda, seed).values.total;
  };
  GradCheck out;
  std::mt19937_64 pick(seed ^ 0x5eed);
  for (const auto& p : m.params().all()) {
    const gtm::ad::Matrix analytic = p->grad;
    std::vector<Eigen::Index> idx;
    Eigen::Index best = 0;
    analytic.reshaped().cwiseAbs().maxCoeff(&best);
    idx.push_back(best);
    std::uniform_int_distribution<Eigen::Index> u(0, p->value.size() - 1);
    for (int k = 0; k < per_tensor; ++k) idx.push_back(u(pick));
    for (Eigen::Index i : idx) {
      double& x = p->value.data()[i];
      const double keep = x;
      auto at = [&](double offset) {
        x = keep + offset;
        return eval();
      };
      const double num = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      x = keep;
      const double a = analytic.data()[i];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s[%ld] analytic %.6e numeric %.6e", p->name.c_str(), static_cast<long>(i),
                      a, num);
        out.worst = buf;
      }
      ++out.entries;
    }
    ++out.tensors;
  }
  return out;
}

}  // namespace fixtures

#endif  // GTM_TESTS_FIXTURES_HPP
