#ifndef GTM_OBJECTIVE_HPP
#define GTM_OBJECTIVE_HPP

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gtm/model.hpp"

namespace gtm {

/// Scalar components of the minimized objective, all averaged over the
/// batch. total = rec_q + rec_a + qt_ce + lambda * (kl_t + kl_a + kl_q) + bow.
struct LossBreakdown {
  double kl_t{0.0};
  double kl_a{0.0};
  double kl_q{0.0};
  double rec_q{0.0};
  double rec_a{0.0};
  double qt_ce{0.0};
  double bow{0.0};
  double total{0.0};
  double lambda{0.0};

  double kl_sum() const { return kl_t + kl_a + kl_q; }
};

struct LossGraph {
  ad::Var kl_t, kl_a, kl_q, rec_q, rec_a, qt_ce, bow, total;
  LossBreakdown values;
};

/// Assembles the objective from a training forward pass.
LossGraph elbo_loss(const TrainingForward& fwd, double lambda);

/// Bag-of-words loss: z^q predicts question words, z^a answer words and z^t
/// both. PAD, SOS and EOS are not targets. Summed over the batch.
ad::Var bow_loss(ad::Graph& g, const BowHeads& heads, ad::Var z_t, ad::Var z_q, ad::Var z_a,
                 const SequenceBatch& question, const SequenceBatch& answer);

/// Bag-of-words target counts, vocab x batch.
ad::Matrix bow_counts(const SequenceBatch& seq, Eigen::Index vocab_size);

/// lambda = min(1, step / total_steps).
double kl_anneal(std::int64_t step, std::int64_t total_steps);

/// Replaces each non-special id with UNK with probability p.
std::vector<int> word_drop(std::span<const int> ids, double p, std::mt19937_64& rng);

}  // namespace gtm

#endif  // GTM_OBJECTIVE_HPP
