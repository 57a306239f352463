#include "gtm/objective.hpp"

#include <algorithm>
#include <stdexcept>

namespace gtm {

LossGraph elbo_loss(const TrainingForward& fwd, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("elbo_loss: lambda must lie in [0, 1]");
  if (fwd.batch_size == 0) throw std::invalid_argument("elbo_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(fwd.batch_size);

  LossGraph out;
  out.kl_t = ad::scale(ad::sum_all(ad::gaussian_kl_std(fwd.post_triple.mu, fwd.post_triple.sigma)), inv_b);
  out.kl_a = ad::scale(ad::sum_all(ad::gaussian_kl(fwd.post_answer.mu, fwd.post_answer.sigma, fwd.prior_answer.mu,
                                                   fwd.prior_answer.sigma)),
                       inv_b);
  out.kl_q = ad::scale(ad::sum_all(ad::gaussian_kl(fwd.post_question.mu, fwd.post_question.sigma,
                                                   fwd.prior_question.mu, fwd.prior_question.sigma)),
                       inv_b);
  out.rec_q = ad::scale(fwd.rec_q, inv_b);
  out.rec_a = ad::scale(fwd.rec_a, inv_b);
  out.qt_ce = ad::scale(fwd.qt_ce, inv_b);

  const ad::Var kls[] = {out.kl_t, out.kl_a, out.kl_q};
  std::vector<ad::Var> terms = {out.rec_q, out.rec_a, out.qt_ce, ad::scale(ad::add_n(kls), lambda)};
  if (fwd.bow.valid()) {
    out.bow = ad::scale(fwd.bow, inv_b);
    terms.push_back(out.bow);
  }
  out.total = ad::add_n(terms);

  LossBreakdown& v = out.values;
  v.kl_t = out.kl_t.value()(0, 0);
  v.kl_a = out.kl_a.value()(0, 0);
  v.kl_q = out.kl_q.value()(0, 0);
  v.rec_q = out.rec_q.value()(0, 0);
  v.rec_a = out.rec_a.value()(0, 0);
  v.qt_ce = out.qt_ce.value()(0, 0);
  v.bow = out.bow.valid() ? out.bow.value()(0, 0) : 0.0;
  v.total = out.total.value()(0, 0);
  v.lambda = lambda;
  return out;
}

ad::Matrix bow_counts(const SequenceBatch& seq, Eigen::Index vocab_size) {
  ad::Matrix counts = ad::Matrix::Zero(vocab_size, static_cast<Eigen::Index>(seq.batch()));
  for (std::size_t b = 0; b < seq.batch(); ++b) {
    for (int t = 0; t < seq.lengths[b]; ++t) {
      const int id = seq.ids[static_cast<std::size_t>(t)][b];
      if (Vocabulary::is_special(id)) continue;
      counts(id, static_cast<Eigen::Index>(b)) += 1.0;
    }
  }
  return counts;
}

ad::Var bow_loss(ad::Graph& g, const BowHeads& heads, ad::Var z_t, ad::Var z_q, ad::Var z_a,
                 const SequenceBatch& question, const SequenceBatch& answer) {
  const Eigen::Index vocab = heads.question.out.out_dim();
  const ad::Matrix cq = bow_counts(question, vocab);
  const ad::Matrix ca = bow_counts(answer, vocab);
  const ad::Var parts[] = {
      ad::softmax_xent_counts(heads.question(g, z_q), cq),
      ad::softmax_xent_counts(heads.answer(g, z_a), ca),
      ad::softmax_xent_counts(heads.triple(g, z_t), cq + ca),
  };
  return ad::add_n(parts);
}

double kl_anneal(std::int64_t step, std::int64_t total_steps) {
  if (total_steps < 1) throw std::invalid_argument("kl_anneal: total_anneal_steps must be >= 1");
  if (step < 0) throw std::invalid_argument("kl_anneal: negative step");
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
}

std::vector<int> word_drop(std::span<const int> ids, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("word_drop: p must lie in [0, 1]");
  std::vector<int> out(ids.begin(), ids.end());
  if (p == 0.0) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int& id : out) {
    if (Vocabulary::is_special(id)) continue;
    if (u(rng) < p) id = Vocabulary::kUnk;
  }
  return out;
}

}  // namespace gtm
