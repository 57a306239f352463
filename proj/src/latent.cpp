#include "gtm/latent.hpp"

#include <cmath>
#include <stdexcept>

namespace gtm {

GaussianParams prior_triple(Eigen::Index dim) {
  return {ad::Vector::Zero(dim), ad::Vector::Ones(dim)};
}

double kl_divergence(const GaussianParams& q, const GaussianParams& p) {
  if (q.mu.size() != p.mu.size() || q.sigma.size() != q.mu.size() || p.sigma.size() != p.mu.size()) {
    throw std::invalid_argument("kl_divergence: dimension mismatch");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.mu.size(); ++i) {
    const double sq = q.sigma(i), sp = p.sigma(i);
    if (!(sq > 0.0) || !(sp > 0.0)) throw std::domain_error("kl_divergence: sigma must be positive");
    const double d = q.mu(i) - p.mu(i);
    kl += std::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
  }
  return kl;
}

LatentSample reparameterize(const GaussianParams& g, const ad::Vector& eps, LatentSource source) {
  if (eps.size() != g.mu.size()) throw std::invalid_argument("reparameterize: noise dimension mismatch");
  return {g.mu + g.sigma.cwiseProduct(eps), eps, source};
}

ad::Var reparameterize(ad::Graph& g, const nn::GaussianVars& dist, const ad::Matrix& eps) {
  return ad::add(dist.mu, ad::cmul(dist.sigma, g.constant(eps)));
}

ad::Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

GaussianParams column(const nn::GaussianVars& dist, Eigen::Index b) {
  return {dist.mu.value().col(b), dist.sigma.value().col(b)};
}

LatentNetworks::LatentNetworks(nn::ParameterStore& store, const LatentDims& d) : dims_(d) {
  using ad::ParamGroup;
  const Eigen::Index one[] = {d.mlp_hidden};
  const Eigen::Index two[] = {d.mlp_hidden, d.mlp_hidden};
  post_triple_ = nn::GaussianHead(store, "recog.triple", ParamGroup::recognition, d.triple, two, d.latent, d.min_sigma);
  bridge_ = nn::GruCell(store, "bridge.f", ParamGroup::generation, d.latent, d.utterance);
  to_question_ctx_ = nn::Mlp(store, "bridge.tr1", ParamGroup::generation, d.utterance, one, d.utterance);
  to_answer_ctx_ = nn::Mlp(store, "bridge.tr2", ParamGroup::generation, d.utterance, one, d.utterance);
  prior_answer_ =
      nn::GaussianHead(store, "prior.answer", ParamGroup::prior, d.utterance + d.latent, one, d.latent, d.min_sigma);
  post_answer_ = nn::GaussianHead(store, "recog.answer", ParamGroup::recognition, 2 * d.utterance + d.latent, two,
                                  d.latent, d.min_sigma);
  prior_question_ = nn::GaussianHead(store, "prior.question", ParamGroup::prior, d.utterance + 2 * d.latent, one,
                                     d.latent, d.min_sigma);
  post_question_ = nn::GaussianHead(store, "recog.question", ParamGroup::recognition,
                                    2 * d.utterance + 2 * d.latent + d.qt, two, d.latent, d.min_sigma);
}

nn::GaussianVars LatentNetworks::posterior_triple(ad::Graph& g, const TripleEncoding& h_t) const {
  return post_triple_(g, h_t.summary);
}

ContextBridge LatentNetworks::context_bridge(ad::Graph& g, ad::Var z_t, ad::Var h_enc_p) const {
  // z^t is the step input, the post summary the initial state.
  ad::Var h_ctx_p = bridge_(g, z_t, h_enc_p);
  return {h_ctx_p, to_question_ctx_(g, h_ctx_p), to_answer_ctx_(g, h_ctx_p)};
}

nn::GaussianVars LatentNetworks::prior_answer(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t) const {
  const ad::Var in[] = {bridge.h_ctx_a, z_t};
  return prior_answer_(g, ad::concat_rows(in));
}

nn::GaussianVars LatentNetworks::posterior_answer(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t,
                                                  ad::Var h_enc_a) const {
  const ad::Var in[] = {bridge.h_ctx_a, z_t, h_enc_a};
  return post_answer_(g, ad::concat_rows(in));
}

nn::GaussianVars LatentNetworks::prior_question(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t,
                                                ad::Var z_a) const {
  const ad::Var in[] = {bridge.h_ctx_q, z_t, z_a};
  return prior_question_(g, ad::concat_rows(in));
}

nn::GaussianVars LatentNetworks::posterior_question(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t,
                                                    ad::Var h_enc_q, ad::Var v_qt, ad::Var z_a) const {
  const ad::Var in[] = {bridge.h_ctx_q, z_t, h_enc_q, v_qt, z_a};
  return post_question_(g, ad::concat_rows(in));
}

}  // namespace gtm
