#ifndef GTM_LATENT_HPP
#define GTM_LATENT_HPP

#include <random>

#include "gtm/encoders.hpp"
#include "gtm/nn.hpp"

namespace gtm {

/// Diagonal Gaussian for a single example.
struct GaussianParams {
  ad::Vector mu;
  ad::Vector sigma;
};

enum class LatentSource : std::uint8_t { prior, posterior };

struct LatentSample {
  ad::Vector z;
  ad::Vector eps;
  LatentSource source{LatentSource::posterior};
};

/// N(0, I) of the given dimension.
GaussianParams prior_triple(Eigen::Index dim);

/// Closed-form KL(q || p) between diagonal Gaussians, summed over dims.
double kl_divergence(const GaussianParams& q, const GaussianParams& p);

/// z = mu + sigma * eps.
LatentSample reparameterize(const GaussianParams& g, const ad::Vector& eps, LatentSource source);
ad::Var reparameterize(ad::Graph& g, const nn::GaussianVars& dist, const ad::Matrix& eps);

/// Standard-normal noise of the given shape.
ad::Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Column b of a batched Gaussian as a single-example GaussianParams.
GaussianParams column(const nn::GaussianVars& dist, Eigen::Index b);

struct ContextBridge {
  ad::Var h_ctx_p;
  ad::Var h_ctx_q;
  ad::Var h_ctx_a;
};

struct LatentDims {
  Eigen::Index utterance{0};  // 2H
  Eigen::Index triple{0};     // 2H_t
  Eigen::Index latent{0};     // D_z
  Eigen::Index qt{0};         // D_qt
  Eigen::Index mlp_hidden{0};
  double min_sigma{1e-6};
};

/// Prior and recognition networks for z^t, z^a, z^q and the context
/// bridge linking the post to the utterance-level latents.
class LatentNetworks {
 public:
  LatentNetworks() = default;
  LatentNetworks(nn::ParameterStore& store, const LatentDims& dims);

  nn::GaussianVars posterior_triple(ad::Graph& g, const TripleEncoding& h_t) const;
  ContextBridge context_bridge(ad::Graph& g, ad::Var z_t, ad::Var h_enc_p) const;
  nn::GaussianVars prior_answer(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t) const;
  nn::GaussianVars posterior_answer(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t, ad::Var h_enc_a) const;
  nn::GaussianVars prior_question(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t, ad::Var z_a) const;
  nn::GaussianVars posterior_question(ad::Graph& g, const ContextBridge& bridge, ad::Var z_t, ad::Var h_enc_q,
                                      ad::Var v_qt, ad::Var z_a) const;

  const LatentDims& dims() const { return dims_; }

 private:
  LatentDims dims_;
  nn::GaussianHead post_triple_;
  nn::GruCell bridge_;
  nn::Mlp to_question_ctx_;
  nn::Mlp to_answer_ctx_;
  nn::GaussianHead prior_answer_;
  nn::GaussianHead post_answer_;
  nn::GaussianHead prior_question_;
  nn::GaussianHead post_question_;
};

}  // namespace gtm

#endif  // GTM_LATENT_HPP
