#ifndef GTM_MODEL_HPP
#define GTM_MODEL_HPP

#include <array>
#include <random>
#include <span>
#include <vector>

#include "gtm/data.hpp"
#include "gtm/decoder.hpp"
#include "gtm/encoders.hpp"
#include "gtm/latent.hpp"
#include "gtm/nn.hpp"

namespace gtm {

struct ModelConfig {
  Eigen::Index vocab_size{0};
  Eigen::Index embed_dim{64};
  Eigen::Index hidden{64};
  Eigen::Index latent_dim{16};
  Eigen::Index qt_dim{16};
  Eigen::Index mlp_hidden{64};
  double min_sigma{1e-6};

  bool operator==(const ModelConfig&) const = default;
};

/// Decoder-side view of one utterance: shifted inputs, targets and weights
/// per step, time-major.
struct DecoderTargets {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
  std::vector<std::vector<double>> weights;
  std::size_t steps() const { return targets.size(); }
  /// Non-PAD target count over the batch (EOS included).
  std::size_t num_targets() const;
};

struct Batch {
  SequenceBatch post;
  SequenceBatch question;
  SequenceBatch answer;
  DecoderTargets question_dec;
  DecoderTargets answer_dec;
  std::vector<int> question_types;
  std::size_t size() const { return question_types.size(); }
};

Batch make_batch(std::span<const EncodedTriple* const> examples);
Batch make_batch(std::span<const EncodedTriple> examples);

/// Vocabulary-logit heads predicting the bag of target words from z^q, z^a
/// and z^t.
struct BowHeads {
  nn::Mlp question;
  nn::Mlp answer;
  nn::Mlp triple;
};

/// Every network of the triple-wise model plus its vocabulary.
class GtmModel {
 public:
  GtmModel(const ModelConfig& config, Vocabulary vocab);
  GtmModel(const GtmModel&) = delete;
  GtmModel& operator=(const GtmModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  UtteranceEncoding encode_utterance(ad::Graph& g, const SequenceBatch& batch) const;
  TripleEncoding encode_triple_sequence(ad::Graph& g, std::span<const ad::Var> summaries) const;
  const LatentNetworks& latent() const { return latent_; }

  ad::Var question_type_vectors(ad::Graph& g, std::span<const int> types) const;
  /// Logits over the 9 question types from [z_q ; z_t ; h_enc_p].
  ad::Var question_type_logits(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_enc_p) const;
  ad::Var init_question_decoder(ad::Graph& g, ad::Var z_q, ad::Var z_t, ad::Var h_ctx_q, ad::Var v_qt) const;
  ad::Var init_answer_decoder(ad::Graph& g, ad::Var z_a, ad::Var z_t, ad::Var h_ctx_a) const;

  const Decoder& question_decoder() const { return question_decoder_; }
  const Decoder& answer_decoder() const { return answer_decoder_; }
  const BowHeads& bow() const { return bow_; }
  AttentionMemory post_memory(ad::Graph& g, const UtteranceEncoding& post, const Decoder& dec) const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  nn::ParameterStore store_;
  ad::Parameter* embedding_{nullptr};
  ad::Parameter* qt_table_{nullptr};
  UtteranceEncoder utterance_;
  TripleEncoder triple_;
  LatentNetworks latent_;
  nn::Mlp qt_predictor_;
  Decoder question_decoder_;
  Decoder answer_decoder_;
  BowHeads bow_;
};

/// Softmax over the 9 question types for a single example.
ad::Vector predict_question_type(const GtmModel& model, const ad::Vector& z_q, const ad::Vector& z_t,
                                 const ad::Vector& h_enc_p);

struct ForwardOptions {
  /// false: every latent takes its posterior mean (eps = 0).
  bool sample_latents{true};
  double word_drop{0.0};
  double dropout{0.0};
  bool use_bow{true};
};

/// Everything the objective needs from one training-graph pass.
struct TrainingForward {
  nn::GaussianVars post_triple;
  nn::GaussianVars prior_answer;
  nn::GaussianVars post_answer;
  nn::GaussianVars prior_question;
  nn::GaussianVars post_question;
  ad::Var z_t, z_a, z_q;
  ad::Var rec_q;  // summed over tokens and batch
  ad::Var rec_a;
  ad::Var qt_ce;
  ad::Var bow;  // invalid when BOW is disabled
  ad::Var qt_logits;
  std::vector<ad::Var> question_logits;  // per decoder step
  std::size_t batch_size{0};
  std::size_t question_words{0};
  std::size_t answer_words{0};
};

/// Teacher-forced pass through the recognition, prior and generation
/// networks with latents sampled from the posteriors. Noise and word drop
/// draw from rng in a fixed order.
TrainingForward forward_training(ad::Graph& g, const GtmModel& model, const Batch& batch, const ForwardOptions& opts,
                                 std::mt19937_64& rng);

}  // namespace gtm

#endif  // GTM_MODEL_HPP
