#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stm/corpus.hpp"
#include "stm/nn.hpp"

namespace stm {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NtmMode { bow_only, lcsntm };

struct ModelConfig {
  std::size_t num_topics = 20;
  NtmMode mode = NtmMode::bow_only;
  std::vector<std::size_t> hidden_sizes = {100, 100};
  double dropout = 0.2;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double dirichlet_alpha = 0.0;  // <= 0 means the 1/K default
  double learning_rate = 2e-3;

  double effective_alpha() const {
    return dirichlet_alpha > 0.0 ? dirichlet_alpha
                                 : 1.0 / static_cast<double>(num_topics);
  }
};

struct PriorParams {
  std::vector<double> mu;
  std::vector<double> var;
};

// Laplace approximation of a symmetric Dirichlet(alpha) in softmax basis.
PriorParams dirichlet_prior(std::size_t num_topics, double alpha);

// Offsets of each tensor inside the flat parameter vector. Trunk layers
// alternate weight/bias, then the mu and logvar heads, the topic-word
// matrix beta (K x V), and the decoder's per-vocabulary scale and shift.
struct ParamLayout {
  std::size_t input_dim = 0;  // V + E
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 0;
  std::size_t num_topics = 0;
  std::vector<std::size_t> hidden_sizes;

  struct Tensor {
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;  // 1 for vectors
    std::size_t size() const { return rows * cols; }
  };
  std::vector<Tensor> trunk_weights;
  std::vector<Tensor> trunk_biases;
  Tensor mu_weight{}, mu_bias{};
  Tensor logvar_weight{}, logvar_bias{};
  Tensor beta{};
  Tensor dec_scale{}, dec_shift{};
  std::size_t total = 0;

  static ParamLayout make(std::size_t vocab_size, std::size_t embedding_dim,
                          std::size_t num_topics,
                          const std::vector<std::size_t>& hidden_sizes);
};

struct TrainedModel {
  ModelConfig config;
  ParamLayout layout;
  std::vector<double> params;
  PriorParams prior;
  std::vector<double> emb_mean;  // embedding standardization, length E
  std::vector<double> emb_std;
  std::string vocab_fingerprint;

  std::span<const double> tensor(const ParamLayout::Tensor& t) const {
    return {params.data() + t.offset, t.size()};
  }
};

struct LatentSample {
  std::vector<double> mu;
  std::vector<double> logvar;
  std::vector<double> z;
  std::vector<double> theta;
};

struct ElboTerms {
  double loss = 0.0;   // -(recon - kl)
  double recon = 0.0;  // sum of count-weighted log-probabilities
  double kl = 0.0;
};

struct EpochTrace {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_recon = 0.0;
  double mean_kl = 0.0;
};

struct FitResult {
  TrainedModel model;
  std::vector<EpochTrace> trace;
};

// One training example: BOW plus its (already standardized) context
// embedding, tagged with the global document index that selects its
// noise substream.
struct TrainExample {
  const BowVector* bow = nullptr;
  std::span<const double> context;
  std::size_t doc_index = 0;
};

std::string vocab_fingerprint(const Vocabulary& vocab);

// Encoder forward pass; dropout applies only when a stream is supplied.
std::pair<std::vector<double>, std::vector<double>> encode(
    const TrainedModel& model, std::span<const double> input,
    RngStream* dropout_rng = nullptr);

LatentSample reparameterize(std::span<const double> mu,
                            std::span<const double> logvar,
                            std::span<const double> eps);

// theta^T beta, per-vocabulary affine normalization, then softmax.
std::vector<double> decode(std::span<const double> theta,
                           const TrainedModel& model);

// Closed-form KL between diagonal Gaussians q(mu, exp(logvar)) and the
// prior (prior.mu, prior.var).
double kl_divergence(std::span<const double> mu, std::span<const double> logvar,
                     const PriorParams& prior);

ElboTerms elbo_loss(const TrainedModel& model, const BowVector& bow,
                    std::span<const double> context,
                    std::span<const double> eps);

// Mean loss over a batch, with per-document noise substreams derived
// from noise_seed and each example's doc_index. Deterministic; the pair
// is checkable with finite differences at fixed noise_seed.
double batch_loss(const TrainedModel& shape, const std::vector<double>& params,
                  const std::vector<TrainExample>& batch,
                  std::uint64_t noise_seed);
std::vector<double> batch_grad(const TrainedModel& shape,
                               const std::vector<double>& params,
                               const std::vector<TrainExample>& batch,
                               std::uint64_t noise_seed);

FitResult fit(const ProcessedCorpus& corpus, const ModelConfig& config);

std::vector<double> infer_theta(const TrainedModel& model, const BowVector& bow,
                                std::span<const double> raw_context,
                                const std::string& corpus_fingerprint);

struct TopicWordList {
  std::vector<std::vector<std::string>> topics;
};

TopicWordList top_words(const TrainedModel& model, const Vocabulary& vocab,
                        std::size_t n = 10);

// Versioned JSON checkpoint with base64 float64 parameter buffers.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace stm
