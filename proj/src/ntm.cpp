#include "stm/ntm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "stm/encoding.hpp"

namespace stm {

PriorParams dirichlet_prior(std::size_t num_topics, double alpha) {
  const double k = static_cast<double>(num_topics);
  PriorParams prior;
  prior.mu.assign(num_topics, 0.0);
  prior.var.assign(num_topics,
                   (1.0 / alpha) * (1.0 - 2.0 / k) + 1.0 / (k * alpha));
  return prior;
}

ParamLayout ParamLayout::make(std::size_t vocab_size, std::size_t embedding_dim,
                              std::size_t num_topics,
                              const std::vector<std::size_t>& hidden_sizes) {
  ParamLayout layout;
  layout.vocab_size = vocab_size;
  layout.embedding_dim = embedding_dim;
  layout.input_dim = vocab_size + embedding_dim;
  layout.num_topics = num_topics;
  layout.hidden_sizes = hidden_sizes;

  std::size_t offset = 0;
  auto add = [&offset](std::size_t rows, std::size_t cols) {
    Tensor t{offset, rows, cols};
    offset += t.size();
    return t;
  };

  std::size_t in_dim = layout.input_dim;
  for (std::size_t h : hidden_sizes) {
    layout.trunk_weights.push_back(add(h, in_dim));
    layout.trunk_biases.push_back(add(h, 1));
    in_dim = h;
  }
  layout.mu_weight = add(num_topics, in_dim);
  layout.mu_bias = add(num_topics, 1);
  layout.logvar_weight = add(num_topics, in_dim);
  layout.logvar_bias = add(num_topics, 1);
  layout.beta = add(num_topics, vocab_size);
  layout.dec_scale = add(vocab_size, 1);
  layout.dec_shift = add(vocab_size, 1);
  layout.total = offset;
  return layout;
}

std::string vocab_fingerprint(const Vocabulary& vocab) {
  std::string joined;
  for (const auto& tok : vocab.index_to_token) {
    joined += tok;
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

namespace {

// Per-document forward pass with cached intermediates for backprop.
struct Forward {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // trunk pre-activations
  std::vector<std::vector<double>> act;   // after softplus (+ dropout)
  std::vector<std::vector<double>> mask;  // dropout multipliers, empty if off
  std::vector<double> mu, logvar, eps, z, theta;
  std::vector<double> mixture;  // theta^T beta
  std::vector<double> probs;    // decoder word distribution
  double total_count = 0.0;
};

void affine_forward(const double* params, const ParamLayout::Tensor& w,
                    const ParamLayout::Tensor& b,
                    const std::vector<double>& x, std::vector<double>& out) {
  out.assign(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = params[b.offset + r];
    const double* row = params + w.offset + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

// Accumulates dW, db, and returns dx.
std::vector<double> affine_backward(const double* params, double* grad,
                                    const ParamLayout::Tensor& w,
                                    const ParamLayout::Tensor& b,
                                    const std::vector<double>& x,
                                    const std::vector<double>& dout) {
  std::vector<double> dx(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    grad[b.offset + r] += dout[r];
    const double* row = params + w.offset + r * w.cols;
    double* grow = grad + w.offset + r * w.cols;
    for (std::size_t c = 0; c < w.cols; ++c) {
      grow[c] += dout[r] * x[c];
      dx[c] += row[c] * dout[r];
    }
  }
  return dx;
}

std::vector<double> assemble_input(const ParamLayout& layout,
                                   const BowVector& bow,
                                   std::span<const double> context) {
  if (context.size() != layout.embedding_dim) {
    throw DimensionError("context embedding length " +
                         std::to_string(context.size()) + " != expected " +
                         std::to_string(layout.embedding_dim));
  }
  std::vector<double> input(layout.input_dim, 0.0);
  for (const auto& [idx, cnt] : bow.entries) {
    if (idx >= layout.vocab_size) {
      throw DimensionError("BOW index out of vocabulary range");
    }
    input[idx] = static_cast<double>(cnt);
  }
  std::copy(context.begin(), context.end(),
            input.begin() + static_cast<std::ptrdiff_t>(layout.vocab_size));
  return input;
}

Forward forward_pass(const ParamLayout& layout, const double* params,
                     const BowVector& bow, std::span<const double> context,
                     std::span<const double> eps, double dropout,
                     RngStream* dropout_rng) {
  Forward f;
  f.input = assemble_input(layout, bow, context);
  f.total_count = static_cast<double>(bow.total_count());

  const std::vector<double>* x = &f.input;
  for (std::size_t i = 0; i < layout.trunk_weights.size(); ++i) {
    std::vector<double> pre;
    affine_forward(params, layout.trunk_weights[i], layout.trunk_biases[i], *x,
                   pre);
    std::vector<double> act = softplus(pre);
    if (dropout_rng != nullptr && dropout > 0.0) {
      std::vector<double> mask(act.size());
      const double keep = 1.0 - dropout;
      for (std::size_t j = 0; j < act.size(); ++j) {
        mask[j] = (dropout_rng->next_double() >= dropout) ? 1.0 / keep : 0.0;
        act[j] *= mask[j];
      }
      f.mask.push_back(std::move(mask));
    }
    f.pre.push_back(std::move(pre));
    f.act.push_back(std::move(act));
    x = &f.act.back();
  }

  affine_forward(params, layout.mu_weight, layout.mu_bias, *x, f.mu);
  affine_forward(params, layout.logvar_weight, layout.logvar_bias, *x,
                 f.logvar);

  f.eps.assign(eps.begin(), eps.end());
  f.z.resize(layout.num_topics);
  for (std::size_t k = 0; k < layout.num_topics; ++k) {
    f.z[k] = f.mu[k] + std::exp(0.5 * f.logvar[k]) * f.eps[k];
  }
  f.theta = softmax(f.z);

  f.mixture.assign(layout.vocab_size, 0.0);
  for (std::size_t k = 0; k < layout.num_topics; ++k) {
    const double* beta_row = params + layout.beta.offset + k * layout.vocab_size;
    const double tk = f.theta[k];
    for (std::size_t v = 0; v < layout.vocab_size; ++v) {
      f.mixture[v] += tk * beta_row[v];
    }
  }
  std::vector<double> logits(layout.vocab_size);
  const double* scale = params + layout.dec_scale.offset;
  const double* shift = params + layout.dec_shift.offset;
  for (std::size_t v = 0; v < layout.vocab_size; ++v) {
    logits[v] = scale[v] * f.mixture[v] + shift[v];
  }
  f.probs = softmax(logits);
  return f;
}

ElboTerms terms_from_forward(const Forward& f, const BowVector& bow,
                             const PriorParams& prior) {
  ElboTerms terms;
  for (const auto& [idx, cnt] : bow.entries) {
    terms.recon += static_cast<double>(cnt) * std::log(f.probs[idx]);
  }
  terms.kl = kl_divergence(f.mu, f.logvar, prior);
  terms.loss = terms.kl - terms.recon;
  return terms;
}

// Backprop of the single-document loss (kl - recon) into grad.
void backward_pass(const ParamLayout& layout, const double* params,
                   const Forward& f, const BowVector& bow,
                   const PriorParams& prior, double dropout, double* grad) {
  const std::size_t K = layout.num_topics;
  const std::size_t V = layout.vocab_size;

  // d(-recon)/d decoder logits = N*p - counts
  std::vector<double> dlogits(V);
  for (std::size_t v = 0; v < V; ++v) dlogits[v] = f.total_count * f.probs[v];
  for (const auto& [idx, cnt] : bow.entries) {
    dlogits[idx] -= static_cast<double>(cnt);
  }

  const double* scale = params + layout.dec_scale.offset;
  std::vector<double> dmixture(V);
  for (std::size_t v = 0; v < V; ++v) {
    grad[layout.dec_scale.offset + v] += dlogits[v] * f.mixture[v];
    grad[layout.dec_shift.offset + v] += dlogits[v];
    dmixture[v] = dlogits[v] * scale[v];
  }

  std::vector<double> dtheta(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double* beta_row = params + layout.beta.offset + k * V;
    double* gbeta_row = grad + layout.beta.offset + k * V;
    double acc = 0.0;
    const double tk = f.theta[k];
    for (std::size_t v = 0; v < V; ++v) {
      gbeta_row[v] += tk * dmixture[v];
      acc += beta_row[v] * dmixture[v];
    }
    dtheta[k] = acc;
  }

  // softmax backward
  double dot = 0.0;
  for (std::size_t k = 0; k < K; ++k) dot += dtheta[k] * f.theta[k];
  std::vector<double> dz(K);
  for (std::size_t k = 0; k < K; ++k) dz[k] = f.theta[k] * (dtheta[k] - dot);

  // reparameterization plus KL
  std::vector<double> dmu(K), dlogvar(K);
  for (std::size_t k = 0; k < K; ++k) {
    dmu[k] = dz[k] + (f.mu[k] - prior.mu[k]) / prior.var[k];
    dlogvar[k] = dz[k] * f.eps[k] * 0.5 * std::exp(0.5 * f.logvar[k]) +
                 0.5 * (std::exp(f.logvar[k]) / prior.var[k] - 1.0);
  }

  const std::vector<double>& trunk_out =
      f.act.empty() ? f.input : f.act.back();
  std::vector<double> dh = affine_backward(params, grad, layout.mu_weight,
                                           layout.mu_bias, trunk_out, dmu);
  {
    std::vector<double> dh2 = affine_backward(
        params, grad, layout.logvar_weight, layout.logvar_bias, trunk_out,
        dlogvar);
    for (std::size_t j = 0; j < dh.size(); ++j) dh[j] += dh2[j];
  }

  for (std::size_t i = layout.trunk_weights.size(); i-- > 0;) {
    std::vector<double> dpre(f.pre[i].size());
    for (std::size_t j = 0; j < dpre.size(); ++j) {
      double g = dh[j];
      if (!f.mask.empty()) g *= f.mask[i][j];
      dpre[j] = g * sigmoid(f.pre[i][j]);
    }
    const std::vector<double>& layer_in = (i == 0) ? f.input : f.act[i - 1];
    dh = affine_backward(params, grad, layout.trunk_weights[i],
                         layout.trunk_biases[i], layer_in, dpre);
  }
  (void)dropout;
}

std::vector<double> standardize_row(const TrainedModel& model,
                                    std::span<const double> raw) {
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) {
    out[j] = (raw[j] - model.emb_mean[j]) / model.emb_std[j];
  }
  return out;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> encode(
    const TrainedModel& model, std::span<const double> input,
    RngStream* dropout_rng) {
  const ParamLayout& layout = model.layout;
  if (input.size() != layout.input_dim) {
    throw DimensionError("encode: input length " + std::to_string(input.size()) +
                         " != " + std::to_string(layout.input_dim));
  }
  const double* params = model.params.data();
  std::vector<double> x(input.begin(), input.end());
  for (std::size_t i = 0; i < layout.trunk_weights.size(); ++i) {
    std::vector<double> pre;
    affine_forward(params, layout.trunk_weights[i], layout.trunk_biases[i], x,
                   pre);
    x = softplus(pre);
    if (dropout_rng != nullptr && model.config.dropout > 0.0) {
      const double keep = 1.0 - model.config.dropout;
      for (auto& v : x) {
        v *= (dropout_rng->next_double() >= model.config.dropout) ? 1.0 / keep
                                                                  : 0.0;
      }
    }
  }
  std::vector<double> mu, logvar;
  affine_forward(params, layout.mu_weight, layout.mu_bias, x, mu);
  affine_forward(params, layout.logvar_weight, layout.logvar_bias, x, logvar);
  return {std::move(mu), std::move(logvar)};
}

LatentSample reparameterize(std::span<const double> mu,
                            std::span<const double> logvar,
                            std::span<const double> eps) {
  LatentSample s;
  s.mu.assign(mu.begin(), mu.end());
  s.logvar.assign(logvar.begin(), logvar.end());
  s.z.resize(mu.size());
  for (std::size_t k = 0; k < mu.size(); ++k) {
    s.z[k] = mu[k] + std::exp(0.5 * logvar[k]) * eps[k];
  }
  s.theta = softmax(s.z);
  return s;
}

std::vector<double> decode(std::span<const double> theta,
                           const TrainedModel& model) {
  const ParamLayout& layout = model.layout;
  const double* params = model.params.data();
  std::vector<double> logits(layout.vocab_size, 0.0);
  for (std::size_t k = 0; k < layout.num_topics; ++k) {
    const double* beta_row = params + layout.beta.offset + k * layout.vocab_size;
    for (std::size_t v = 0; v < layout.vocab_size; ++v) {
      logits[v] += theta[k] * beta_row[v];
    }
  }
  const double* scale = params + layout.dec_scale.offset;
  const double* shift = params + layout.dec_shift.offset;
  for (std::size_t v = 0; v < layout.vocab_size; ++v) {
    logits[v] = scale[v] * logits[v] + shift[v];
  }
  return softmax(logits);
}

double kl_divergence(std::span<const double> mu, std::span<const double> logvar,
                     const PriorParams& prior) {
  double kl = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double var = std::exp(logvar[k]);
    const double diff = prior.mu[k] - mu[k];
    kl += 0.5 * (var / prior.var[k] + diff * diff / prior.var[k] - 1.0 +
                 std::log(prior.var[k]) - logvar[k]);
  }
  return kl;
}

ElboTerms elbo_loss(const TrainedModel& model, const BowVector& bow,
                    std::span<const double> context,
                    std::span<const double> eps) {
  const Forward f = forward_pass(model.layout, model.params.data(), bow,
                                 context, eps, 0.0, nullptr);
  return terms_from_forward(f, bow, model.prior);
}

namespace {

ElboTerms batch_terms_and_grad(const TrainedModel& shape,
                               const std::vector<double>& params,
                               const std::vector<TrainExample>& batch,
                               std::uint64_t noise_seed, bool training,
                               std::vector<double>* grad) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const ParamLayout& layout = shape.layout;
  if (grad) grad->assign(layout.total, 0.0);

  ElboTerms mean;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    RngStream doc_rng = RngStream::substream(noise_seed, ex.doc_index);
    const std::vector<double> eps = gaussian_sample(doc_rng, layout.num_topics);
    RngStream* dropout_rng =
        (training && shape.config.dropout > 0.0) ? &doc_rng : nullptr;
    const Forward f =
        forward_pass(layout, params.data(), *ex.bow, ex.context, eps,
                     shape.config.dropout, dropout_rng);
    const ElboTerms terms = terms_from_forward(f, *ex.bow, shape.prior);
    mean.loss += terms.loss * inv_n;
    mean.recon += terms.recon * inv_n;
    mean.kl += terms.kl * inv_n;
    if (grad) {
      backward_pass(layout, params.data(), f, *ex.bow, shape.prior,
                    shape.config.dropout, grad->data());
    }
  }
  if (grad) {
    for (auto& g : *grad) g *= inv_n;
  }
  return mean;
}

}  // namespace

double batch_loss(const TrainedModel& shape, const std::vector<double>& params,
                  const std::vector<TrainExample>& batch,
                  std::uint64_t noise_seed) {
  return batch_terms_and_grad(shape, params, batch, noise_seed, true, nullptr)
      .loss;
}

std::vector<double> batch_grad(const TrainedModel& shape,
                               const std::vector<double>& params,
                               const std::vector<TrainExample>& batch,
                               std::uint64_t noise_seed) {
  std::vector<double> grad;
  batch_terms_and_grad(shape, params, batch, noise_seed, true, &grad);
  return grad;
}

FitResult fit(const ProcessedCorpus& corpus, const ModelConfig& config) {
  if (corpus.docs.empty()) throw ConfigError("fit: corpus is empty");
  const std::size_t V = corpus.vocab.size();
  std::size_t E = 0;
  if (config.mode == NtmMode::lcsntm) {
    if (corpus.context_embeddings.rows != corpus.docs.size()) {
      throw ConfigError(
          "lcsntm mode requires context embeddings aligned with the corpus");
    }
    E = corpus.embedding_dim;
  }

  TrainedModel model;
  model.config = config;
  model.layout = ParamLayout::make(V, E, config.num_topics, config.hidden_sizes);
  model.prior = dirichlet_prior(config.num_topics, config.effective_alpha());
  model.vocab_fingerprint = vocab_fingerprint(corpus.vocab);

  // embedding standardization over the training corpus
  model.emb_mean.assign(E, 0.0);
  model.emb_std.assign(E, 1.0);
  if (E > 0) {
    const std::size_t D = corpus.docs.size();
    for (std::size_t j = 0; j < E; ++j) {
      double mean = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        mean += corpus.context_embeddings(d, j);
      }
      mean /= static_cast<double>(D);
      double var = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        const double diff = corpus.context_embeddings(d, j) - mean;
        var += diff * diff;
      }
      var /= static_cast<double>(D);
      model.emb_mean[j] = mean;
      model.emb_std[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
  }

  Matrix standardized(corpus.docs.size(), E);
  for (std::size_t d = 0; d < corpus.docs.size() && E > 0; ++d) {
    for (std::size_t j = 0; j < E; ++j) {
      standardized(d, j) =
          (corpus.context_embeddings(d, j) - model.emb_mean[j]) /
          model.emb_std[j];
    }
  }

  // uniform init scaled by 1/sqrt(fan_in); biases 0, decoder scale 1
  model.params.assign(model.layout.total, 0.0);
  {
    RngStream init_rng(derive_seed(config.seed, 0));
    auto init_tensor = [&](const ParamLayout::Tensor& t, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i) {
        model.params[t.offset + i] = init_rng.uniform(-bound, bound);
      }
    };
    for (std::size_t i = 0; i < model.layout.trunk_weights.size(); ++i) {
      init_tensor(model.layout.trunk_weights[i],
                  model.layout.trunk_weights[i].cols);
    }
    init_tensor(model.layout.mu_weight, model.layout.mu_weight.cols);
    init_tensor(model.layout.logvar_weight, model.layout.logvar_weight.cols);
    init_tensor(model.layout.beta, model.layout.num_topics);
    for (std::size_t v = 0; v < V; ++v) {
      model.params[model.layout.dec_scale.offset + v] = 1.0;
    }
  }

  AdamState adam(model.layout.total, config.learning_rate);
  std::vector<std::size_t> order(corpus.docs.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream shuffle_rng(derive_seed(config.seed, 2 * epoch + 1));
    shuffle_rng.shuffle(order);
    const std::uint64_t noise_seed = derive_seed(config.seed, 2 * epoch + 2);

    EpochTrace trace;
    trace.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      std::vector<TrainExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t d = order[i];
        batch.push_back({&corpus.docs[d].bow,
                         std::span<const double>(standardized.row(d), E), d});
      }
      std::vector<double> grad;
      const ElboTerms terms = batch_terms_and_grad(model, model.params, batch,
                                                   noise_seed, true, &grad);
      if (!std::isfinite(terms.loss)) {
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch));
      }
      adam_step(model.params, grad, adam);
      const double w = static_cast<double>(batch.size());
      trace.mean_loss += terms.loss * w;
      trace.mean_recon += terms.recon * w;
      trace.mean_kl += terms.kl * w;
      seen += batch.size();
    }
    trace.mean_loss /= static_cast<double>(seen);
    trace.mean_recon /= static_cast<double>(seen);
    trace.mean_kl /= static_cast<double>(seen);
    result.trace.push_back(trace);
  }

  result.model = std::move(model);
  return result;
}

std::vector<double> infer_theta(const TrainedModel& model, const BowVector& bow,
                                std::span<const double> raw_context,
                                const std::string& corpus_fingerprint) {
  if (!corpus_fingerprint.empty() && !model.vocab_fingerprint.empty() &&
      corpus_fingerprint != model.vocab_fingerprint) {
    throw ConfigError("vocabulary fingerprint mismatch between model and corpus");
  }
  if (raw_context.size() != model.layout.embedding_dim) {
    throw DimensionError("infer_theta: context length " +
                         std::to_string(raw_context.size()) + " != " +
                         std::to_string(model.layout.embedding_dim));
  }
  const std::vector<double> context = standardize_row(model, raw_context);
  const std::vector<double> input =
      assemble_input(model.layout, bow, context);
  auto [mu, logvar] = encode(model, input, nullptr);
  return softmax(mu);
}

TopicWordList top_words(const TrainedModel& model, const Vocabulary& vocab,
                        std::size_t n) {
  const ParamLayout& layout = model.layout;
  if (n < 1 || n > layout.vocab_size) {
    throw ConfigError("top_words: n out of range");
  }
  TopicWordList result;
  for (std::size_t k = 0; k < layout.num_topics; ++k) {
    const double* beta_row =
        model.params.data() + layout.beta.offset + k * layout.vocab_size;
    std::vector<std::size_t> idx(layout.vocab_size);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n),
                      idx.end(), [&](std::size_t a, std::size_t b) {
                        if (beta_row[a] != beta_row[b]) {
                          return beta_row[a] > beta_row[b];
                        }
                        return a < b;
                      });
    std::vector<std::string> words;
    words.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      words.push_back(vocab.index_to_token[idx[i]]);
    }
    result.topics.push_back(std::move(words));
  }
  return result;
}

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"num_topics", c.num_topics},
          {"mode", c.mode == NtmMode::lcsntm ? "lcsntm" : "bow_only"},
          {"hidden_sizes", c.hidden_sizes},
          {"dropout", c.dropout},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"dirichlet_alpha", c.dirichlet_alpha},
          {"learning_rate", c.learning_rate}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.num_topics = j.at("num_topics").get<std::size_t>();
  c.mode = j.at("mode").get<std::string>() == "lcsntm" ? NtmMode::lcsntm
                                                       : NtmMode::bow_only;
  c.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
  c.dropout = j.at("dropout").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  const ParamLayout& layout = model.layout;
  nlohmann::json tensors = nlohmann::json::array();
  auto add = [&](const std::string& name, const ParamLayout::Tensor& t) {
    tensors.push_back({{"name", name},
                       {"shape", {t.rows, t.cols}},
                       {"data", doubles_to_base64(model.tensor(t))}});
  };
  for (std::size_t i = 0; i < layout.trunk_weights.size(); ++i) {
    add("trunk_weight_" + std::to_string(i), layout.trunk_weights[i]);
    add("trunk_bias_" + std::to_string(i), layout.trunk_biases[i]);
  }
  add("mu_weight", layout.mu_weight);
  add("mu_bias", layout.mu_bias);
  add("logvar_weight", layout.logvar_weight);
  add("logvar_bias", layout.logvar_bias);
  add("beta", layout.beta);
  add("dec_scale", layout.dec_scale);
  add("dec_shift", layout.dec_shift);

  const nlohmann::json doc = {
      {"format_version", kCheckpointVersion},
      {"kind", "ntm"},
      {"config", config_to_json(model.config)},
      {"vocab_size", layout.vocab_size},
      {"embedding_dim", layout.embedding_dim},
      {"vocab_fingerprint", model.vocab_fingerprint},
      {"emb_mean", doubles_to_base64(model.emb_mean)},
      {"emb_std", doubles_to_base64(model.emb_std)},
      {"tensors", tensors}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << doc.dump(2) << "\n";
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  nlohmann::json doc;
  in >> doc;
  if (doc.at("format_version").get<int>() != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  if (doc.at("kind").get<std::string>() != "ntm") {
    throw ConfigError("checkpoint kind is not \"ntm\"");
  }

  TrainedModel model;
  model.config = config_from_json(doc.at("config"));
  const auto V = doc.at("vocab_size").get<std::size_t>();
  const auto E = doc.at("embedding_dim").get<std::size_t>();
  model.layout =
      ParamLayout::make(V, E, model.config.num_topics, model.config.hidden_sizes);
  model.prior =
      dirichlet_prior(model.config.num_topics, model.config.effective_alpha());
  model.vocab_fingerprint = doc.at("vocab_fingerprint").get<std::string>();
  model.emb_mean = base64_to_doubles(doc.at("emb_mean").get<std::string>());
  model.emb_std = base64_to_doubles(doc.at("emb_std").get<std::string>());
  model.params.assign(model.layout.total, 0.0);

  std::map<std::string, const ParamLayout::Tensor*> by_name;
  for (std::size_t i = 0; i < model.layout.trunk_weights.size(); ++i) {
    by_name["trunk_weight_" + std::to_string(i)] = &model.layout.trunk_weights[i];
    by_name["trunk_bias_" + std::to_string(i)] = &model.layout.trunk_biases[i];
  }
  by_name["mu_weight"] = &model.layout.mu_weight;
  by_name["mu_bias"] = &model.layout.mu_bias;
  by_name["logvar_weight"] = &model.layout.logvar_weight;
  by_name["logvar_bias"] = &model.layout.logvar_bias;
  by_name["beta"] = &model.layout.beta;
  by_name["dec_scale"] = &model.layout.dec_scale;
  by_name["dec_shift"] = &model.layout.dec_shift;

  for (const auto& entry : doc.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("unknown tensor " + name);
    const auto values = base64_to_doubles(entry.at("data").get<std::string>());
    if (values.size() != it->second->size()) {
      throw ConfigError("tensor " + name + " has wrong size");
    }
    std::copy(values.begin(), values.end(),
              model.params.begin() +
                  static_cast<std::ptrdiff_t>(it->second->offset));
  }
  return model;
}

}  // namespace stm
