#include "stm/lda.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "stm/encoding.hpp"
#include "stm/rng.hpp"

namespace stm {

GibbsState gibbs_fit(const ProcessedCorpus& corpus, const GibbsConfig& config) {
  if (corpus.docs.empty()) throw ConfigError("gibbs_fit: corpus is empty");
  const std::size_t K = config.num_topics;
  const std::size_t V = corpus.vocab.size();
  const std::size_t D = corpus.docs.size();
  const double alpha = config.effective_alpha();
  const double eta = config.eta;

  GibbsState state;
  state.num_topics = K;
  state.vocab_size = V;
  state.vocab_fingerprint = vocab_fingerprint(corpus.vocab);
  state.n_dk = Matrix(D, K);
  state.n_kw = Matrix(K, V);
  state.n_k.assign(K, 0.0);
  state.doc_words.resize(D);
  state.assignments.resize(D);

  RngStream rng(derive_seed(config.seed, 0xfdaULL));
  for (std::size_t d = 0; d < D; ++d) {
    for (const auto& [w, cnt] : corpus.docs[d].bow.entries) {
      for (std::size_t c = 0; c < cnt; ++c) {
        const std::size_t k = rng.next_below(K);
        state.doc_words[d].push_back(w);
        state.assignments[d].push_back(k);
        state.n_dk(d, k) += 1.0;
        state.n_kw(k, w) += 1.0;
        state.n_k[k] += 1.0;
      }
    }
  }

  std::vector<double> weights(K);
  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    for (std::size_t d = 0; d < D; ++d) {
      auto& words = state.doc_words[d];
      auto& topics = state.assignments[d];
      for (std::size_t i = 0; i < words.size(); ++i) {
        const std::size_t w = words[i];
        const std::size_t old = topics[i];
        state.n_dk(d, old) -= 1.0;
        state.n_kw(old, w) -= 1.0;
        state.n_k[old] -= 1.0;

        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          total += (state.n_dk(d, k) + alpha) * (state.n_kw(k, w) + eta) /
                   (state.n_k[k] + static_cast<double>(V) * eta);
          weights[k] = total;
        }
        const double u = rng.next_double() * total;
        const std::size_t k_new = static_cast<std::size_t>(
            std::lower_bound(weights.begin(), weights.end(), u) -
            weights.begin());
        const std::size_t chosen = std::min(k_new, K - 1);

        topics[i] = chosen;
        state.n_dk(d, chosen) += 1.0;
        state.n_kw(chosen, w) += 1.0;
        state.n_k[chosen] += 1.0;
      }
    }
  }
  return state;
}

TopicWordList lda_topics(const GibbsState& state, const GibbsConfig& config,
                         const Vocabulary& vocab, std::size_t n) {
  const std::size_t K = state.num_topics;
  const std::size_t V = state.vocab_size;
  if (n < 1 || n > V) throw ConfigError("lda_topics: n out of range");

  TopicWordList result;
  std::vector<double> phi(V);
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = state.n_k[k] + static_cast<double>(V) * config.eta;
    for (std::size_t w = 0; w < V; ++w) {
      phi[w] = (state.n_kw(k, w) + config.eta) / denom;
    }
    std::vector<std::size_t> idx(V);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n),
                      idx.end(), [&](std::size_t a, std::size_t b) {
                        if (phi[a] != phi[b]) return phi[a] > phi[b];
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

std::vector<double> lda_theta(const GibbsState& state, const GibbsConfig& config,
                              std::size_t doc_index) {
  if (doc_index >= state.n_dk.rows) {
    throw ConfigError("lda_theta: document index out of range");
  }
  const std::size_t K = state.num_topics;
  const double alpha = config.effective_alpha();
  const double n_d =
      static_cast<double>(state.doc_words[doc_index].size());
  std::vector<double> theta(K);
  const double denom = n_d + static_cast<double>(K) * alpha;
  for (std::size_t k = 0; k < K; ++k) {
    theta[k] = (state.n_dk(doc_index, k) + alpha) / denom;
  }
  return theta;
}

void save_gibbs_checkpoint(const GibbsState& state, const GibbsConfig& config,
                           const std::string& path) {
  nlohmann::json assign = nlohmann::json::array();
  for (std::size_t d = 0; d < state.doc_words.size(); ++d) {
    assign.push_back({{"words", state.doc_words[d]},
                      {"topics", state.assignments[d]}});
  }
  const nlohmann::json doc = {
      {"format_version", 1},
      {"kind", "lda"},
      {"config",
       {{"num_topics", config.num_topics},
        {"alpha", config.alpha},
        {"eta", config.eta},
        {"iterations", config.iterations},
        {"seed", config.seed}}},
      {"vocab_size", state.vocab_size},
      {"vocab_fingerprint", state.vocab_fingerprint},
      {"n_kw", doubles_to_base64(state.n_kw.data)},
      {"n_dk", doubles_to_base64(state.n_dk.data)},
      {"n_k", doubles_to_base64(state.n_k)},
      {"assignments", assign}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << doc.dump(2) << "\n";
}

std::pair<GibbsState, GibbsConfig> load_gibbs_checkpoint(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  nlohmann::json doc;
  in >> doc;
  if (doc.at("kind").get<std::string>() != "lda") {
    throw ConfigError("checkpoint kind is not \"lda\"");
  }
  GibbsConfig config;
  const auto& cj = doc.at("config");
  config.num_topics = cj.at("num_topics").get<std::size_t>();
  config.alpha = cj.at("alpha").get<double>();
  config.eta = cj.at("eta").get<double>();
  config.iterations = cj.at("iterations").get<std::size_t>();
  config.seed = cj.at("seed").get<std::uint64_t>();

  GibbsState state;
  state.num_topics = config.num_topics;
  state.vocab_size = doc.at("vocab_size").get<std::size_t>();
  state.vocab_fingerprint = doc.at("vocab_fingerprint").get<std::string>();
  const auto& assign = doc.at("assignments");
  state.doc_words.reserve(assign.size());
  state.assignments.reserve(assign.size());
  for (const auto& entry : assign) {
    state.doc_words.push_back(entry.at("words").get<std::vector<std::size_t>>());
    state.assignments.push_back(
        entry.at("topics").get<std::vector<std::size_t>>());
  }
  state.n_kw = Matrix(state.num_topics, state.vocab_size);
  state.n_kw.data = base64_to_doubles(doc.at("n_kw").get<std::string>());
  state.n_dk = Matrix(state.doc_words.size(), state.num_topics);
  state.n_dk.data = base64_to_doubles(doc.at("n_dk").get<std::string>());
  state.n_k = base64_to_doubles(doc.at("n_k").get<std::string>());
  return {std::move(state), config};
}

}  // namespace stm
