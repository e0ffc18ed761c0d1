#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stm/corpus.hpp"
#include "stm/ntm.hpp"

namespace stm {

struct GibbsConfig {
  std::size_t num_topics = 20;
  double alpha = 0.0;  // <= 0 means the 50/K default
  double eta = 0.01;
  std::size_t iterations = 200;
  std::uint64_t seed = 0;

  double effective_alpha() const {
    return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(num_topics);
  }
};

struct GibbsState {
  std::size_t num_topics = 0;
  std::size_t vocab_size = 0;
  // token stream per document: word index plus its current topic
  std::vector<std::vector<std::size_t>> doc_words;
  std::vector<std::vector<std::size_t>> assignments;
  Matrix n_dk;                    // D x K
  Matrix n_kw;                    // K x V
  std::vector<double> n_k;        // K
  std::string vocab_fingerprint;
};

GibbsState gibbs_fit(const ProcessedCorpus& corpus, const GibbsConfig& config);

// phi[k,w] = (n_kw + eta) / (n_k + V*eta), top-n per topic, index tie-break.
TopicWordList lda_topics(const GibbsState& state, const GibbsConfig& config,
                         const Vocabulary& vocab, std::size_t n = 10);

// theta[d,k] = (n_dk + alpha) / (N_d + K*alpha)
std::vector<double> lda_theta(const GibbsState& state, const GibbsConfig& config,
                              std::size_t doc_index);

void save_gibbs_checkpoint(const GibbsState& state, const GibbsConfig& config,
                           const std::string& path);
std::pair<GibbsState, GibbsConfig> load_gibbs_checkpoint(const std::string& path);

}  // namespace stm
