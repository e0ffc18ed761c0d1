#pragma once

// Shared synthetic fixtures: planted-topic corpora with known structure.

#include <string>
#include <vector>

#include "stm/corpus.hpp"
#include "stm/ntm.hpp"
#include "stm/rng.hpp"

namespace fixtures {

inline std::vector<std::string> planted_words(char prefix, std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) {
    words.push_back(std::string(1, prefix) + "word" + std::to_string(i));
  }
  return words;
}

// Corpus over two disjoint 10-word topic vocabularies; document d draws
// all its tokens from set (d % 2).
inline stm::ProcessedCorpus planted_corpus(std::size_t num_docs,
                                           std::size_t tokens_per_doc,
                                           std::uint64_t seed,
                                           bool with_labels = false) {
  const auto set_a = planted_words('a', 10);
  const auto set_b = planted_words('b', 10);
  stm::RngStream rng(seed);

  std::vector<std::vector<std::string>> token_lists;
  std::vector<stm::RawDocument> raw;
  for (std::size_t d = 0; d < num_docs; ++d) {
    const auto& pool = (d % 2 == 0) ? set_a : set_b;
    std::vector<std::string> tokens;
    for (std::size_t t = 0; t < tokens_per_doc; ++t) {
      tokens.push_back(pool[rng.next_below(pool.size())]);
    }
    token_lists.push_back(tokens);
  }

  stm::ProcessedCorpus corpus;
  corpus.vocab = stm::build_vocabulary(token_lists, 1, 1000);
  for (std::size_t d = 0; d < num_docs; ++d) {
    stm::ProcessedDocument doc;
    doc.id = "doc" + std::to_string(d);
    doc.bow = stm::to_bow(token_lists[d], corpus.vocab);
    if (with_labels) doc.label = (d % 2 == 0) ? "topic_a" : "topic_b";
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

// Permutation-aware top-word purity: each topic is matched to its
// majority planted set; returns the fraction of top words covered.
inline double planted_purity(const stm::TopicWordList& topics) {
  std::size_t majority = 0, total = 0;
  for (const auto& words : topics.topics) {
    std::size_t from_a = 0, from_b = 0;
    for (const auto& w : words) {
      if (!w.empty() && w[0] == 'a') ++from_a;
      if (!w.empty() && w[0] == 'b') ++from_b;
    }
    majority += std::max(from_a, from_b);
    total += words.size();
  }
  return static_cast<double>(majority) / static_cast<double>(total);
}

// True when the two topics' top lists favour different planted sets.
inline bool topics_are_distinct(const stm::TopicWordList& topics) {
  std::vector<char> majority_set;
  for (const auto& words : topics.topics) {
    std::size_t from_a = 0, from_b = 0;
    for (const auto& w : words) {
      if (!w.empty() && w[0] == 'a') ++from_a;
      if (!w.empty() && w[0] == 'b') ++from_b;
    }
    majority_set.push_back(from_a >= from_b ? 'a' : 'b');
  }
  for (std::size_t i = 1; i < majority_set.size(); ++i) {
    if (majority_set[i] != majority_set[0]) return true;
  }
  return majority_set.size() < 2;
}

}  // namespace fixtures
