#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stm/ntm.hpp"

namespace stm {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Document-level boolean co-occurrence counts.
struct CoOccurrenceStats {
  std::size_t num_docs = 0;
  std::map<std::string, std::size_t> doc_count;
  std::map<std::pair<std::string, std::string>, std::size_t> joint_count;

  std::size_t joint(const std::string& a, const std::string& b) const {
    const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto it = joint_count.find(key);
    return it == joint_count.end() ? 0 : it->second;
  }
};

CoOccurrenceStats build_cooccurrence(
    const std::vector<std::vector<std::string>>& docs);

struct TopicScores {
  std::vector<double> per_topic;
  double mean = 0.0;
  std::vector<bool> flagged;  // topics with no scorable pair (CWE only)
};

TopicScores npmi(const TopicWordList& topics, const CoOccurrenceStats& stats,
                 double epsilon = 1e-12);

struct WordEmbeddingTable {
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::size_t dim = 0;
};

// Same line format as the document-embedding files.
WordEmbeddingTable load_word_embeddings(const std::string& path);

TopicScores cwe(const TopicWordList& topics, const WordEmbeddingTable& table);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Truncated, normalized rank-biased overlap at the lists' common depth.
double rbo(const std::vector<std::string>& list_a,
           const std::vector<std::string>& list_b, double p);

// 1 - mean pairwise RBO over all unordered topic pairs.
double irbo(const TopicWordList& topics, double p = 0.9);

struct MetricReport {
  TopicScores npmi;
  TopicScores cwe;
  bool has_cwe = false;
  double irbo = 0.0;
  std::size_t num_topics = 0;
  std::string corpus_id;
  std::string model_id;
};

std::string metric_report_to_json(const MetricReport& report);
std::string metric_report_to_table(const MetricReport& report);

}  // namespace stm
