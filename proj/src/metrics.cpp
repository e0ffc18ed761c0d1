#include "stm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stm {

CoOccurrenceStats build_cooccurrence(
    const std::vector<std::vector<std::string>>& docs) {
  if (docs.empty()) throw MetricError("build_cooccurrence: no documents");
  CoOccurrenceStats stats;
  stats.num_docs = docs.size();
  for (const auto& doc : docs) {
    const std::set<std::string> uniq(doc.begin(), doc.end());
    for (const auto& w : uniq) stats.doc_count[w] += 1;
    for (auto it = uniq.begin(); it != uniq.end(); ++it) {
      auto jt = it;
      for (++jt; jt != uniq.end(); ++jt) {
        stats.joint_count[{*it, *jt}] += 1;
      }
    }
  }
  return stats;
}

TopicScores npmi(const TopicWordList& topics, const CoOccurrenceStats& stats,
                 double epsilon) {
  TopicScores scores;
  const double n = static_cast<double>(stats.num_docs);
  for (const auto& words : topics.topics) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        ++pairs;
        const auto it_i = stats.doc_count.find(words[i]);
        const auto it_j = stats.doc_count.find(words[j]);
        if (it_i == stats.doc_count.end() || it_j == stats.doc_count.end()) {
          sum += -1.0;
          continue;
        }
        const double p_i = static_cast<double>(it_i->second) / n;
        const double p_j = static_cast<double>(it_j->second) / n;
        const double p_ij =
            (static_cast<double>(stats.joint(words[i], words[j])) + epsilon) / n;
        sum += std::log(p_ij / (p_i * p_j)) / (-std::log(p_ij));
      }
    }
    scores.per_topic.push_back(pairs > 0 ? sum / static_cast<double>(pairs)
                                         : 0.0);
  }
  scores.mean = 0.0;
  for (double v : scores.per_topic) scores.mean += v;
  if (!scores.per_topic.empty()) {
    scores.mean /= static_cast<double>(scores.per_topic.size());
  }
  return scores;
}

WordEmbeddingTable load_word_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricError("cannot open word embedding file: " + path);
  WordEmbeddingTable table;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<double> vec;
    double v;
    while (ls >> v) vec.push_back(v);
    if (first && vec.size() == 1) {
      // possible "<count> <dim>" header
      char* end = nullptr;
      const long cnt = std::strtol(word.c_str(), &end, 10);
      if (end && *end == '\0' && cnt >= 0 &&
          vec[0] == std::floor(vec[0])) {
        first = false;
        continue;
      }
    }
    first = false;
    for (double x : vec) {
      if (!std::isfinite(x)) {
        throw MetricError("non-finite embedding at line " +
                          std::to_string(line_no));
      }
    }
    if (table.dim == 0) {
      table.dim = vec.size();
    } else if (vec.size() != table.dim) {
      throw MetricError("embedding dimension mismatch at line " +
                        std::to_string(line_no));
    }
    table.vectors[word] = std::move(vec);
  }
  return table;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw MetricError("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TopicScores cwe(const TopicWordList& topics, const WordEmbeddingTable& table) {
  TopicScores scores;
  for (const auto& words : topics.topics) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto it_i = table.vectors.find(words[i]);
      if (it_i == table.vectors.end()) continue;
      for (std::size_t j = i + 1; j < words.size(); ++j) {
        const auto it_j = table.vectors.find(words[j]);
        if (it_j == table.vectors.end()) continue;
        sum += cosine_similarity(it_i->second, it_j->second);
        ++pairs;
      }
    }
    scores.per_topic.push_back(pairs > 0 ? sum / static_cast<double>(pairs)
                                         : 0.0);
    scores.flagged.push_back(pairs == 0);
  }
  scores.mean = 0.0;
  for (double v : scores.per_topic) scores.mean += v;
  if (!scores.per_topic.empty()) {
    scores.mean /= static_cast<double>(scores.per_topic.size());
  }
  return scores;
}

double rbo(const std::vector<std::string>& list_a,
           const std::vector<std::string>& list_b, double p) {
  if (list_a.size() != list_b.size()) {
    throw MetricError("rbo: lists must share a depth");
  }
  const auto check_distinct = [](const std::vector<std::string>& l) {
    std::set<std::string> seen(l.begin(), l.end());
    if (seen.size() != l.size()) {
      throw MetricError("rbo: duplicate element within a list");
    }
  };
  check_distinct(list_a);
  check_distinct(list_b);
  if (list_a.empty()) return 1.0;

  std::set<std::string> head_a, head_b;
  double numer = 0.0, denom = 0.0;
  double weight = 1.0;
  std::size_t overlap = 0;
  for (std::size_t k = 0; k < list_a.size(); ++k) {
    // incremental overlap update at depth k+1
    if (head_b.count(list_a[k])) ++overlap;
    if (head_a.count(list_b[k])) ++overlap;
    if (list_a[k] == list_b[k]) ++overlap;
    head_a.insert(list_a[k]);
    head_b.insert(list_b[k]);

    const double agreement =
        static_cast<double>(overlap) / static_cast<double>(k + 1);
    numer += weight * agreement;
    denom += weight;
    weight *= p;
  }
  return numer / denom;
}

double irbo(const TopicWordList& topics, double p) {
  const std::size_t K = topics.topics.size();
  if (K < 2) throw MetricError("irbo requires at least 2 topics");
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) {
      sum += rbo(topics.topics[i], topics.topics[j], p);
      ++pairs;
    }
  }
  return 1.0 - sum / static_cast<double>(pairs);
}

std::string metric_report_to_json(const MetricReport& report) {
  nlohmann::json doc = {
      {"num_topics", report.num_topics},
      {"corpus_id", report.corpus_id},
      {"model_id", report.model_id},
      {"npmi", {{"per_topic", report.npmi.per_topic}, {"mean", report.npmi.mean}}},
      {"irbo", report.irbo}};
  if (report.has_cwe) {
    doc["cwe"] = {{"per_topic", report.cwe.per_topic},
                  {"mean", report.cwe.mean},
                  {"no_scorable_pair", report.cwe.flagged}};
  }
  return doc.dump(2);
}

std::string metric_report_to_table(const MetricReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(24) << "model" << std::setw(10) << "k"
      << std::setw(10) << "NPMI";
  if (report.has_cwe) out << std::setw(10) << "CWE";
  out << std::setw(10) << "IRBO" << "\n";
  out << std::left << std::setw(24) << report.model_id << std::setw(10)
      << report.num_topics << std::setw(10) << report.npmi.mean;
  if (report.has_cwe) out << std::setw(10) << report.cwe.mean;
  out << std::setw(10) << report.irbo << "\n";
  return out.str();
}

}  // namespace stm
