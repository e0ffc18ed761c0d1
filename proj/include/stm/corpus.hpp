#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stm/matrix.hpp"

namespace stm {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawDocument {
  std::string id;
  std::string text;
  std::optional<std::string> label;
};

struct TokenizeRules {
  bool lowercase = true;
  bool strip_punctuation = true;
  std::size_t min_token_length = 2;
  std::set<std::string> stopwords;
};

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizeRules& rules);

struct Vocabulary {
  std::map<std::string, std::size_t> token_to_index;
  std::vector<std::string> index_to_token;
  std::vector<std::size_t> doc_frequency;

  std::size_t size() const { return index_to_token.size(); }
  bool contains(const std::string& token) const {
    return token_to_index.count(token) != 0;
  }
};

// Tokens kept when document frequency >= min_df; the max_vocab most
// frequent survive, ties lexicographic. Indices run in descending
// document-frequency order.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::size_t min_df, std::size_t max_vocab);

// Sparse token counts, indices strictly increasing.
struct BowVector {
  std::vector<std::pair<std::size_t, std::size_t>> entries;

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [idx, cnt] : entries) n += cnt;
    return n;
  }
  bool empty() const { return entries.empty(); }
};

BowVector to_bow(const std::vector<std::string>& tokens,
                 const Vocabulary& vocab);

struct ProcessedDocument {
  std::string id;
  BowVector bow;
  std::optional<std::string> label;
};

struct ProcessedCorpus {
  Vocabulary vocab;
  std::vector<ProcessedDocument> docs;
  Matrix context_embeddings;  // docs.size() x embedding_dim when present
  std::size_t embedding_dim = 0;

  bool has_embeddings() const { return context_embeddings.rows > 0; }
  std::size_t num_docs() const { return docs.size(); }
};

// JSONL corpus: one {"id":..., "text":..., "label"?:...} object per line.
std::vector<RawDocument> load_corpus(const std::string& path);

// Plain text embeddings: "<id> <f_1> ... <f_E>" per line, optional
// "<count> <dim>" header. Rows are returned in the order of `ids`.
Matrix load_embeddings(const std::string& path,
                       const std::vector<std::string>& ids);

std::set<std::string> load_stopwords(const std::string& path);

struct PreprocessOptions {
  TokenizeRules rules;
  std::size_t min_df = 2;
  std::size_t max_vocab = 20000;
};

struct PreprocessStats {
  std::size_t input_docs = 0;
  std::size_t kept_docs = 0;
  std::size_t dropped_empty = 0;
  double average_length = 0.0;
  std::size_t vocab_size = 0;
};

// Full pipeline: tokenize, build vocabulary, BOW-encode, drop documents
// that end up empty.
ProcessedCorpus preprocess(const std::vector<RawDocument>& raw,
                           const PreprocessOptions& opts,
                           PreprocessStats* stats = nullptr);

}  // namespace stm
