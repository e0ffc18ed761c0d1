#include "stm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace stm {

std::vector<std::string> tokenize(const std::string& text,
                                  const TokenizeRules& rules) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (rules.strip_punctuation && c < 0x80 && std::ispunct(c)) {
      cleaned.push_back(' ');
    } else if (rules.lowercase && c < 0x80) {
      cleaned.push_back(static_cast<char>(std::tolower(c)));
    } else {
      cleaned.push_back(static_cast<char>(c));
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    if (tok.size() < rules.min_token_length) continue;
    if (rules.stopwords.count(tok)) continue;
    tokens.push_back(tok);
  }
  return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            std::size_t min_df, std::size_t max_vocab) {
  std::map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    std::set<std::string> seen(doc.begin(), doc.end());
    for (const auto& tok : seen) df[tok] += 1;
  }

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [tok, count] : df) {
    if (count >= min_df) kept.emplace_back(tok, count);
  }
  if (kept.empty()) {
    throw CorpusError("build_vocabulary: no token survives min_df=" +
                      std::to_string(min_df));
  }
  // descending doc frequency, lexicographic tie-break
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.size() > max_vocab) kept.resize(max_vocab);

  Vocabulary vocab;
  vocab.index_to_token.reserve(kept.size());
  vocab.doc_frequency.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    vocab.token_to_index[kept[i].first] = i;
    vocab.index_to_token.push_back(kept[i].first);
    vocab.doc_frequency.push_back(kept[i].second);
  }
  return vocab;
}

BowVector to_bow(const std::vector<std::string>& tokens,
                 const Vocabulary& vocab) {
  std::map<std::size_t, std::size_t> counts;
  for (const auto& tok : tokens) {
    auto it = vocab.token_to_index.find(tok);
    if (it != vocab.token_to_index.end()) counts[it->second] += 1;
  }
  BowVector bow;
  bow.entries.assign(counts.begin(), counts.end());
  return bow;
}

std::vector<RawDocument> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);

  std::vector<RawDocument> docs;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
      RawDocument doc;
      doc.id = obj.at("id").get<std::string>();
      doc.text = obj.at("text").get<std::string>();
      if (obj.contains("label")) doc.label = obj["label"].get<std::string>();
      if (doc.id.empty()) throw CorpusError("empty id");
      if (!seen_ids.insert(doc.id).second) {
        throw CorpusError("duplicate document id \"" + doc.id + "\" at line " +
                          std::to_string(line_no) + " of " + path);
      }
      docs.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError("parse error at line " + std::to_string(line_no) +
                        " of " + path + ": " + e.what());
    }
  }
  return docs;
}

namespace {

bool parses_as_integer(const std::string& s) {
  if (s.empty()) return false;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Matrix load_embeddings(const std::string& path,
                       const std::vector<std::string>& ids) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open embedding file: " + path);

  std::unordered_map<std::string, std::vector<double>> table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(f);

    if (first_content_line && fields.size() == 1 && parses_as_integer(key) &&
        parses_as_integer(fields[0])) {
      first_content_line = false;
      continue;  // "<count> <dim>" header
    }
    first_content_line = false;

    std::vector<double> vec;
    vec.reserve(fields.size());
    for (const auto& s : fields) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &pos);
      } catch (const std::exception&) {
        throw CorpusError("embedding parse error at line " +
                          std::to_string(line_no) + " of " + path);
      }
      if (pos != s.size()) {
        throw CorpusError("embedding parse error at line " +
                          std::to_string(line_no) + " of " + path);
      }
      if (!std::isfinite(v)) {
        throw CorpusError("non-finite embedding value for id \"" + key +
                          "\" at line " + std::to_string(line_no));
      }
      vec.push_back(v);
    }
    if (dim == 0) {
      dim = vec.size();
    } else if (vec.size() != dim) {
      throw CorpusError("embedding dimension mismatch at line " +
                        std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + ", got " +
                        std::to_string(vec.size()));
    }
    table[key] = std::move(vec);
  }

  Matrix out(ids.size(), dim);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto it = table.find(ids[r]);
    if (it == table.end()) {
      throw CorpusError("embedding file missing id \"" + ids[r] + "\"");
    }
    std::copy(it->second.begin(), it->second.end(), out.row(r));
  }
  return out;
}

std::set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open stopword file: " + path);
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
      line.pop_back();
    }
    if (!line.empty()) words.insert(line);
  }
  return words;
}

ProcessedCorpus preprocess(const std::vector<RawDocument>& raw,
                           const PreprocessOptions& opts,
                           PreprocessStats* stats) {
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(raw.size());
  for (const auto& doc : raw) token_lists.push_back(tokenize(doc.text, opts.rules));

  ProcessedCorpus corpus;
  corpus.vocab = build_vocabulary(token_lists, opts.min_df, opts.max_vocab);

  std::size_t dropped = 0;
  std::size_t total_tokens = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    BowVector bow = to_bow(token_lists[i], corpus.vocab);
    if (bow.empty()) {
      ++dropped;
      continue;
    }
    total_tokens += bow.total_count();
    corpus.docs.push_back({raw[i].id, std::move(bow), raw[i].label});
  }
  if (stats) {
    stats->input_docs = raw.size();
    stats->kept_docs = corpus.docs.size();
    stats->dropped_empty = dropped;
    stats->average_length =
        corpus.docs.empty()
            ? 0.0
            : static_cast<double>(total_tokens) / corpus.docs.size();
    stats->vocab_size = corpus.vocab.size();
  }
  return corpus;
}

}  // namespace stm
