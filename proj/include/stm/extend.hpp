#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "stm/corpus.hpp"

namespace stm {

class ExtendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by batch_extend when some documents fail; successes are cached.
class BatchExtendError : public ExtendError {
 public:
  explicit BatchExtendError(std::vector<std::string> failed_ids,
                            const std::string& detail);
  const std::vector<std::string>& failed_ids() const { return failed_ids_; }

 private:
  std::vector<std::string> failed_ids_;
};

struct BeamStrategy {
  int width = 2;
};
struct SamplingStrategy {
  std::uint64_t seed = 0;
};

struct ExtensionParams {
  int min_new_tokens = 100;
  int max_new_tokens = 200;
  std::variant<BeamStrategy, SamplingStrategy> strategy = BeamStrategy{};
};

struct GenerationServiceConfig {
  std::string endpoint;  // e.g. http://localhost:8080
  std::string generator = "default";
  double timeout_seconds = 30.0;
  int max_concurrent = 4;
  int retry_count = 2;
};

struct ExtendedDocument {
  std::string id;
  std::string short_text;
  std::string extended_text;
};

// Content-addressed on-disk cache: one file per key under the root
// directory, filename = hex SHA-256 of (short_text, params, generator).
// Keys are write-once.
class ExtensionCache {
 public:
  explicit ExtensionCache(std::string root_dir);

  static std::string key(const std::string& short_text,
                         const ExtensionParams& params,
                         const std::string& generator);

  std::optional<std::string> lookup(const std::string& key) const;
  void store(const std::string& key, const std::string& extended_text);

 private:
  std::string root_;
};

ExtendedDocument extend_document(const RawDocument& doc,
                                 const ExtensionParams& params,
                                 const GenerationServiceConfig& config,
                                 ExtensionCache& cache);

std::vector<ExtendedDocument> batch_extend(const std::vector<RawDocument>& docs,
                                           const ExtensionParams& params,
                                           const GenerationServiceConfig& config,
                                           ExtensionCache& cache);

// Extended-corpus JSONL: fields id, text, extended_text. Returns one
// document per expected id, in corpus order; unknown ids produce
// warnings, missing ids are an error.
std::vector<ExtendedDocument> load_extensions(
    const std::string& path, const std::vector<std::string>& corpus_ids,
    std::vector<std::string>* warnings = nullptr);

}  // namespace stm
