#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stm/corpus.hpp"
#include "stm/evalclf.hpp"
#include "stm/extend.hpp"
#include "stm/lda.hpp"
#include "stm/metrics.hpp"
#include "stm/ntm.hpp"

namespace stm {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { short_text, extended, lcsntm };
std::string variant_name(Variant variant);
Variant parse_variant(const std::string& name);

enum class ModelFamily { neural, lda };
std::string family_name(ModelFamily family);
ModelFamily parse_family(const std::string& name);

// Flat key-value configuration: "[section]" headers group keys, the full
// key is "section.key", and every key can be overridden by a
// "--section.key=value" flag. Unknown keys are usage errors.
struct PipelineConfig {
  std::map<std::string, std::string> values;
  std::map<std::string, std::string> provenance;  // default | file | flag

  static const std::map<std::string, std::string>& defaults();
  static PipelineConfig load(const std::optional<std::string>& file,
                             const std::vector<std::string>& overrides = {});

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  void set_user(const std::string& key, const std::string& value);

  std::uint64_t seed() const;
  std::string output_dir() const;
  PreprocessOptions preprocess_options() const;
  ModelConfig model_config(Variant variant) const;
  GibbsConfig gibbs_config() const;
  ExtensionParams extension_params() const;
  GenerationServiceConfig service_config() const;
};

// Exclusive per-output-directory lock; the file is removed on release.
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

std::string sha256_file(const std::string& path);

struct PreprocessResult {
  ProcessedCorpus corpus;
  PreprocessStats stats;
  std::string corpus_hash;
  std::string artifact_dir;
};

// Tokenize, build the vocabulary, BOW-encode, and write vocab.txt,
// bow.jsonl, and stats.json under <output.dir>/preprocess.
PreprocessResult run_preprocess(const PipelineConfig& config);

// Variant corpus assembly. `short` and `lcsntm` use the short texts
// (lcsntm additionally attaches document embeddings); `extended` uses
// the extended texts. Tokenized word sets per kept document are
// returned for coherence scoring when `reference_docs` is non-null.
ProcessedCorpus load_variant_corpus(
    const PipelineConfig& config, Variant variant,
    PreprocessStats* stats = nullptr,
    std::vector<std::vector<std::string>>* reference_docs = nullptr);

// Calls the generation service for every corpus document and writes the
// extended corpus JSONL; returns the output path.
std::string run_extend(const PipelineConfig& config);

std::string run_train(const PipelineConfig& config, Variant variant,
                      ModelFamily family);

TopicWordList run_topics(const PipelineConfig& config, Variant variant,
                         ModelFamily family);

MetricReport run_score(const PipelineConfig& config, Variant variant,
                       ModelFamily family);

std::vector<CvReport> run_classify(const PipelineConfig& config,
                                   Variant variant, ModelFamily family);

struct ExperimentResult {
  TopicWordList topics;
  MetricReport metrics;
  std::vector<CvReport> cv;
  std::string run_dir;
};

// Full pipeline for one variant: train, extract topics, score, classify
// (when labels are present), and write all artifacts plus a manifest
// with the config snapshot, seed, and input hashes.
ExperimentResult run_experiment(const PipelineConfig& config, Variant variant,
                                ModelFamily family = ModelFamily::neural);

struct SweepCell {
  std::string label;
  bool ok = false;
  std::string error;
  MetricReport metrics;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string table;
};

// Runs the `extended` variant once per labelled extension corpus;
// failures mark their cell and the sweep continues.
SweepResult run_length_sweep(
    const PipelineConfig& config,
    const std::vector<std::pair<std::string, std::string>>& labelled_files);

// Human-readable summary assembled from the artifacts in output.dir.
std::string run_report(const PipelineConfig& config);

}  // namespace stm
