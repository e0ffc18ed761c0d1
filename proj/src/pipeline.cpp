#include "stm/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "stm/encoding.hpp"

namespace fs = std::filesystem;

namespace stm {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) parts.push_back(trim(part));
  return parts;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot read file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("cannot write file: " + path.string());
  out << content;
}

void require_input(const PipelineConfig& config, const std::string& key,
                   const std::string& name) {
  const std::string& path = config.get(key);
  if (path.empty()) {
    throw PipelineError("missing input: " + name + " (set " + key + ")");
  }
  if (!fs::exists(path)) {
    throw PipelineError("missing input: " + name + " file not found: " + path);
  }
}

}  // namespace

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::short_text: return "short";
    case Variant::extended: return "extended";
    case Variant::lcsntm: return "lcsntm";
  }
  return "short";
}

Variant parse_variant(const std::string& name) {
  if (name == "short") return Variant::short_text;
  if (name == "extended") return Variant::extended;
  if (name == "lcsntm") return Variant::lcsntm;
  throw ConfigError("unknown variant: " + name +
                    " (expected short, extended, or lcsntm)");
}

std::string family_name(ModelFamily family) {
  return family == ModelFamily::neural ? "neural" : "lda";
}

ModelFamily parse_family(const std::string& name) {
  if (name == "neural") return ModelFamily::neural;
  if (name == "lda") return ModelFamily::lda;
  throw ConfigError("unknown model family: " + name +
                    " (expected neural or lda)");
}

const std::map<std::string, std::string>& PipelineConfig::defaults() {
  static const std::map<std::string, std::string> table = {
      {"corpus.path", ""},
      {"corpus.stopwords", ""},
      {"corpus.extensions", ""},
      {"corpus.embeddings", ""},
      {"output.dir", "out"},
      {"preprocess.min_df", "2"},
      {"preprocess.max_vocab", "20000"},
      {"preprocess.min_token_length", "2"},
      {"preprocess.lowercase", "true"},
      {"preprocess.strip_punctuation", "true"},
      {"model.num_topics", "20"},
      {"model.hidden_sizes", "100,100"},
      {"model.dropout", "0.2"},
      {"model.epochs", "100"},
      {"model.batch_size", "64"},
      {"model.learning_rate", "0.002"},
      {"model.alpha", "0"},
      {"lda.alpha", "0"},
      {"lda.eta", "0.01"},
      {"lda.iterations", "200"},
      {"extend.endpoint", ""},
      {"extend.generator", "default"},
      {"extend.min_new_tokens", "100"},
      {"extend.max_new_tokens", "200"},
      {"extend.strategy", "beam"},
      {"extend.beam_width", "2"},
      {"extend.sampling_seed", "0"},
      {"extend.timeout_seconds", "30"},
      {"extend.max_concurrent", "4"},
      {"extend.retry_count", "2"},
      {"extend.cache_dir", ""},
      {"extend.output", ""},
      {"metrics.top_n", "10"},
      {"metrics.rbo_p", "0.9"},
      {"metrics.npmi_epsilon", "1e-12"},
      {"metrics.reference", "training"},
      {"metrics.word_embeddings", ""},
      {"eval.folds", "5"},
      {"eval.classifiers", "mnb,logreg"},
      {"run.seed", "0"},
  };
  return table;
}

PipelineConfig PipelineConfig::load(const std::optional<std::string>& file,
                                    const std::vector<std::string>& overrides) {
  PipelineConfig config;
  config.values = defaults();
  for (const auto& [key, value] : config.values) {
    config.provenance[key] = "default";
  }

  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file: " + *file);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string text = trim(line);
      if (text.empty() || text[0] == '#') continue;
      if (text.front() == '[' && text.back() == ']') {
        section = trim(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected key = value");
      }
      std::string key = trim(text.substr(0, eq));
      if (!section.empty()) key = section + "." + key;
      if (!config.values.count(key)) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unknown key: " + key);
      }
      config.values[key] = trim(text.substr(eq + 1));
      config.provenance[key] = "file";
    }
  }

  for (const auto& item : overrides) {
    std::string text = item;
    if (text.rfind("--", 0) == 0) text = text.substr(2);
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must be key=value: " + item);
    }
    const std::string key = trim(text.substr(0, eq));
    if (!config.values.count(key)) {
      throw ConfigError("unknown config key: " + key);
    }
    config.values[key] = trim(text.substr(eq + 1));
    config.provenance[key] = "flag";
  }
  return config;
}

const std::string& PipelineConfig::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double PipelineConfig::get_double(const std::string& key) const {
  const std::string& text = get(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: " + text);
  }
}

std::size_t PipelineConfig::get_size(const std::string& key) const {
  const double value = get_double(key);
  if (value < 0 || value != std::floor(value)) {
    throw ConfigError("config key " + key +
                      ": expected a nonnegative integer: " + get(key));
  }
  return static_cast<std::size_t>(value);
}

bool PipelineConfig::get_bool(const std::string& key) const {
  const std::string& text = get(key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key " + key + ": expected true/false: " + text);
}

void PipelineConfig::set_user(const std::string& key,
                              const std::string& value) {
  if (!values.count(key)) throw ConfigError("unknown config key: " + key);
  values[key] = value;
  provenance[key] = "flag";
}

std::uint64_t PipelineConfig::seed() const {
  return static_cast<std::uint64_t>(get_size("run.seed"));
}

std::string PipelineConfig::output_dir() const { return get("output.dir"); }

PreprocessOptions PipelineConfig::preprocess_options() const {
  PreprocessOptions opts;
  opts.min_df = get_size("preprocess.min_df");
  opts.max_vocab = get_size("preprocess.max_vocab");
  opts.rules.min_token_length = get_size("preprocess.min_token_length");
  opts.rules.lowercase = get_bool("preprocess.lowercase");
  opts.rules.strip_punctuation = get_bool("preprocess.strip_punctuation");
  if (!get("corpus.stopwords").empty()) {
    require_input(*this, "corpus.stopwords", "stopwords");
    opts.rules.stopwords = load_stopwords(get("corpus.stopwords"));
  }
  return opts;
}

ModelConfig PipelineConfig::model_config(Variant variant) const {
  ModelConfig model;
  model.num_topics = get_size("model.num_topics");
  model.mode = variant == Variant::lcsntm ? NtmMode::lcsntm : NtmMode::bow_only;
  model.hidden_sizes.clear();
  for (const auto& part : split(get("model.hidden_sizes"), ',')) {
    if (part.empty()) continue;
    model.hidden_sizes.push_back(static_cast<std::size_t>(std::stoul(part)));
  }
  model.dropout = get_double("model.dropout");
  model.epochs = get_size("model.epochs");
  model.batch_size = get_size("model.batch_size");
  model.learning_rate = get_double("model.learning_rate");
  model.dirichlet_alpha = get_double("model.alpha");
  model.seed = seed();
  return model;
}

GibbsConfig PipelineConfig::gibbs_config() const {
  GibbsConfig gibbs;
  gibbs.num_topics = get_size("model.num_topics");
  gibbs.alpha = get_double("lda.alpha");
  gibbs.eta = get_double("lda.eta");
  gibbs.iterations = get_size("lda.iterations");
  gibbs.seed = seed();
  return gibbs;
}

ExtensionParams PipelineConfig::extension_params() const {
  ExtensionParams params;
  params.min_new_tokens = static_cast<int>(get_size("extend.min_new_tokens"));
  params.max_new_tokens = static_cast<int>(get_size("extend.max_new_tokens"));
  const std::string& strategy = get("extend.strategy");
  if (strategy == "beam") {
    params.strategy = BeamStrategy{static_cast<int>(get_size("extend.beam_width"))};
  } else if (strategy == "sampling") {
    params.strategy = SamplingStrategy{
        static_cast<std::uint64_t>(get_size("extend.sampling_seed"))};
  } else {
    throw ConfigError("config key extend.strategy: expected beam or sampling: " +
                      strategy);
  }
  return params;
}

GenerationServiceConfig PipelineConfig::service_config() const {
  GenerationServiceConfig service;
  service.endpoint = get("extend.endpoint");
  service.generator = get("extend.generator");
  service.timeout_seconds = get_double("extend.timeout_seconds");
  service.max_concurrent = static_cast<int>(get_size("extend.max_concurrent"));
  service.retry_count = static_cast<int>(get_size("extend.retry_count"));
  return service;
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    path_.clear();
    throw PipelineError("output directory is locked by another run: " + dir);
  }
  ::close(fd);
}

DirLock::~DirLock() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

std::string sha256_file(const std::string& path) {
  return sha256_hex(read_file(path));
}

namespace {

// Word set per kept document, recovered from the BOW: coherence uses
// boolean document co-occurrence, so the per-document vocabulary-word
// sets carry exactly the needed information.
std::vector<std::vector<std::string>> bow_word_sets(
    const ProcessedCorpus& corpus) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.docs.size());
  for (const auto& doc : corpus.docs) {
    std::vector<std::string> words;
    words.reserve(doc.bow.entries.size());
    for (const auto& [idx, cnt] : doc.bow.entries) {
      words.push_back(corpus.vocab.index_to_token[idx]);
    }
    docs.push_back(std::move(words));
  }
  return docs;
}

fs::path preprocess_dir(const PipelineConfig& config) {
  return fs::path(config.output_dir()) / "preprocess";
}

// Identifies the preprocessing inputs beyond the corpus file itself, so
// cached artifacts are invalidated when any knob changes.
std::string preprocess_options_fingerprint(const PipelineConfig& config) {
  std::ostringstream key;
  key << config.get("preprocess.min_df") << "|"
      << config.get("preprocess.max_vocab") << "|"
      << config.get("preprocess.min_token_length") << "|"
      << config.get("preprocess.lowercase") << "|"
      << config.get("preprocess.strip_punctuation") << "|";
  const std::string& stopwords = config.get("corpus.stopwords");
  if (!stopwords.empty() && fs::exists(stopwords)) {
    key << sha256_file(stopwords);
  }
  return sha256_hex(key.str());
}

fs::path run_dir_for(const PipelineConfig& config, Variant variant) {
  return fs::path(config.output_dir()) / variant_name(variant);
}

void write_preprocess_artifacts(const fs::path& dir,
                                const ProcessedCorpus& corpus,
                                const PreprocessStats& stats,
                                const std::string& corpus_hash,
                                const std::string& options_hash) {
  std::ostringstream vocab_out;
  for (std::size_t i = 0; i < corpus.vocab.size(); ++i) {
    vocab_out << corpus.vocab.index_to_token[i] << " "
              << corpus.vocab.doc_frequency[i] << "\n";
  }
  write_file(dir / "vocab.txt", vocab_out.str());

  std::ostringstream bow_out;
  for (const auto& doc : corpus.docs) {
    nlohmann::json row = {{"id", doc.id}};
    auto& entries = row["bow"] = nlohmann::json::array();
    for (const auto& [idx, cnt] : doc.bow.entries) {
      entries.push_back({idx, cnt});
    }
    if (doc.label) row["label"] = *doc.label;
    bow_out << row.dump() << "\n";
  }
  write_file(dir / "bow.jsonl", bow_out.str());

  const nlohmann::json summary = {{"input_docs", stats.input_docs},
                                  {"kept_docs", stats.kept_docs},
                                  {"dropped_empty", stats.dropped_empty},
                                  {"average_length", stats.average_length},
                                  {"vocab_size", stats.vocab_size},
                                  {"corpus_sha256", corpus_hash},
                                  {"options_sha256", options_hash}};
  write_file(dir / "stats.json", summary.dump(2) + "\n");
}

// Reload run_preprocess artifacts when they match the current corpus
// file; returns nothing when absent or stale so callers recompute.
std::optional<ProcessedCorpus> try_load_preprocessed(
    const PipelineConfig& config, const std::string& corpus_hash,
    const std::string& options_hash) {
  const fs::path dir = preprocess_dir(config);
  if (!fs::exists(dir / "stats.json") || !fs::exists(dir / "vocab.txt") ||
      !fs::exists(dir / "bow.jsonl")) {
    return std::nullopt;
  }
  nlohmann::json stats;
  try {
    stats = nlohmann::json::parse(read_file((dir / "stats.json").string()));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (stats.value("corpus_sha256", std::string()) != corpus_hash ||
      stats.value("options_sha256", std::string()) != options_hash) {
    return std::nullopt;
  }

  ProcessedCorpus corpus;
  std::istringstream vocab_in(read_file((dir / "vocab.txt").string()));
  std::string token;
  std::size_t df = 0;
  while (vocab_in >> token >> df) {
    corpus.vocab.token_to_index[token] = corpus.vocab.index_to_token.size();
    corpus.vocab.index_to_token.push_back(token);
    corpus.vocab.doc_frequency.push_back(df);
  }

  std::istringstream bow_in(read_file((dir / "bow.jsonl").string()));
  std::string line;
  while (std::getline(bow_in, line)) {
    if (trim(line).empty()) continue;
    const nlohmann::json row = nlohmann::json::parse(line);
    ProcessedDocument doc;
    doc.id = row.at("id").get<std::string>();
    for (const auto& entry : row.at("bow")) {
      doc.bow.entries.emplace_back(entry.at(0).get<std::size_t>(),
                                   entry.at(1).get<std::size_t>());
    }
    if (row.contains("label")) doc.label = row.at("label").get<std::string>();
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace

ProcessedCorpus load_variant_corpus(
    const PipelineConfig& config, Variant variant, PreprocessStats* stats,
    std::vector<std::vector<std::string>>* reference_docs) {
  require_input(config, "corpus.path", "corpus");
  std::vector<RawDocument> raw = load_corpus(config.get("corpus.path"));

  if (variant == Variant::extended) {
    require_input(config, "corpus.extensions", "extensions");
    std::vector<std::string> ids;
    for (const auto& doc : raw) ids.push_back(doc.id);
    const auto extensions =
        load_extensions(config.get("corpus.extensions"), ids);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i].text = extensions[i].extended_text;
    }
  }

  ProcessedCorpus corpus =
      preprocess(raw, config.preprocess_options(), stats);

  if (variant == Variant::lcsntm) {
    require_input(config, "corpus.embeddings", "embeddings");
    std::vector<std::string> kept_ids;
    for (const auto& doc : corpus.docs) kept_ids.push_back(doc.id);
    corpus.context_embeddings =
        load_embeddings(config.get("corpus.embeddings"), kept_ids);
    corpus.embedding_dim = corpus.context_embeddings.cols;
  }

  if (reference_docs) *reference_docs = bow_word_sets(corpus);
  return corpus;
}

PreprocessResult run_preprocess(const PipelineConfig& config) {
  DirLock lock(config.output_dir());
  require_input(config, "corpus.path", "corpus");

  PreprocessResult result;
  result.corpus_hash = sha256_file(config.get("corpus.path"));
  result.corpus =
      load_variant_corpus(config, Variant::short_text, &result.stats);
  const fs::path dir = preprocess_dir(config);
  write_preprocess_artifacts(dir, result.corpus, result.stats,
                             result.corpus_hash,
                             preprocess_options_fingerprint(config));
  result.artifact_dir = dir.string();
  return result;
}

std::string run_extend(const PipelineConfig& config) {
  DirLock lock(config.output_dir());
  require_input(config, "corpus.path", "corpus");
  if (config.get("extend.endpoint").empty()) {
    throw ConfigError("extend.endpoint is required for the extend step");
  }

  const std::vector<RawDocument> raw = load_corpus(config.get("corpus.path"));
  std::string cache_dir = config.get("extend.cache_dir");
  if (cache_dir.empty()) {
    cache_dir = (fs::path(config.output_dir()) / "extension_cache").string();
  }
  ExtensionCache cache(cache_dir);
  const auto extended = batch_extend(raw, config.extension_params(),
                                     config.service_config(), cache);

  std::string out_path = config.get("extend.output");
  if (out_path.empty()) {
    out_path = (fs::path(config.output_dir()) / "extensions.jsonl").string();
  }
  std::ostringstream out;
  for (const auto& doc : extended) {
    const nlohmann::json row = {{"id", doc.id},
                                {"text", doc.short_text},
                                {"extended_text", doc.extended_text}};
    out << row.dump() << "\n";
  }
  write_file(out_path, out.str());
  return out_path;
}

namespace {

struct TrainedArtifacts {
  ModelFamily family = ModelFamily::neural;
  std::optional<TrainedModel> ntm;
  std::optional<GibbsState> gibbs;
  GibbsConfig gibbs_config;
};

fs::path checkpoint_path(const fs::path& run_dir, ModelFamily family) {
  return run_dir /
         (family == ModelFamily::neural ? "checkpoint.json"
                                        : "lda_checkpoint.json");
}

TrainedArtifacts train_impl(const PipelineConfig& config, Variant variant,
                            ModelFamily family, const ProcessedCorpus& corpus,
                            const fs::path& run_dir) {
  TrainedArtifacts artifacts;
  artifacts.family = family;
  if (family == ModelFamily::neural) {
    const FitResult fit_result = fit(corpus, config.model_config(variant));
    save_checkpoint(fit_result.model,
                    checkpoint_path(run_dir, family).string());
    artifacts.ntm = fit_result.model;
  } else {
    artifacts.gibbs_config = config.gibbs_config();
    artifacts.gibbs = gibbs_fit(corpus, artifacts.gibbs_config);
    save_gibbs_checkpoint(*artifacts.gibbs, artifacts.gibbs_config,
                          checkpoint_path(run_dir, family).string());
  }
  return artifacts;
}

TrainedArtifacts load_artifacts(const PipelineConfig& config, Variant variant,
                                ModelFamily family,
                                const ProcessedCorpus& corpus) {
  const fs::path path =
      checkpoint_path(run_dir_for(config, variant), family);
  if (!fs::exists(path)) {
    throw PipelineError("missing input: checkpoint not found (run train "
                        "first): " +
                        path.string());
  }
  TrainedArtifacts artifacts;
  artifacts.family = family;
  if (family == ModelFamily::neural) {
    artifacts.ntm = load_checkpoint(path.string());
  } else {
    auto [state, gibbs_config] = load_gibbs_checkpoint(path.string());
    artifacts.gibbs = std::move(state);
    artifacts.gibbs_config = gibbs_config;
  }
  const std::string fingerprint = vocab_fingerprint(corpus.vocab);
  const std::string& saved = family == ModelFamily::neural
                                 ? artifacts.ntm->vocab_fingerprint
                                 : artifacts.gibbs->vocab_fingerprint;
  if (saved != fingerprint) {
    throw PipelineError(
        "checkpoint vocabulary does not match the current corpus: " +
        path.string());
  }
  return artifacts;
}

TopicWordList topics_impl(const PipelineConfig& config,
                          const TrainedArtifacts& artifacts,
                          const Vocabulary& vocab) {
  const std::size_t top_n = config.get_size("metrics.top_n");
  if (artifacts.family == ModelFamily::neural) {
    return top_words(*artifacts.ntm, vocab, top_n);
  }
  return lda_topics(*artifacts.gibbs, artifacts.gibbs_config, vocab, top_n);
}

std::string topics_to_text(const TopicWordList& topics) {
  std::ostringstream out;
  for (const auto& words : topics.topics) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out << " ";
      out << words[i];
    }
    out << "\n";
  }
  return out.str();
}

MetricReport score_impl(
    const PipelineConfig& config, Variant variant, ModelFamily family,
    const TopicWordList& topics,
    const std::vector<std::vector<std::string>>& reference_docs) {
  MetricReport report;
  report.num_topics = topics.topics.size();
  report.corpus_id = fs::path(config.get("corpus.path")).filename().string();
  report.model_id = variant_name(variant) + "-" + family_name(family);

  const CoOccurrenceStats stats = build_cooccurrence(reference_docs);
  report.npmi = npmi(topics, stats, config.get_double("metrics.npmi_epsilon"));
  report.irbo = topics.topics.size() >= 2
                    ? irbo(topics, config.get_double("metrics.rbo_p"))
                    : 0.0;

  const std::string& wemb = config.get("metrics.word_embeddings");
  if (!wemb.empty()) {
    require_input(config, "metrics.word_embeddings", "word embeddings");
    report.cwe = cwe(topics, load_word_embeddings(wemb));
    report.has_cwe = true;
  }
  return report;
}

// Per-document topic proportions as classifier features.
Matrix theta_features(const TrainedArtifacts& artifacts,
                      const ProcessedCorpus& corpus) {
  const std::size_t num_topics =
      artifacts.family == ModelFamily::neural
          ? artifacts.ntm->config.num_topics
          : artifacts.gibbs_config.num_topics;
  Matrix features(corpus.docs.size(), num_topics);
  const std::string fingerprint = vocab_fingerprint(corpus.vocab);
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    std::vector<double> theta;
    if (artifacts.family == ModelFamily::neural) {
      std::span<const double> context;
      if (artifacts.ntm->config.mode == NtmMode::lcsntm) {
        context = std::span<const double>(corpus.context_embeddings.row(d),
                                          corpus.context_embeddings.cols);
      }
      theta = infer_theta(*artifacts.ntm, corpus.docs[d].bow, context,
                          fingerprint);
    } else {
      theta = lda_theta(*artifacts.gibbs, artifacts.gibbs_config, d);
    }
    for (std::size_t k = 0; k < num_topics; ++k) features(d, k) = theta[k];
  }
  return features;
}

std::vector<CvReport> classify_impl(const PipelineConfig& config,
                                    const TrainedArtifacts& artifacts,
                                    const ProcessedCorpus& corpus) {
  std::vector<std::string> labels;
  for (const auto& doc : corpus.docs) {
    if (!doc.label) {
      throw PipelineError("classification requires a label on every "
                          "document; document " +
                          doc.id + " has none");
    }
    labels.push_back(*doc.label);
  }
  const Matrix features = theta_features(artifacts, corpus);
  const std::size_t folds = config.get_size("eval.folds");

  std::vector<CvReport> reports;
  for (const auto& name : split(config.get("eval.classifiers"), ',')) {
    if (name.empty()) continue;
    ClassifierKind kind;
    if (name == "mnb") {
      kind = ClassifierKind::mnb;
    } else if (name == "logreg") {
      kind = ClassifierKind::logreg;
    } else {
      throw ConfigError("config key eval.classifiers: unknown classifier: " +
                        name);
    }
    reports.push_back(
        cross_validate(features, labels, kind, folds, config.seed()));
  }
  return reports;
}

bool all_labelled(const ProcessedCorpus& corpus) {
  if (corpus.docs.empty()) return false;
  for (const auto& doc : corpus.docs) {
    if (!doc.label) return false;
  }
  return true;
}

std::string cv_reports_to_json(const std::vector<CvReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& report : reports) {
    arr.push_back(nlohmann::json::parse(cv_report_to_json(report)));
  }
  return arr.dump(2);
}

nlohmann::json manifest_json(const PipelineConfig& config, Variant variant,
                             ModelFamily family) {
  nlohmann::json snapshot = nlohmann::json::object();
  for (const auto& [key, value] : config.values) {
    snapshot[key] = {{"value", value},
                     {"provenance", config.provenance.at(key)}};
  }
  nlohmann::json inputs = nlohmann::json::object();
  const std::vector<std::pair<std::string, std::string>> candidates = {
      {"corpus", "corpus.path"},
      {"extensions", "corpus.extensions"},
      {"embeddings", "corpus.embeddings"},
      {"stopwords", "corpus.stopwords"},
      {"word_embeddings", "metrics.word_embeddings"}};
  for (const auto& [name, key] : candidates) {
    const std::string& path = config.get(key);
    if (path.empty() || !fs::exists(path)) continue;
    inputs[name] = {{"path", path}, {"sha256", sha256_file(path)}};
  }
  return {{"format_version", 1},
          {"variant", variant_name(variant)},
          {"family", family_name(family)},
          {"seed", config.seed()},
          {"config", snapshot},
          {"inputs", inputs}};
}

// Shared corpus assembly: reuses run_preprocess artifacts for the
// short-text variants when the corpus hash matches.
ProcessedCorpus corpus_for_run(
    const PipelineConfig& config, Variant variant,
    std::vector<std::vector<std::string>>* reference_docs) {
  if (variant != Variant::extended) {
    require_input(config, "corpus.path", "corpus");
    const std::string hash = sha256_file(config.get("corpus.path"));
    if (auto cached = try_load_preprocessed(
            config, hash, preprocess_options_fingerprint(config))) {
      ProcessedCorpus corpus = std::move(*cached);
      if (variant == Variant::lcsntm) {
        require_input(config, "corpus.embeddings", "embeddings");
        std::vector<std::string> kept_ids;
        for (const auto& doc : corpus.docs) kept_ids.push_back(doc.id);
        corpus.context_embeddings =
            load_embeddings(config.get("corpus.embeddings"), kept_ids);
        corpus.embedding_dim = corpus.context_embeddings.cols;
      }
      if (reference_docs) *reference_docs = bow_word_sets(corpus);
      return corpus;
    }
  }
  return load_variant_corpus(config, variant, nullptr, reference_docs);
}

std::vector<std::vector<std::string>> reference_for_score(
    const PipelineConfig& config, Variant variant,
    const std::vector<std::vector<std::string>>& training_docs) {
  const std::string& choice = config.get("metrics.reference");
  if (choice == "training") return training_docs;
  if (choice == "short") {
    if (variant == Variant::extended) {
      std::vector<std::vector<std::string>> docs;
      load_variant_corpus(config, Variant::short_text, nullptr, &docs);
      return docs;
    }
    return training_docs;  // short-text variants already score on it
  }
  throw ConfigError(
      "config key metrics.reference: expected training or short: " + choice);
}

}  // namespace

std::string run_train(const PipelineConfig& config, Variant variant,
                      ModelFamily family) {
  DirLock lock(config.output_dir());
  const fs::path run_dir = run_dir_for(config, variant);
  fs::create_directories(run_dir);
  const ProcessedCorpus corpus = corpus_for_run(config, variant, nullptr);
  train_impl(config, variant, family, corpus, run_dir);
  return checkpoint_path(run_dir, family).string();
}

TopicWordList run_topics(const PipelineConfig& config, Variant variant,
                         ModelFamily family) {
  DirLock lock(config.output_dir());
  const ProcessedCorpus corpus = corpus_for_run(config, variant, nullptr);
  const TrainedArtifacts artifacts =
      load_artifacts(config, variant, family, corpus);
  const TopicWordList topics = topics_impl(config, artifacts, corpus.vocab);
  write_file(run_dir_for(config, variant) / "topics.txt",
             topics_to_text(topics));
  return topics;
}

MetricReport run_score(const PipelineConfig& config, Variant variant,
                       ModelFamily family) {
  DirLock lock(config.output_dir());
  std::vector<std::vector<std::string>> training_docs;
  const ProcessedCorpus corpus =
      corpus_for_run(config, variant, &training_docs);
  const TrainedArtifacts artifacts =
      load_artifacts(config, variant, family, corpus);
  const TopicWordList topics = topics_impl(config, artifacts, corpus.vocab);
  const MetricReport report =
      score_impl(config, variant, family, topics,
                 reference_for_score(config, variant, training_docs));
  write_file(run_dir_for(config, variant) / "metrics.json",
             metric_report_to_json(report) + "\n");
  return report;
}

std::vector<CvReport> run_classify(const PipelineConfig& config,
                                   Variant variant, ModelFamily family) {
  DirLock lock(config.output_dir());
  const ProcessedCorpus corpus = corpus_for_run(config, variant, nullptr);
  const TrainedArtifacts artifacts =
      load_artifacts(config, variant, family, corpus);
  const std::vector<CvReport> reports =
      classify_impl(config, artifacts, corpus);
  write_file(run_dir_for(config, variant) / "cv.json",
             cv_reports_to_json(reports) + "\n");
  return reports;
}

ExperimentResult run_experiment(const PipelineConfig& config, Variant variant,
                                ModelFamily family) {
  DirLock lock(config.output_dir());
  const fs::path run_dir = run_dir_for(config, variant);
  fs::create_directories(run_dir);

  std::vector<std::vector<std::string>> training_docs;
  const ProcessedCorpus corpus =
      corpus_for_run(config, variant, &training_docs);

  const TrainedArtifacts artifacts =
      train_impl(config, variant, family, corpus, run_dir);

  ExperimentResult result;
  result.run_dir = run_dir.string();
  result.topics = topics_impl(config, artifacts, corpus.vocab);
  write_file(run_dir / "topics.txt", topics_to_text(result.topics));

  result.metrics =
      score_impl(config, variant, family, result.topics,
                 reference_for_score(config, variant, training_docs));
  write_file(run_dir / "metrics.json",
             metric_report_to_json(result.metrics) + "\n");

  if (all_labelled(corpus)) {
    result.cv = classify_impl(config, artifacts, corpus);
    write_file(run_dir / "cv.json", cv_reports_to_json(result.cv) + "\n");
  }

  write_file(run_dir / "manifest.json",
             manifest_json(config, variant, family).dump(2) + "\n");
  return result;
}

SweepResult run_length_sweep(
    const PipelineConfig& config,
    const std::vector<std::pair<std::string, std::string>>& labelled_files) {
  if (labelled_files.size() < 2) {
    throw PipelineError(
        "length sweep needs at least two labelled extension corpora");
  }

  SweepResult result;
  for (const auto& [label, path] : labelled_files) {
    PipelineConfig sub = config;
    sub.set_user("corpus.extensions", path);
    sub.set_user("output.dir",
                 (fs::path(config.output_dir()) / "sweep" / label).string());
    SweepCell cell;
    cell.label = label;
    try {
      cell.metrics = run_experiment(sub, Variant::extended).metrics;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    result.cells.push_back(std::move(cell));
  }

  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << std::left << std::setw(10) << "metric";
  for (const auto& cell : result.cells) {
    table << std::setw(14) << cell.label;
  }
  table << "\n";
  const auto emit_row = [&](const std::string& name, auto getter) {
    table << std::left << std::setw(10) << name;
    for (const auto& cell : result.cells) {
      if (!cell.ok) {
        table << std::setw(14) << "FAILED";
      } else if (auto value = getter(cell.metrics)) {
        table << std::setw(14) << *value;
      } else {
        table << std::setw(14) << "n/a";
      }
    }
    table << "\n";
  };
  emit_row("NPMI", [](const MetricReport& m) -> std::optional<double> {
    return m.npmi.mean;
  });
  emit_row("CWE", [](const MetricReport& m) -> std::optional<double> {
    if (!m.has_cwe) return std::nullopt;
    return m.cwe.mean;
  });
  emit_row("IRBO", [](const MetricReport& m) -> std::optional<double> {
    return m.irbo;
  });
  result.table = table.str();

  write_file(fs::path(config.output_dir()) / "sweep" / "table.txt",
             result.table);
  return result;
}

std::string run_report(const PipelineConfig& config) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  bool found = false;
  for (const Variant variant :
       {Variant::short_text, Variant::extended, Variant::lcsntm}) {
    const fs::path run_dir = run_dir_for(config, variant);
    const fs::path metrics_path = run_dir / "metrics.json";
    if (!fs::exists(metrics_path)) continue;
    found = true;
    const nlohmann::json metrics =
        nlohmann::json::parse(read_file(metrics_path.string()));
    out << "== " << variant_name(variant) << " ==\n";
    out << "model: " << metrics.value("model_id", std::string("?"))
        << "  topics: " << metrics.value("num_topics", 0) << "\n";
    out << "NPMI: " << metrics.at("npmi").at("mean").get<double>();
    if (metrics.contains("cwe")) {
      out << "  CWE: " << metrics.at("cwe").at("mean").get<double>();
    }
    out << "  IRBO: " << metrics.value("irbo", 0.0) << "\n";
    const fs::path cv_path = run_dir / "cv.json";
    if (fs::exists(cv_path)) {
      const nlohmann::json cv =
          nlohmann::json::parse(read_file(cv_path.string()));
      for (const auto& report : cv) {
        out << "accuracy (" << report.value("classifier", std::string("?"))
            << "): " << report.value("mean_accuracy", 0.0) << "\n";
      }
    }
    out << "\n";
  }
  const fs::path sweep_table = fs::path(config.output_dir()) / "sweep" /
                               "table.txt";
  if (fs::exists(sweep_table)) {
    found = true;
    out << "== length sweep ==\n" << read_file(sweep_table.string());
  }
  if (!found) {
    throw PipelineError("no run artifacts found under " + config.output_dir());
  }
  return out.str();
}

}  // namespace stm
