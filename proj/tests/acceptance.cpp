// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "fixtures.hpp"
#include "stm/pipeline.hpp"
#include "stm/stub_server.hpp"

using namespace stm;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << number << ": "
            << name;
  if (!detail.empty()) std::cout << " [" << detail << "]";
  std::cout << std::endl;
  if (!ok) ++g_failures;
}

template <typename Fn>
void criterion(int number, const std::string& name, Fn&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(number, name, false, std::string("exception: ") + e.what());
  }
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("stm_accept_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainedModel make_random_model(std::size_t vocab, std::size_t emb,
                               std::size_t topics,
                               std::vector<std::size_t> hidden, double dropout,
                               std::uint64_t seed) {
  TrainedModel model;
  model.config.num_topics = topics;
  model.config.hidden_sizes = hidden;
  model.config.dropout = dropout;
  model.config.mode = emb > 0 ? NtmMode::lcsntm : NtmMode::bow_only;
  model.layout = ParamLayout::make(vocab, emb, topics, hidden);
  model.prior = dirichlet_prior(topics, 1.0 / static_cast<double>(topics));
  model.params.assign(model.layout.total, 0.0);
  RngStream rng(seed);
  for (auto& p : model.params) p = rng.uniform(-0.5, 0.5);
  model.emb_mean.assign(emb, 0.0);
  model.emb_std.assign(emb, 1.0);
  return model;
}

// --- criterion 1: gradient correctness -----------------------------------

void check_gradients() {
  RngStream rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t V = 2 + rng.next_below(7);   // <= 8
    const std::size_t K = 2 + rng.next_below(3);   // <= 4
    const std::size_t E = rng.next_below(4);       // <= 3
    const std::size_t H = 1 + rng.next_below(6);   // <= 6
    const double dropout = (trial % 2 == 0) ? 0.0 : 0.2;
    const TrainedModel shape = make_random_model(
        V, E, K, {H}, dropout, 5000 + static_cast<std::uint64_t>(trial));

    std::vector<BowVector> bows;
    std::vector<std::vector<double>> contexts;
    for (int d = 0; d < 2; ++d) {
      BowVector bow;
      for (std::size_t v = 0; v < V; ++v) {
        const std::size_t count = rng.next_below(3);
        if (count > 0) bow.entries.emplace_back(v, count);
      }
      if (bow.entries.empty()) bow.entries.emplace_back(0, 1);
      bows.push_back(std::move(bow));
      std::vector<double> context;
      for (std::size_t e = 0; e < E; ++e) context.push_back(rng.uniform(-1, 1));
      contexts.push_back(std::move(context));
    }
    std::vector<TrainExample> batch;
    for (std::size_t d = 0; d < bows.size(); ++d) {
      batch.push_back({&bows[d], contexts[d], d});
    }

    const std::uint64_t noise_seed = 7000 + trial;
    const double err = finite_diff_check(
        [&](const std::vector<double>& p) {
          return batch_loss(shape, p, batch, noise_seed);
        },
        [&](const std::vector<double>& p) {
          return batch_grad(shape, p, batch, noise_seed);
        },
        shape.params, 1e-5);
    worst = std::max(worst, err);
  }
  std::ostringstream detail;
  detail << "max relative error " << worst;
  report(1, "gradient matches finite differences", worst < 1e-4, detail.str());
}

// --- criterion 2/3: planted-topic recovery --------------------------------

void check_neural_recovery() {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ProcessedCorpus corpus = fixtures::planted_corpus(200, 8, 90 + seed);
    ModelConfig config;
    config.num_topics = 2;
    config.mode = NtmMode::bow_only;
    config.seed = seed;
    const FitResult result = fit(corpus, config);
    const TopicWordList topics = top_words(result.model, corpus.vocab, 5);
    if (fixtures::planted_purity(topics) >= 0.8 &&
        fixtures::topics_are_distinct(topics)) {
      ++hits;
    }
  }
  report(2, "neural planted-topic recovery (>= 2 of 3 seeds)", hits >= 2,
         std::to_string(hits) + "/3 seeds at purity >= 0.8");
}

void check_gibbs_recovery() {
  const ProcessedCorpus corpus = fixtures::planted_corpus(200, 8, 93);
  GibbsConfig config;
  config.num_topics = 2;
  config.iterations = 200;
  config.seed = 5;
  const GibbsState state = gibbs_fit(corpus, config);
  const TopicWordList topics = lda_topics(state, config, corpus.vocab, 5);
  const double purity = fixtures::planted_purity(topics);
  report(3, "Gibbs planted-topic recovery", purity >= 0.9,
         "purity " + std::to_string(purity));
}

// --- criterion 4: NPMI oracle ---------------------------------------------

double npmi_pair_oracle(const std::vector<std::vector<std::string>>& docs,
                        const std::string& a, const std::string& b) {
  const double n = static_cast<double>(docs.size());
  double count_a = 0.0, count_b = 0.0, count_ab = 0.0;
  for (const auto& doc : docs) {
    const bool has_a = std::find(doc.begin(), doc.end(), a) != doc.end();
    const bool has_b = std::find(doc.begin(), doc.end(), b) != doc.end();
    count_a += has_a;
    count_b += has_b;
    count_ab += has_a && has_b;
  }
  if (count_a == 0.0 || count_b == 0.0) return -1.0;
  const double p_ab = (count_ab + 1e-12) / n;
  return std::log(p_ab / ((count_a / n) * (count_b / n))) / (-std::log(p_ab));
}

void check_npmi_oracle() {
  RngStream rng(404);
  const std::vector<std::string> pool = {"w0", "w1", "w2", "w3", "w4",
                                         "w5", "w6", "w7", "w8", "w9"};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::string>> docs;
    const std::size_t n_docs = 10 + rng.next_below(91);  // <= 100
    for (std::size_t d = 0; d < n_docs; ++d) {
      std::vector<std::string> doc;
      const std::size_t len = 1 + rng.next_below(5);
      for (std::size_t t = 0; t < len; ++t) {
        doc.push_back(pool[rng.next_below(pool.size())]);
      }
      docs.push_back(std::move(doc));
    }
    TopicWordList topics;
    for (int k = 0; k < 3; ++k) {
      std::vector<std::string> words(pool);
      rng.shuffle(words);
      words.resize(4);
      topics.topics.push_back(std::move(words));
    }
    const TopicScores scores = npmi(topics, build_cooccurrence(docs));
    for (std::size_t k = 0; k < topics.topics.size(); ++k) {
      double sum = 0.0;
      std::size_t pairs = 0;
      const auto& words = topics.topics[k];
      for (std::size_t i = 0; i < words.size(); ++i) {
        for (std::size_t j = i + 1; j < words.size(); ++j) {
          sum += npmi_pair_oracle(docs, words[i], words[j]);
          ++pairs;
        }
      }
      worst = std::max(
          worst, std::abs(scores.per_topic[k] - sum / static_cast<double>(pairs)));
    }
  }
  std::ostringstream detail;
  detail << "max deviation " << worst;
  report(4, "NPMI equals the brute-force oracle", worst < 1e-12, detail.str());
}

// --- criterion 5: RBO / IRBO exactness ------------------------------------

void check_rbo() {
  TopicWordList identical;
  identical.topics = {{"a", "b"}, {"a", "b"}};
  TopicWordList disjoint;
  disjoint.topics = {{"a", "b"}, {"c", "d"}};
  const bool ok = std::abs(irbo(identical, 0.9)) < 1e-12 &&
                  std::abs(irbo(disjoint, 0.9) - 1.0) < 1e-12 &&
                  std::abs(rbo({"x", "y"}, {"x", "z"}, 0.9) - 1.45 / 1.9) <
                      1e-12;
  report(5, "RBO/IRBO exactness", ok);
}

// --- criterion 6: directional echo ----------------------------------------

// Miniature corpus of 300 very short documents over five topics plus a
// shared noise vocabulary, rule-generated 15-word extensions from the
// document's topic pool, and document embeddings computed from the
// extended text's per-topic word fractions.
void write_mini_corpus(const fs::path& dir) {
  const std::size_t num_topics = 5;
  const std::size_t words_per_topic = 10;
  const std::size_t num_noise = 20;
  const std::size_t num_docs = 300;

  std::vector<std::vector<std::string>> topic_pools(num_topics);
  for (std::size_t k = 0; k < num_topics; ++k) {
    for (std::size_t j = 0; j < words_per_topic; ++j) {
      topic_pools[k].push_back("t" + std::to_string(k) + "word" +
                               std::to_string(j));
    }
  }
  std::vector<std::string> noise_pool;
  for (std::size_t j = 0; j < num_noise; ++j) {
    noise_pool.push_back("noiseword" + std::to_string(j));
  }

  RngStream rng(606);
  std::ofstream corpus(dir / "corpus.jsonl");
  std::ofstream extensions(dir / "extensions.jsonl");
  std::ofstream embeddings(dir / "embeddings.txt");
  embeddings << std::setprecision(17);

  for (std::size_t d = 0; d < num_docs; ++d) {
    const std::size_t topic = d % num_topics;
    std::vector<std::string> short_tokens;
    for (int t = 0; t < 4; ++t) {
      if (rng.next_double() < 0.4) {
        short_tokens.push_back(
            topic_pools[topic][rng.next_below(words_per_topic)]);
      } else {
        short_tokens.push_back(noise_pool[rng.next_below(num_noise)]);
      }
    }
    std::vector<std::string> extended_tokens = short_tokens;
    for (int t = 0; t < 15; ++t) {
      extended_tokens.push_back(
          topic_pools[topic][rng.next_below(words_per_topic)]);
    }

    const auto join = [](const std::vector<std::string>& tokens) {
      std::string text;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) text += " ";
        text += tokens[i];
      }
      return text;
    };
    const std::string id = "doc" + std::to_string(d);
    corpus << R"({"id":")" << id << R"(","text":")" << join(short_tokens)
           << R"("})" << "\n";
    extensions << R"({"id":")" << id << R"(","text":")" << join(short_tokens)
               << R"(","extended_text":")" << join(extended_tokens) << R"("})"
               << "\n";

    // per-topic word fractions of the extended text
    std::vector<double> fractions(num_topics, 0.0);
    for (const auto& token : extended_tokens) {
      if (token[0] == 't') {
        fractions[static_cast<std::size_t>(token[1] - '0')] += 1.0;
      }
    }
    embeddings << id;
    for (double f : fractions) {
      embeddings << " " << f / static_cast<double>(extended_tokens.size());
    }
    embeddings << "\n";
  }
}

void check_directional_echo() {
  TempDir tmp("echo");
  write_mini_corpus(tmp.path);

  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    PipelineConfig config = PipelineConfig::load(std::nullopt);
    config.set_user("corpus.path", (tmp.path / "corpus.jsonl").string());
    config.set_user("corpus.extensions",
                    (tmp.path / "extensions.jsonl").string());
    config.set_user("corpus.embeddings",
                    (tmp.path / "embeddings.txt").string());
    config.set_user("output.dir",
                    (tmp.path / ("out" + std::to_string(seed))).string());
    config.set_user("model.num_topics", "5");
    config.set_user("model.epochs", "200");
    config.set_user("run.seed", std::to_string(seed));

    const double short_npmi =
        run_experiment(config, Variant::short_text).metrics.npmi.mean;
    const double lcsntm_npmi =
        run_experiment(config, Variant::lcsntm).metrics.npmi.mean;
    if (lcsntm_npmi > short_npmi) ++wins;
    detail << (seed ? ", " : "") << "seed " << seed << ": " << short_npmi
           << " vs " << lcsntm_npmi;
  }
  report(6, "lcsntm NPMI exceeds short NPMI for the majority of 5 seeds",
         wins >= 3, detail.str());
}

// --- criterion 7: classification protocol ---------------------------------

void check_classification() {
  const ProcessedCorpus corpus =
      fixtures::planted_corpus(200, 8, 70, /*with_labels=*/true);
  ModelConfig config;
  config.num_topics = 2;
  config.mode = NtmMode::bow_only;
  config.seed = 0;
  const FitResult result = fit(corpus, config);

  const std::string fingerprint = vocab_fingerprint(corpus.vocab);
  Matrix features(corpus.docs.size(), config.num_topics);
  std::vector<std::string> labels;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    const auto theta =
        infer_theta(result.model, corpus.docs[d].bow, {}, fingerprint);
    for (std::size_t k = 0; k < config.num_topics; ++k) {
      features(d, k) = theta[k];
    }
    labels.push_back(*corpus.docs[d].label);
  }

  const CvReport planted =
      cross_validate(features, labels, ClassifierKind::logreg, 5, 0);

  bool control_ok = true;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<std::string> shuffled = labels;
    RngStream rng(derive_seed(777, seed));
    rng.shuffle(shuffled);
    const CvReport control =
        cross_validate(features, shuffled, ClassifierKind::logreg, 5, seed);
    worst = std::max(worst, std::abs(control.mean_accuracy - 0.5));
    if (std::abs(control.mean_accuracy - 0.5) > 0.15) control_ok = false;
  }

  std::ostringstream detail;
  detail << "planted accuracy " << planted.mean_accuracy
         << ", worst control deviation " << worst;
  report(7, "5-fold LR protocol with shuffled-label control",
         planted.mean_accuracy >= 0.9 && control_ok, detail.str());
}

// --- criterion 8: determinism ----------------------------------------------

void check_determinism() {
  TempDir tmp("det");
  const fs::path corpus_path = tmp.path / "corpus.jsonl";
  {
    const auto set_a = fixtures::planted_words('a', 10);
    const auto set_b = fixtures::planted_words('b', 10);
    RngStream rng(31);
    std::ofstream out(corpus_path);
    for (std::size_t d = 0; d < 80; ++d) {
      const auto& pool = (d % 2 == 0) ? set_a : set_b;
      std::string text;
      for (int t = 0; t < 5; ++t) {
        if (t) text += " ";
        text += pool[rng.next_below(pool.size())];
      }
      out << R"({"id":"doc)" << d << R"(","text":")" << text
          << R"(","label":")" << ((d % 2 == 0) ? "la" : "lb") << R"("})"
          << "\n";
    }
  }

  PipelineConfig config = PipelineConfig::load(std::nullopt);
  config.set_user("corpus.path", corpus_path.string());
  config.set_user("output.dir", (tmp.path / "out").string());
  config.set_user("preprocess.min_df", "1");
  config.set_user("model.num_topics", "2");
  config.set_user("model.epochs", "30");
  config.set_user("model.batch_size", "16");
  config.set_user("run.seed", "7");

  const ExperimentResult first = run_experiment(config, Variant::short_text);
  const std::string metrics1 = slurp(fs::path(first.run_dir) / "metrics.json");
  const std::string ckpt1 = slurp(fs::path(first.run_dir) / "checkpoint.json");
  run_experiment(config, Variant::short_text);
  const std::string metrics2 = slurp(fs::path(first.run_dir) / "metrics.json");
  const std::string ckpt2 = slurp(fs::path(first.run_dir) / "checkpoint.json");

  report(8, "rerun produces byte-identical reports and checkpoints",
         !metrics1.empty() && metrics1 == metrics2 && !ckpt1.empty() &&
             ckpt1 == ckpt2);
}

// --- criterion 9: extension client -----------------------------------------

void check_extension_client() {
  // a small delay makes the in-flight bound meaningful
  StubGenerationServer server([](const std::string& text) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    return "continuation for " + text;
  });
  const std::string endpoint = server.start();
  TempDir tmp("client");
  ExtensionCache cache((tmp.path / "cache").string());

  GenerationServiceConfig service;
  service.endpoint = endpoint;
  service.max_concurrent = 3;
  service.timeout_seconds = 5.0;

  std::vector<RawDocument> docs;
  for (int i = 0; i < 12; ++i) {
    docs.push_back({"d" + std::to_string(i),
                    "short text " + std::to_string(i), std::nullopt});
  }

  const auto first = batch_extend(docs, ExtensionParams{}, service, cache);
  const int calls_after_first = server.total_calls();
  const int peak = server.peak_inflight();
  const auto second = batch_extend(docs, ExtensionParams{}, service, cache);
  const int calls_after_second = server.total_calls();

  bool prefix_ok = true;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (first[i].extended_text.rfind(docs[i].text, 0) != 0) prefix_ok = false;
    if (second[i].extended_text != first[i].extended_text) prefix_ok = false;
  }

  std::ostringstream detail;
  detail << "first pass " << calls_after_first << " calls, second pass "
         << (calls_after_second - calls_after_first) << ", peak in-flight "
         << peak;
  report(9, "cache idempotence, prefix invariant, bounded concurrency",
         prefix_ok && calls_after_first == static_cast<int>(docs.size()) &&
             calls_after_second == calls_after_first &&
             peak <= service.max_concurrent,
         detail.str());
}

// --- criterion 10: KL nonnegativity and simplex sweep -----------------------

void check_property_sweep() {
  RngStream rng(2026);
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t K = 2 + rng.next_below(4);
    const std::size_t V = 3 + rng.next_below(4);
    const TrainedModel model = make_random_model(
        V, 0, K, {3}, 0.0, 30000 + static_cast<std::uint64_t>(trial));

    std::vector<double> mu(K), logvar(K), eps(K);
    for (std::size_t k = 0; k < K; ++k) {
      mu[k] = rng.uniform(-3.0, 3.0);
      logvar[k] = rng.uniform(-3.0, 3.0);
      eps[k] = rng.next_normal();
    }
    const double alpha = rng.uniform(0.05, 2.0);
    const PriorParams prior = dirichlet_prior(K, alpha);
    if (kl_divergence(mu, logvar, prior) < -1e-12) ++violations;

    const LatentSample sample = reparameterize(mu, logvar, eps);
    double theta_sum = 0.0;
    for (double t : sample.theta) {
      if (t < 0.0) ++violations;
      theta_sum += t;
    }
    if (std::abs(theta_sum - 1.0) > 1e-9) ++violations;

    const std::vector<double> probs = decode(sample.theta, model);
    double prob_sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) ++violations;
      prob_sum += p;
    }
    if (std::abs(prob_sum - 1.0) > 1e-9) ++violations;
  }
  report(10, "KL nonnegativity and simplex invariants (10^4 cases)",
         violations == 0, std::to_string(violations) + " violations");
}

}  // namespace

int main() {
  criterion(1, "gradient matches finite differences", check_gradients);
  criterion(2, "neural planted-topic recovery", check_neural_recovery);
  criterion(3, "Gibbs planted-topic recovery", check_gibbs_recovery);
  criterion(4, "NPMI equals the brute-force oracle", check_npmi_oracle);
  criterion(5, "RBO/IRBO exactness", check_rbo);
  criterion(6, "directional NPMI echo", check_directional_echo);
  criterion(7, "classification protocol", check_classification);
  criterion(8, "determinism", check_determinism);
  criterion(9, "extension client", check_extension_client);
  criterion(10, "property sweep", check_property_sweep);

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
