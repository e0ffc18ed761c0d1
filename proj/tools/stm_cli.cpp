// Command-line front end for the short-text topic modeling pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stm/pipeline.hpp"

namespace {

struct CommonArgs {
  std::optional<std::string> config_file;
  std::string variant = "short";
  std::string family = "neural";
  std::vector<std::string> extension_sets;  // label=path pairs for the sweep
};

// Leftover "--section.key=value" tokens become config overrides; anything
// else is a usage error.
std::vector<std::string> collect_overrides(CLI::App* sub) {
  std::vector<std::string> overrides;
  for (const auto& token : sub->remaining()) {
    if (token.rfind("--", 0) != 0 || token.find('=') == std::string::npos) {
      throw stm::ConfigError("unrecognized argument: " + token);
    }
    overrides.push_back(token);
  }
  return overrides;
}

stm::PipelineConfig make_config(const CommonArgs& args, CLI::App* sub) {
  return stm::PipelineConfig::load(args.config_file, collect_overrides(sub));
}

void add_common(CLI::App* sub, CommonArgs& args, bool with_variant) {
  sub->add_option("-c,--config", args.config_file, "Configuration file");
  if (with_variant) {
    sub->add_option("--variant", args.variant,
                    "Corpus variant: short, extended, or lcsntm");
    sub->add_option("--family", args.family, "Model family: neural or lda");
  }
  sub->allow_extras();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Short-text topic modeling pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* cmd_preprocess =
      app.add_subcommand("preprocess", "Tokenize and BOW-encode the corpus");
  add_common(cmd_preprocess, args, false);
  CLI::App* cmd_extend =
      app.add_subcommand("extend", "Extend documents via the generation service");
  add_common(cmd_extend, args, false);
  CLI::App* cmd_train = app.add_subcommand("train", "Train a topic model");
  add_common(cmd_train, args, true);
  CLI::App* cmd_topics =
      app.add_subcommand("topics", "Extract top words from a checkpoint");
  add_common(cmd_topics, args, true);
  CLI::App* cmd_score =
      app.add_subcommand("score", "Score topic coherence and diversity");
  add_common(cmd_score, args, true);
  CLI::App* cmd_classify =
      app.add_subcommand("classify", "Cross-validate theta-feature classifiers");
  add_common(cmd_classify, args, true);
  CLI::App* cmd_sweep = app.add_subcommand(
      "sweep-length", "Compare extension corpora of different lengths");
  add_common(cmd_sweep, args, false);
  cmd_sweep->add_option("--extensions", args.extension_sets,
                        "label=path extension corpus (repeatable, >= 2)");
  CLI::App* cmd_report =
      app.add_subcommand("report", "Summarize the artifacts of previous runs");
  add_common(cmd_report, args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_preprocess->parsed()) {
      const auto result = stm::run_preprocess(make_config(args, cmd_preprocess));
      std::cout << "kept " << result.stats.kept_docs << " of "
                << result.stats.input_docs << " documents ("
                << result.stats.dropped_empty << " dropped), vocabulary "
                << result.stats.vocab_size << ", artifacts in "
                << result.artifact_dir << "\n";
    } else if (cmd_extend->parsed()) {
      const std::string path = stm::run_extend(make_config(args, cmd_extend));
      std::cout << "extended corpus written to " << path << "\n";
    } else if (cmd_train->parsed()) {
      const auto config = make_config(args, cmd_train);
      const std::string path = stm::run_train(
          config, stm::parse_variant(args.variant), stm::parse_family(args.family));
      std::cout << "checkpoint written to " << path << "\n";
    } else if (cmd_topics->parsed()) {
      const auto config = make_config(args, cmd_topics);
      const auto topics = stm::run_topics(
          config, stm::parse_variant(args.variant), stm::parse_family(args.family));
      for (const auto& words : topics.topics) {
        for (std::size_t i = 0; i < words.size(); ++i) {
          std::cout << (i ? " " : "") << words[i];
        }
        std::cout << "\n";
      }
    } else if (cmd_score->parsed()) {
      const auto config = make_config(args, cmd_score);
      const auto report = stm::run_score(
          config, stm::parse_variant(args.variant), stm::parse_family(args.family));
      std::cout << stm::metric_report_to_table(report);
    } else if (cmd_classify->parsed()) {
      const auto config = make_config(args, cmd_classify);
      const auto reports = stm::run_classify(
          config, stm::parse_variant(args.variant), stm::parse_family(args.family));
      std::cout << stm::cv_report_to_table(reports);
    } else if (cmd_sweep->parsed()) {
      std::vector<std::pair<std::string, std::string>> labelled;
      for (const auto& item : args.extension_sets) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
          std::cerr << "error: --extensions expects label=path: " << item
                    << "\n";
          return 1;
        }
        labelled.emplace_back(item.substr(0, eq), item.substr(eq + 1));
      }
      const auto result =
          stm::run_length_sweep(make_config(args, cmd_sweep), labelled);
      std::cout << result.table;
    } else if (cmd_report->parsed()) {
      std::cout << stm::run_report(make_config(args, cmd_report));
    }
  } catch (const stm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const stm::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
