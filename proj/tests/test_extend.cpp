#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <doctest.h>

#include "stm/extend.hpp"
#include "stm/stub_server.hpp"

using namespace stm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("stm_extend_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

GenerationServiceConfig config_for(const std::string& endpoint) {
  GenerationServiceConfig config;
  config.endpoint = endpoint;
  config.timeout_seconds = 5.0;
  config.max_concurrent = 3;
  config.retry_count = 2;
  return config;
}

}  // namespace

TEST_CASE("extend_document composes short text and continuation") {
  StubGenerationServer server([](const std::string&) {
    return std::string("alpha beta");
  });
  const std::string endpoint = server.start();
  TempDir tmp("compose");
  ExtensionCache cache((tmp.path / "cache").string());

  const RawDocument doc{"d1", "hello", std::nullopt};
  const ExtendedDocument ext =
      extend_document(doc, ExtensionParams{}, config_for(endpoint), cache);
  CHECK(ext.extended_text == "hello alpha beta");
  CHECK(ext.extended_text.rfind(ext.short_text, 0) == 0);
}

TEST_CASE("cache idempotence: second call issues no request") {
  StubGenerationServer server;
  const std::string endpoint = server.start();
  TempDir tmp("idem");
  ExtensionCache cache((tmp.path / "cache").string());
  const RawDocument doc{"d1", "some short text", std::nullopt};
  const ExtensionParams params;
  const auto config = config_for(endpoint);

  const ExtendedDocument first = extend_document(doc, params, config, cache);
  const int calls_after_first = server.total_calls();
  CHECK(calls_after_first == 1);
  const ExtendedDocument second = extend_document(doc, params, config, cache);
  CHECK(server.total_calls() == calls_after_first);
  CHECK(first.extended_text == second.extended_text);
}

TEST_CASE("cache key is sensitive to every parameter field") {
  const std::string text = "short";
  ExtensionParams base;
  const std::string k0 = ExtensionCache::key(text, base, "gen");

  ExtensionParams p1 = base;
  p1.min_new_tokens += 1;
  ExtensionParams p2 = base;
  p2.max_new_tokens += 1;
  ExtensionParams p3 = base;
  p3.strategy = BeamStrategy{3};
  ExtensionParams p4 = base;
  p4.strategy = SamplingStrategy{7};

  CHECK(ExtensionCache::key(text, p1, "gen") != k0);
  CHECK(ExtensionCache::key(text, p2, "gen") != k0);
  CHECK(ExtensionCache::key(text, p3, "gen") != k0);
  CHECK(ExtensionCache::key(text, p4, "gen") != k0);
  CHECK(ExtensionCache::key(text, base, "other") != k0);
  CHECK(ExtensionCache::key("different", base, "gen") != k0);
  CHECK(ExtensionCache::key(text, base, "gen") == k0);
}

TEST_CASE("retries exhausted raises service-unavailable") {
  StubGenerationServer server;
  const std::string endpoint = server.start();
  server.fail_next(5);
  TempDir tmp("fail");
  ExtensionCache cache((tmp.path / "cache").string());
  const RawDocument doc{"d1", "text", std::nullopt};
  CHECK_THROWS_WITH_AS(
      extend_document(doc, ExtensionParams{}, config_for(endpoint), cache),
      doctest::Contains("unavailable"), ExtendError);
}

TEST_CASE("batch_extend preserves order and bounds concurrency") {
  StubGenerationServer server([](const std::string& text) {
    return "continuation of " + text;
  });
  const std::string endpoint = server.start();
  TempDir tmp("batch");
  ExtensionCache cache((tmp.path / "cache").string());

  std::vector<RawDocument> docs;
  for (int i = 0; i < 10; ++i) {
    docs.push_back({"d" + std::to_string(i), "text " + std::to_string(i),
                    std::nullopt});
  }
  const auto config = config_for(endpoint);
  const auto results =
      batch_extend(docs, ExtensionParams{}, config, cache);
  REQUIRE(results.size() == docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    CHECK(results[i].id == docs[i].id);
    CHECK(results[i].extended_text.rfind(docs[i].text, 0) == 0);
  }
  CHECK(server.peak_inflight() <= config.max_concurrent);
}

TEST_CASE("batch_extend with no documents") {
  StubGenerationServer server;
  const std::string endpoint = server.start();
  TempDir tmp("empty");
  ExtensionCache cache((tmp.path / "cache").string());
  CHECK(batch_extend({}, ExtensionParams{}, config_for(endpoint), cache)
            .empty());
}

TEST_CASE("batch_extend aggregates failures, successes still cached") {
  StubGenerationServer server([](const std::string& text) {
    return "more " + text;
  });
  server.set_fail_predicate(
      [](const std::string& text) { return text == "bad"; });
  const std::string endpoint = server.start();
  TempDir tmp("agg");
  ExtensionCache cache((tmp.path / "cache").string());

  const std::vector<RawDocument> docs = {{"d1", "fine one", std::nullopt},
                                         {"d2", "bad", std::nullopt},
                                         {"d3", "fine two", std::nullopt}};
  const ExtensionParams params;
  const auto config = config_for(endpoint);
  try {
    batch_extend(docs, params, config, cache);
    FAIL("expected BatchExtendError");
  } catch (const BatchExtendError& e) {
    CHECK(e.failed_ids() == std::vector<std::string>{"d2"});
  }
  CHECK(cache.lookup(ExtensionCache::key("fine one", params, config.generator))
            .has_value());
  CHECK(cache.lookup(ExtensionCache::key("fine two", params, config.generator))
            .has_value());
  CHECK_FALSE(
      cache.lookup(ExtensionCache::key("bad", params, config.generator))
          .has_value());
}

TEST_CASE("batch_extend with a fixed cache is deterministic") {
  StubGenerationServer server;
  const std::string endpoint = server.start();
  TempDir tmp("det");
  ExtensionCache cache((tmp.path / "cache").string());
  const std::vector<RawDocument> docs = {{"d1", "one", std::nullopt},
                                         {"d2", "two", std::nullopt}};
  const auto config = config_for(endpoint);
  const auto first = batch_extend(docs, ExtensionParams{}, config, cache);
  server.stop();  // second pass must be served purely from the cache
  const auto second = batch_extend(docs, ExtensionParams{}, config, cache);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].extended_text == second[i].extended_text);
  }
}

TEST_CASE("load_extensions") {
  TempDir tmp("load");
  const fs::path path = tmp.path / "ext.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"d1","text":"a","extended_text":"a more"})" << "\n"
        << R"({"id":"d2","text":"b","extended_text":"b more"})" << "\n"
        << R"({"id":"d9","text":"x","extended_text":"x more"})" << "\n";
  }

  SUBCASE("expected ids load in corpus order with warnings for extras") {
    std::vector<std::string> warnings;
    const auto docs = load_extensions(path.string(), {"d2", "d1"}, &warnings);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].id == "d2");
    CHECK(docs[1].id == "d1");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("d9") != std::string::npos);
  }

  SUBCASE("missing id is an error") {
    CHECK_THROWS_WITH_AS(load_extensions(path.string(), {"d1", "d7"}),
                         doctest::Contains("d7"), ExtendError);
  }

  SUBCASE("parse error cites the line") {
    const fs::path bad = tmp.path / "bad.jsonl";
    {
      std::ofstream out(bad);
      out << R"({"id":"d1","text":"a","extended_text":"a b"})" << "\n"
          << "oops\n";
    }
    CHECK_THROWS_WITH_AS(load_extensions(bad.string(), {"d1"}),
                         doctest::Contains("line 2"), ExtendError);
  }
}
