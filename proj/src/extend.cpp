#include "stm/extend.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "stm/encoding.hpp"

namespace fs = std::filesystem;

namespace stm {

BatchExtendError::BatchExtendError(std::vector<std::string> failed_ids,
                                   const std::string& detail)
    : ExtendError(detail), failed_ids_(std::move(failed_ids)) {}

ExtensionCache::ExtensionCache(std::string root_dir) : root_(std::move(root_dir)) {
  fs::create_directories(root_);
}

std::string ExtensionCache::key(const std::string& short_text,
                                const ExtensionParams& params,
                                const std::string& generator) {
  nlohmann::json strat;
  if (const auto* beam = std::get_if<BeamStrategy>(&params.strategy)) {
    strat = {{"kind", "beam"}, {"width", beam->width}};
  } else {
    const auto& s = std::get<SamplingStrategy>(params.strategy);
    strat = {{"kind", "sampling"}, {"seed", s.seed}};
  }
  const nlohmann::json canonical = {{"text", short_text},
                                    {"min_new_tokens", params.min_new_tokens},
                                    {"max_new_tokens", params.max_new_tokens},
                                    {"strategy", strat},
                                    {"generator", generator}};
  return sha256_hex(canonical.dump());
}

std::optional<std::string> ExtensionCache::lookup(const std::string& key) const {
  std::ifstream in(fs::path(root_) / key, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ExtensionCache::store(const std::string& key,
                           const std::string& extended_text) {
  const fs::path target = fs::path(root_) / key;
  if (fs::exists(target)) return;  // write-once
  const fs::path tmp = target.string() + ".tmp." +
                       std::to_string(std::hash<std::thread::id>{}(
                           std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    out << extended_text;
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fs::remove(tmp, ec);
}

namespace {

nlohmann::json request_body(const std::string& text,
                            const ExtensionParams& params) {
  nlohmann::json strat;
  if (const auto* beam = std::get_if<BeamStrategy>(&params.strategy)) {
    strat = {{"kind", "beam"}, {"width", beam->width}};
  } else {
    const auto& s = std::get<SamplingStrategy>(params.strategy);
    strat = {{"kind", "sampling"}, {"seed", s.seed}};
  }
  return {{"text", text},
          {"min_new_tokens", params.min_new_tokens},
          {"max_new_tokens", params.max_new_tokens},
          {"strategy", strat}};
}

std::string call_service(const std::string& text, const ExtensionParams& params,
                         const GenerationServiceConfig& config) {
  httplib::Client client(config.endpoint);
  const auto secs = static_cast<time_t>(config.timeout_seconds);
  const auto usecs = static_cast<time_t>(
      (config.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);

  const std::string body = request_body(text, params).dump();
  std::string last_error = "service unreachable";
  for (int attempt = 0; attempt <= config.retry_count; ++attempt) {
    auto res = client.Post("/generate", body, "application/json");
    if (!res) {
      last_error = "connection failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "service returned status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto json = nlohmann::json::parse(res->body);
      const auto continuation = json.at("continuation").get<std::string>();
      if (continuation.empty()) {
        throw ExtendError("service returned an empty continuation");
      }
      return continuation;
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed service response: ") + e.what();
    }
  }
  throw ExtendError("generation service unavailable after " +
                    std::to_string(config.retry_count + 1) + " attempts (" +
                    last_error + ")");
}

}  // namespace

ExtendedDocument extend_document(const RawDocument& doc,
                                 const ExtensionParams& params,
                                 const GenerationServiceConfig& config,
                                 ExtensionCache& cache) {
  if (doc.text.empty()) throw ExtendError("cannot extend empty document " + doc.id);
  const std::string key = ExtensionCache::key(doc.text, params, config.generator);
  if (auto hit = cache.lookup(key)) {
    return {doc.id, doc.text, *hit};
  }
  const std::string continuation = call_service(doc.text, params, config);
  const std::string extended = doc.text + " " + continuation;
  cache.store(key, extended);
  return {doc.id, doc.text, extended};
}

std::vector<ExtendedDocument> batch_extend(const std::vector<RawDocument>& docs,
                                           const ExtensionParams& params,
                                           const GenerationServiceConfig& config,
                                           ExtensionCache& cache) {
  std::vector<ExtendedDocument> results(docs.size());
  std::vector<std::pair<std::string, std::string>> failures;  // (id, reason)
  std::mutex failures_mutex;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= docs.size()) return;
      try {
        results[i] = extend_document(docs[i], params, config, cache);
      } catch (const std::exception& e) {
        std::lock_guard lock(failures_mutex);
        failures.emplace_back(docs[i].id, e.what());
      }
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(
      docs.size(), static_cast<std::size_t>(std::max(1, config.max_concurrent)));
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end());
    std::vector<std::string> ids;
    std::string detail = "extension failed for " +
                         std::to_string(failures.size()) + " document(s):";
    for (const auto& [id, reason] : failures) {
      ids.push_back(id);
      detail += "\n  " + id + ": " + reason;
    }
    throw BatchExtendError(std::move(ids), detail);
  }
  return results;
}

std::vector<ExtendedDocument> load_extensions(
    const std::string& path, const std::vector<std::string>& corpus_ids,
    std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw ExtendError("cannot open extension file: " + path);

  std::map<std::string, ExtendedDocument> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto obj = nlohmann::json::parse(line);
      ExtendedDocument doc;
      doc.id = obj.at("id").get<std::string>();
      doc.short_text = obj.at("text").get<std::string>();
      doc.extended_text = obj.at("extended_text").get<std::string>();
      by_id[doc.id] = std::move(doc);
    } catch (const nlohmann::json::exception& e) {
      throw ExtendError("parse error at line " + std::to_string(line_no) +
                        " of " + path + ": " + e.what());
    }
  }

  const std::set<std::string> wanted(corpus_ids.begin(), corpus_ids.end());
  std::vector<std::string> missing;
  std::vector<ExtendedDocument> out;
  out.reserve(corpus_ids.size());
  for (const auto& id : corpus_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      missing.push_back(id);
    } else {
      out.push_back(it->second);
    }
  }
  if (!missing.empty()) {
    std::string msg = "extension file " + path + " is missing ids:";
    for (const auto& id : missing) msg += " " + id;
    throw ExtendError(msg);
  }
  if (warnings) {
    for (const auto& [id, doc] : by_id) {
      if (!wanted.count(id)) {
        warnings->push_back("extension file contains unknown id \"" + id + "\"");
      }
    }
  }
  return out;
}

}  // namespace stm
