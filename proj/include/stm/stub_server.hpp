#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace stm {

// In-process generation service for tests and local experiments.
// Serves POST /generate with a configurable continuation function,
// optional failure injection, and call/concurrency counters.
class StubGenerationServer {
 public:
  // continuation(text) -> generated continuation for that input
  using ContinuationFn = std::function<std::string(const std::string&)>;

  explicit StubGenerationServer(
      ContinuationFn continuation = [](const std::string&) {
        return std::string("stub continuation text");
      })
      : continuation_(std::move(continuation)) {
    server_.Post("/generate", [this](const httplib::Request& req,
                                     httplib::Response& res) {
      const int inflight = ++inflight_;
      int expected = peak_inflight_.load();
      while (inflight > expected &&
             !peak_inflight_.compare_exchange_weak(expected, inflight)) {
      }
      ++total_calls_;

      if (fail_next_.load() > 0) {
        --fail_next_;
        res.status = 503;
        --inflight_;
        return;
      }
      try {
        const auto body = nlohmann::json::parse(req.body);
        const auto text = body.at("text").get<std::string>();
        if (fail_predicate_ && fail_predicate_(text)) {
          res.status = 500;
        } else {
          const nlohmann::json reply = {{"continuation", continuation_(text)}};
          res.set_content(reply.dump(), "application/json");
        }
      } catch (const std::exception&) {
        res.status = 400;
      }
      --inflight_;
    });
  }

  ~StubGenerationServer() { stop(); }

  // Binds to an ephemeral localhost port and returns the endpoint URL.
  std::string start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return "http://127.0.0.1:" + std::to_string(port_);
  }

  // Blocks until the server is stopped (for stand-alone use).
  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  // Fail the next n requests with HTTP 503.
  void fail_next(int n) { fail_next_ = n; }

  // Fail any request whose input text matches the predicate.
  void set_fail_predicate(std::function<bool(const std::string&)> pred) {
    fail_predicate_ = std::move(pred);
  }

  int total_calls() const { return total_calls_.load(); }
  int peak_inflight() const { return peak_inflight_.load(); }
  void reset_counters() {
    total_calls_ = 0;
    peak_inflight_ = 0;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  ContinuationFn continuation_;
  std::function<bool(const std::string&)> fail_predicate_;
  std::atomic<int> fail_next_{0};
  std::atomic<int> total_calls_{0};
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_inflight_{0};
};

}  // namespace stm
