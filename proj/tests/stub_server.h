#pragma once

#include <atomic>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace rpo::testing {

// Local OpenAI-shaped endpoint. Every handler call is counted, and the peak
// number of simultaneously active handlers is recorded.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  StubServer(Handler chat, Handler completions = {}, Handler embed = {}) {
    route("/v1/chat/completions", std::move(chat));
    if (completions) route("/v1/completions", std::move(completions));
    if (embed) route("/embed", std::move(embed));
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("stub server could not bind");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_.load(); }
  int peak() const { return peak_.load(); }

  static nlohmann::json chat_reply(const std::vector<std::string>& texts,
                                   bool with_logprobs = false) {
    nlohmann::json choices = nlohmann::json::array();
    for (std::size_t i = 0; i < texts.size(); ++i) {
      nlohmann::json c = {{"index", i},
                          {"message", {{"role", "assistant"}, {"content", texts[i]}}}};
      if (with_logprobs) {
        c["logprobs"] = {{"content", {{{"token", texts[i]}, {"logprob", -0.5}}}}};
      }
      choices.push_back(std::move(c));
    }
    return {{"choices", choices},
            {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 1}}}};
  }

 private:
  void route(const std::string& path, Handler handler) {
    server_.Post(path, [this, handler = std::move(handler)](
                           const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      const int now = ++active_;
      int prev = peak_.load();
      while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
      }
      handler(req, res);
      --active_;
    });
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> active_{0};
  std::atomic<int> peak_{0};
};

}  // namespace rpo::testing
