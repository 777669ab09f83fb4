#pragma once

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sasr/common.hpp"
#include "sasr/protocol.hpp"

namespace sasr {

/// Remote inference over the wire protocol: POST /generate with the JSON
/// prompt payload, response {"text": "..."}. One synchronous request per
/// turn. A fresh connection per call keeps this safe under concurrency.
class HttpBackend : public ModelBackend {
 public:
  explicit HttpBackend(std::string base_url, bool send_audio_bytes = false,
                       int timeout_seconds = 120)
      : base_url_(std::move(base_url)),
        send_audio_bytes_(send_audio_bytes),
        timeout_seconds_(timeout_seconds) {}

  std::string generate(const PromptPayload& prompt) override {
    httplib::Client client(base_url_);
    client.set_read_timeout(timeout_seconds_, 0);
    client.set_connection_timeout(timeout_seconds_, 0);
    auto res = client.Post("/generate", payload_bytes(prompt), "application/json");
    if (!res)
      throw Error(ErrorCode::backend_error,
                  base_url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw Error(ErrorCode::backend_error,
                  base_url_ + ": HTTP " + std::to_string(res->status) + " " + res->body);
    try {
      return nlohmann::json::parse(res->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::backend_error, base_url_ + ": bad response body: " + e.what());
    }
  }

  bool concurrent_safe() const override { return true; }
  bool wants_audio_bytes() const override { return send_audio_bytes_; }

 private:
  std::string base_url_;
  bool send_audio_bytes_;
  int timeout_seconds_;
};

/// Exposes any local backend over the wire protocol; used by the test suite
/// to exercise the HTTP path end to end.
class BackendServer {
 public:
  explicit BackendServer(ModelBackend& backend) {
    server_.Post("/generate", [&backend](const httplib::Request& req, httplib::Response& res) {
      try {
        PromptPayload prompt = payload_from_json(nlohmann::json::parse(req.body));
        nlohmann::json reply{{"text", backend.generate(prompt)}};
        res.set_content(reply.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(e.what(), "text/plain");
      }
    });
  }

  ~BackendServer() { stop(); }

  /// Binds an ephemeral localhost port and serves until stop(). Returns the
  /// port.
  int start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(ErrorCode::backend_error, "cannot bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sasr
