#pragma once

// HTTP client for a remote backend service, and an HTTP server that exposes
// in-process backends over the same protocol.

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>

#include "httplib.h"

#include "wcgen/backend.hpp"
#include "wcgen/protocol.hpp"

namespace wcgen {

struct RemoteConfig {
  /// scheme://host:port
  std::string url;
  /// Retries after the first attempt, for connection failures and 429/502/503/504.
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  double backoff_factor = 2.0;
  std::chrono::milliseconds connect_timeout{2000};
  std::chrono::milliseconds read_timeout{120000};
  int max_in_flight = 4;
};

inline bool is_retryable_status(int status) {
  return status == 429 || status == 502 || status == 503 || status == 504;
}

class RemoteBackend final : public GenerationBackend, public DepthEstimator, public Captioner {
 public:
  explicit RemoteBackend(RemoteConfig config)
      : config_(std::move(config)), slots_(std::make_unique<std::counting_semaphore<1024>>(
                                        std::clamp(config_.max_in_flight, 1, 1024))) {
    require(!config_.url.empty(), ErrorCode::invalid_argument, "remote backend needs a URL");
    require(config_.max_retries >= 0, ErrorCode::invalid_argument, "max_retries must be >= 0");
  }

  const RemoteConfig& config() const { return config_; }

  BackendDescriptor descriptor() const override {
    std::lock_guard lock(info_mutex_);
    if (!info_) {
      const auto body = call("GET", "/info", nullptr);
      info_ = wire::descriptor_from_json(body);
    }
    return *info_;
  }

  GenerationResponse generate(const GenerationRequest& req) const override {
    req.validate();
    const auto desc = descriptor();
    require(desc.capabilities.count(req.mode) > 0, ErrorCode::capability,
            "remote backend " + desc.name + " does not support " + std::string(to_string(req.mode)));
    const auto body = wire::to_json(req);
    auto resp = wire::response_from_json(call("POST", "/generate", &body));
    check_generation_response(req.quantized_copy(), resp);
    return resp;
  }

  std::string name() const override { return "remote:" + config_.url; }

  DepthMap estimate_depth(const ImageBuffer& img) const override {
    const wire::json body{{"image", wire::encode_image(img)}};
    const auto out = call("POST", "/depth", &body);
    double scale = kDefaultDepthScale;
    try {
      scale = out.value("depth_scale", kDefaultDepthScale);
    } catch (const wire::json::exception&) {
      fail(ErrorCode::malformed_response, "depth_scale is not a number");
    }
    require(scale > 0.0, ErrorCode::malformed_response, "depth_scale must be positive");
    DepthMap depth;
    try {
      depth = wire::decode_depth_field(out, "depth", scale);
    } catch (const Error& e) {
      fail(ErrorCode::malformed_response, e.what());
    }
    check_depth_response(img, depth);
    return depth;
  }

  std::string caption(const ImageBuffer& img) const override {
    const wire::json body{{"image", wire::encode_image(img)}};
    const auto out = call("POST", "/caption", &body);
    const auto it = out.find("caption");
    require(it != out.end() && it->is_string(), ErrorCode::malformed_response,
            "caption response lacks a string 'caption'");
    auto text = it->get<std::string>();
    check_caption_response(text);
    return text;
  }

  /// GET /health; false instead of throwing.
  bool healthy() const {
    try {
      httplib::Client cli(config_.url);
      set_timeouts(cli);
      auto res = cli.Get("/health");
      return res && res->status == 200;
    } catch (...) {
      return false;
    }
  }

 private:
  void set_timeouts(httplib::Client& cli) const {
    cli.set_connection_timeout(config_.connect_timeout);
    cli.set_read_timeout(config_.read_timeout);
    cli.set_write_timeout(config_.read_timeout);
  }

  wire::json call(const char* method, const char* path, const wire::json* body) const {
    struct Slot {
      std::counting_semaphore<1024>& s;
      explicit Slot(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
      ~Slot() { s.release(); }
    } slot(*slots_);

    const std::string payload = body ? body->dump() : std::string();
    auto backoff = config_.initial_backoff;
    int last_status = 0;
    std::string last_error;
    const int attempts = config_.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client cli(config_.url);
      set_timeouts(cli);
      auto res = std::string_view(method) == "GET" ? cli.Get(path)
                                                   : cli.Post(path, payload, "application/json");
      if (!res) {
        last_status = 0;
        last_error = httplib::to_string(res.error());
      } else if (res->status == 200) {
        try {
          return wire::json::parse(res->body);
        } catch (const wire::json::exception& e) {
          fail(ErrorCode::malformed_response, std::string(path) + ": " + e.what());
        }
      } else if (!is_retryable_status(res->status)) {
        throw_remote_error(path, res->status, res->body);
      } else {
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status);
      }
      if (attempt < attempts) {
        std::this_thread::sleep_for(backoff);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(backoff.count()) * config_.backoff_factor));
      }
    }
    throw TransportError(config_.url + path + " failed after " + std::to_string(attempts) +
                             " attempts: " + last_error,
                         attempts, last_status);
  }

  [[noreturn]] static void throw_remote_error(const char* path, int status, const std::string& body) {
    ErrorCode code = ErrorCode::transport;
    std::string message = "HTTP " + std::to_string(status);
    try {
      const auto j = wire::json::parse(body);
      const auto& err = j.at("error");
      code = wire::code_from_string(err.at("code").get<std::string>());
      message = err.value("message", message);
    } catch (const wire::json::exception&) {
      fail(ErrorCode::malformed_response,
           std::string(path) + ": HTTP " + std::to_string(status) + " without an error body");
    }
    if (code == ErrorCode::transport) throw TransportError(std::string(path) + ": " + message, 1, status);
    fail(code, std::string(path) + ": " + message);
  }

  RemoteConfig config_;
  std::unique_ptr<std::counting_semaphore<1024>> slots_;
  mutable std::mutex info_mutex_;
  mutable std::optional<BackendDescriptor> info_;
};

/// Serves a BackendSet over the wire protocol.
class BackendServer {
 public:
  explicit BackendServer(BackendSet backends) : backends_(std::move(backends)) {
    require(backends_.generator && backends_.depth && backends_.captioner,
            ErrorCode::invalid_argument, "backend server needs all three backends");
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    server_.Get("/info", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(wire::to_json(backends_.generator->descriptor()).dump(), "application/json");
    });
    route("/generate", [this](const wire::json& body) {
      return wire::to_json(backends_.generator->generate(wire::request_from_json(body)));
    });
    route("/depth", [this](const wire::json& body) {
      return wire::depth_response(backends_.depth->estimate_depth(wire::decode_image_field(body, "image")));
    });
    route("/caption", [this](const wire::json& body) {
      return wire::json{{"caption", backends_.captioner->caption(wire::decode_image_field(body, "image"))}};
    });
  }

  ~BackendServer() { stop(); }
  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  /// Bind to `port`, or to a free port when port is 0. Returns the port.
  int bind(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    require(port_ > 0, ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    return port_;
  }

  void start() {
    require(port_ > 0, ErrorCode::invalid_state, "bind before start");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  /// Serve on the calling thread until stop().
  void run() {
    require(port_ > 0, ErrorCode::invalid_state, "bind before run");
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

 private:
  template <class F>
  void route(const char* path, F handler) {
    server_.Post(path, [handler](const httplib::Request& req, httplib::Response& res) {
      try {
        wire::json body;
        try {
          body = wire::json::parse(req.body);
        } catch (const wire::json::exception& e) {
          fail(ErrorCode::protocol_violation, std::string("invalid JSON: ") + e.what());
        }
        res.set_content(handler(body).dump(), "application/json");
      } catch (const Error& e) {
        res.status = wire::http_status(e.code());
        res.set_content(wire::error_body(e.code(), e.what()).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(wire::error_body(ErrorCode::invalid_state, e.what()).dump(), "application/json");
      }
    });
  }

  BackendSet backends_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

}  // namespace wcgen
