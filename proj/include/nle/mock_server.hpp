#pragma once

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace nle {

/// The wire protocol served by the deterministic hash mocks:
///   POST /v1/complete, /v1/mask_score, /v1/acceptability; GET /health.
/// Malformed requests get 400 {"error": "bad_request", "message": ...};
/// unmappable mask candidates get 422 {"error": "unmappable_candidate", ...}.
class MockServer {
 public:
  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const noexcept { return port_; }
  std::string base_url() const;

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace nle
