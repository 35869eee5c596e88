#include "nle/mock_server.hpp"

#include <httplib.h>

#include "nle/backends.hpp"
#include "nle/error.hpp"

namespace nle {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
httplib::Server::Handler json_endpoint(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      reply(res, 400, {{"error", "bad_request"}, {"message", "body is not JSON"}});
      return;
    }
    try {
      reply(res, 200, handler(body));
    } catch (const Error& e) {
      reply(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    }
  };
}

}  // namespace

MockServer::MockServer() : server_(std::make_unique<httplib::Server>()) {
  auto completion = std::make_shared<backends::HashMockCompletion>();
  auto scorer = std::make_shared<backends::HashMockMaskScorer>();
  auto acceptability = std::make_shared<backends::HashMockAcceptability>();

  server_->Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"status", "ok"}}); });

  server_->Post("/v1/complete", json_endpoint([completion](const json& body) {
    const auto req = backends::completion_request_from_json(body);
    backends::validate(req);
    return backends::to_json(completion->complete(req));
  }));

  server_->Post("/v1/mask_score", [scorer](const httplib::Request& req, httplib::Response& res) {
    backends::MaskScoreRequest parsed;
    try {
      parsed = backends::mask_request_from_json(json::parse(req.body));
      backends::validate(parsed);
    } catch (const std::exception& e) {
      reply(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
      return;
    }
    for (const auto& c : parsed.candidates) {
      if (!backends::HashMockMaskScorer::is_mappable(c)) {
        reply(res, 422, {{"error", "unmappable_candidate"}, {"candidate", c}});
        return;
      }
    }
    reply(res, 200, backends::to_json(scorer->mask_score(parsed)));
  });

  server_->Post("/v1/acceptability", json_endpoint([acceptability](const json& body) {
    const auto req = backends::acceptability_request_from_json(body);
    backends::validate(req);
    return backends::to_json(acceptability->score_acceptability(req));
  }));
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error(ErrorCode::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockServer::run(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) throw Error(ErrorCode::ConfigError, "cannot listen on " + host + ":" + std::to_string(port));
}

void MockServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace nle
