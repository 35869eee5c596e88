#include <chrono>
#include <thread>

#include <httplib.h>

#include "nle/backends.hpp"
#include "nle/error.hpp"

namespace nle::backends {

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint URL lacks a scheme: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw Error(ErrorCode::ConfigError, "unsupported scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.scheme_host_port = url.substr(0, path_start);
  if (path_start != std::string::npos) p.path_prefix = url.substr(path_start);
  while (!p.path_prefix.empty() && p.path_prefix.back() == '/') p.path_prefix.pop_back();
  return p;
}

/// One POST of a JSON body; maps transport failures to Timeout, non-200 to
/// HttpError (or UnmappableCandidate for the 422 contract), and bad JSON to
/// ProtocolError.
class JsonPoster {
 public:
  JsonPoster(const BackendDescriptor& d, int retries) : desc_(d), url_(parse_url(d.endpoint_url)), retries_(retries) {}

  json post(const std::string& endpoint, const json& body) const {
    for (int attempt = 0;; ++attempt) {
      try {
        return post_once(endpoint, body);
      } catch (const Error& e) {
        const bool transient = e.code() == ErrorCode::Timeout || (e.code() == ErrorCode::HttpError && e.http_status() >= 500);
        if (!transient || attempt >= retries_) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(100) * (1 << attempt));
      }
    }
  }

 private:
  json post_once(const std::string& endpoint, const json& body) const {
    httplib::Client client(url_.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(desc_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(desc_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!desc_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + desc_.auth_token);

    const std::string path = url_.path_prefix + endpoint;
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::Timeout, desc_.id + " " + path + ": " + httplib::to_string(res.error()));
    }
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::exception&) {
      if (res->status != 200) {
        throw Error(ErrorCode::HttpError,
                    desc_.id + " " + path + ": status " + std::to_string(res->status) + " body " + res->body,
                    res->status);
      }
      throw Error(ErrorCode::ProtocolError, desc_.id + " " + path + ": response is not JSON");
    }
    if (res->status == 422 && parsed.is_object() && parsed.value("error", "") == "unmappable_candidate") {
      throw Error(ErrorCode::UnmappableCandidate, parsed.value("candidate", std::string("?")));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::HttpError,
                  desc_.id + " " + path + ": status " + std::to_string(res->status) + " body " + res->body,
                  res->status);
    }
    return parsed;
  }

  BackendDescriptor desc_;
  ParsedUrl url_;
  int retries_;
};

class HttpCompletion final : public CompletionBackend {
 public:
  explicit HttpCompletion(const BackendDescriptor& d) : desc_(d), poster_(d, 0) {}

  CompletionResponse complete(const CompletionRequest& req) override {
    validate(req);
    auto resp = completion_response_from_json(poster_.post("/v1/complete", to_json(req)));
    if (desc_.strict_no_echo && !req.prompt.empty() && resp.text.rfind(req.prompt, 0) == 0) {
      throw Error(ErrorCode::ProtocolError, desc_.id + ": continuation echoes the prompt");
    }
    return resp;
  }
  std::string id() const override { return desc_.id; }

 private:
  BackendDescriptor desc_;
  JsonPoster poster_;
};

class HttpMaskScorer final : public MaskScoreBackend {
 public:
  explicit HttpMaskScorer(const BackendDescriptor& d) : desc_(d), poster_(d, 2) {}

  MaskScoreResponse mask_score(const MaskScoreRequest& req) override {
    validate(req);
    return mask_response_from_json(poster_.post("/v1/mask_score", to_json(req)), req);
  }
  std::string id() const override { return desc_.id; }

 private:
  BackendDescriptor desc_;
  JsonPoster poster_;
};

class HttpAcceptability final : public AcceptabilityBackend {
 public:
  explicit HttpAcceptability(const BackendDescriptor& d) : desc_(d), poster_(d, 2) {}

  AcceptabilityResponse score_acceptability(const AcceptabilityRequest& req) override {
    validate(req);
    return acceptability_response_from_json(poster_.post("/v1/acceptability", to_json(req)));
  }
  std::string id() const override { return desc_.id; }

 private:
  BackendDescriptor desc_;
  JsonPoster poster_;
};

}  // namespace

std::shared_ptr<CompletionBackend> make_http_completion(const BackendDescriptor& d) {
  return std::make_shared<HttpCompletion>(d);
}
std::shared_ptr<MaskScoreBackend> make_http_mask_scorer(const BackendDescriptor& d) {
  return std::make_shared<HttpMaskScorer>(d);
}
std::shared_ptr<AcceptabilityBackend> make_http_acceptability(const BackendDescriptor& d) {
  return std::make_shared<HttpAcceptability>(d);
}

}  // namespace nle::backends
