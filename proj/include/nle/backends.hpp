#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nle::backends {

using json = nlohmann::json;

enum class Kind { Completion, MaskScore, Acceptability };

std::string_view to_string(Kind kind);
Kind kind_from_string(std::string_view s);

/// Where a capability lives. endpoint_url is either an http(s) base URL or one
/// of the in-process mocks: "mock://hash" (all kinds) or "mock://fixed/<score>"
/// (acceptability).
struct BackendDescriptor {
  std::string id;
  Kind kind = Kind::Completion;
  std::string endpoint_url;
  std::chrono::milliseconds timeout{30000};
  int max_concurrency = 4;
  /// Sent as "Authorization: Bearer <token>" when nonempty.
  std::string auth_token;
  /// Completion only: reject continuations that start with the full prompt.
  bool strict_no_echo = false;
};

// ---- wire types ----------------------------------------------------------

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 64;
  std::optional<std::int64_t> seed;
};

struct CompletionResponse {
  std::string text;
};

struct MaskScoreRequest {
  std::string text;
  std::vector<std::string> candidates;
};

struct MaskScoreResponse {
  std::map<std::string, double> logits;
};

struct AcceptabilityRequest {
  std::string problem;
  std::string explanation;
};

struct AcceptabilityResponse {
  double score = 0.0;
};

json to_json(const CompletionRequest& r);
json to_json(const MaskScoreRequest& r);
json to_json(const AcceptabilityRequest& r);
json to_json(const CompletionResponse& r);
json to_json(const MaskScoreResponse& r);
json to_json(const AcceptabilityResponse& r);

CompletionRequest completion_request_from_json(const json& j);
MaskScoreRequest mask_request_from_json(const json& j);
AcceptabilityRequest acceptability_request_from_json(const json& j);

/// Response parsers validate shape and ranges (ProtocolError / ScoreOutOfRange).
CompletionResponse completion_response_from_json(const json& j);
MaskScoreResponse mask_response_from_json(const json& j, const MaskScoreRequest& req);
AcceptabilityResponse acceptability_response_from_json(const json& j);

/// Client-side checks: exactly one mask placeholder, nonempty distinct
/// candidates (BadInput).
void validate(const MaskScoreRequest& r);
void validate(const CompletionRequest& r);
void validate(const AcceptabilityRequest& r);

// ---- capability interfaces ----------------------------------------------
// Implementations must be safe to call from many threads at once.

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResponse complete(const CompletionRequest& req) = 0;
  virtual std::string id() const = 0;
};

class MaskScoreBackend {
 public:
  virtual ~MaskScoreBackend() = default;
  virtual MaskScoreResponse mask_score(const MaskScoreRequest& req) = 0;
  virtual std::string id() const = 0;
};

class AcceptabilityBackend {
 public:
  virtual ~AcceptabilityBackend() = default;
  virtual AcceptabilityResponse score_acceptability(const AcceptabilityRequest& req) = 0;
  virtual std::string id() const = 0;
};

// ---- deterministic mocks --------------------------------------------------
//
// All mock outputs derive from FNV-1a 64 over UTF-8 bytes, with fields joined
// by the unit separator 0x1F:
//   unit(h)               = (h >> 11) * 2^-53                    in [0,1)
//   mask logit            = -5 + 10 * unit(fnv(text 0x1F candidate))
//   acceptability         = unit(fnv(problem 0x1F explanation))
//   completion word k     = kMockVocabulary[fnv(prompt 0x1F seed 0x1F k) % size]
// where seed renders as decimal or "none". See HashMockCompletion for layout.

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
double unit_interval(std::uint64_t h) noexcept;

extern const std::vector<std::string_view> kMockVocabulary;

/// Deterministic completions: a body of 3..12 words ending in '.', a blank
/// line, then a tail of 2..7 words ending in '.'. Word counts come from h0 =
/// fnv(prompt 0x1F seed 0x1F 0): body = 3 + h0 % 10, tail = 2 + (h0 >> 8) % 6.
/// The continuation starts with a space and never contains the prompt; total
/// words are capped at max_tokens.
class HashMockCompletion final : public CompletionBackend {
 public:
  explicit HashMockCompletion(std::string id = "mock-completion") : id_(std::move(id)) {}
  CompletionResponse complete(const CompletionRequest& req) override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
};

class HashMockMaskScorer final : public MaskScoreBackend {
 public:
  explicit HashMockMaskScorer(std::string id = "mock-mask") : id_(std::move(id)) {}
  MaskScoreResponse mask_score(const MaskScoreRequest& req) override;
  std::string id() const override { return id_; }

  /// The mock "vocabulary": 1-8 ASCII letters.
  static bool is_mappable(std::string_view candidate);

 private:
  std::string id_;
};

class HashMockAcceptability final : public AcceptabilityBackend {
 public:
  explicit HashMockAcceptability(std::string id = "mock-acceptability") : id_(std::move(id)) {}
  AcceptabilityResponse score_acceptability(const AcceptabilityRequest& req) override;
  std::string id() const override { return id_; }

 private:
  std::string id_;
};

class FixedAcceptability final : public AcceptabilityBackend {
 public:
  FixedAcceptability(double score, std::string id = "fixed-acceptability")
      : score_(score), id_(std::move(id)) {}
  AcceptabilityResponse score_acceptability(const AcceptabilityRequest&) override { return {score_}; }
  std::string id() const override { return id_; }

 private:
  double score_;
  std::string id_;
};

// ---- response cache -------------------------------------------------------

/// Sorts object keys (nlohmann objects are ordered maps) and rewrites
/// integral-valued floats as integers so 1 and 1.0 hash alike.
json canonicalize(const json& j);

/// Hex SHA-256 of "backend_id \n kind \n canonical request JSON".
std::string cache_key(std::string_view backend_id, Kind kind, const json& request);

/// Content-addressed files under a directory: filename = key, content =
/// response body. Writes go through a temp file and rename, so concurrent
/// writers of the same key are harmless. I/O failures downgrade the cache to
/// pass-through with a single warning.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& body);
  bool enabled() const noexcept { return enabled_.load(); }
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  void disable(const std::string& why);

  std::filesystem::path dir_;
  std::atomic<bool> enabled_{true};
  std::atomic<std::uint64_t> tmp_counter_{0};
};

std::shared_ptr<CompletionBackend> with_cache(std::shared_ptr<CompletionBackend> inner,
                                              std::shared_ptr<ResponseCache> cache);
std::shared_ptr<MaskScoreBackend> with_cache(std::shared_ptr<MaskScoreBackend> inner,
                                             std::shared_ptr<ResponseCache> cache);
std::shared_ptr<AcceptabilityBackend> with_cache(std::shared_ptr<AcceptabilityBackend> inner,
                                                 std::shared_ptr<ResponseCache> cache);

// ---- concurrency bounding -------------------------------------------------

/// Counting gate; at most `limit` holders at once.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit);
  class Hold {
   public:
    explicit Hold(ConcurrencyGate& g) : gate_(g) { gate_.sem_.acquire(); }
    ~Hold() { gate_.sem_.release(); }
    Hold(const Hold&) = delete;
    Hold& operator=(const Hold&) = delete;

   private:
    ConcurrencyGate& gate_;
  };
  int limit() const noexcept { return limit_; }

 private:
  int limit_;
  std::counting_semaphore<> sem_;
};

std::shared_ptr<CompletionBackend> with_limit(std::shared_ptr<CompletionBackend> inner, int max_concurrency);
std::shared_ptr<MaskScoreBackend> with_limit(std::shared_ptr<MaskScoreBackend> inner, int max_concurrency);
std::shared_ptr<AcceptabilityBackend> with_limit(std::shared_ptr<AcceptabilityBackend> inner,
                                                 int max_concurrency);

// ---- HTTP clients -----------------------------------------------------------

std::shared_ptr<CompletionBackend> make_http_completion(const BackendDescriptor& d);
std::shared_ptr<MaskScoreBackend> make_http_mask_scorer(const BackendDescriptor& d);
std::shared_ptr<AcceptabilityBackend> make_http_acceptability(const BackendDescriptor& d);

// ---- factories ----------------------------------------------------------------

/// Resolves the descriptor (mock or HTTP), then layers the cache (when
/// cache_dir is set) and the concurrency limit on top.
std::shared_ptr<CompletionBackend> make_completion(const BackendDescriptor& d,
                                                   const std::optional<std::filesystem::path>& cache_dir);
std::shared_ptr<MaskScoreBackend> make_mask_scorer(const BackendDescriptor& d,
                                                   const std::optional<std::filesystem::path>& cache_dir);
std::shared_ptr<AcceptabilityBackend> make_acceptability(const BackendDescriptor& d,
                                                         const std::optional<std::filesystem::path>& cache_dir);

}  // namespace nle::backends
