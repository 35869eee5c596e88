#include "nle/backends.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "nle/error.hpp"
#include "nle/hashing.hpp"

namespace nle::backends {

namespace {

constexpr char kSep = '\x1f';

std::string join_fields(std::initializer_list<std::string_view> fields) {
  std::string out;
  bool first = true;
  for (auto f : fields) {
    if (!first) out.push_back(kSep);
    out.append(f);
    first = false;
  }
  return out;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

[[noreturn]] void protocol_error(const std::string& what) { throw Error(ErrorCode::ProtocolError, what); }

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) protocol_error(std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::Completion: return "completion";
    case Kind::MaskScore: return "mask_score";
    case Kind::Acceptability: return "acceptability";
  }
  return "completion";
}

Kind kind_from_string(std::string_view s) {
  if (s == "completion") return Kind::Completion;
  if (s == "mask_score") return Kind::MaskScore;
  if (s == "acceptability") return Kind::Acceptability;
  throw Error(ErrorCode::ConfigError, "unknown backend kind '" + std::string(s) + "'");
}

// ---- JSON ------------------------------------------------------------------

json to_json(const CompletionRequest& r) {
  json j = {{"prompt", r.prompt}, {"temperature", r.temperature}, {"top_p", r.top_p}, {"max_tokens", r.max_tokens}};
  if (r.seed) j["seed"] = *r.seed;
  return j;
}
json to_json(const MaskScoreRequest& r) { return {{"text", r.text}, {"candidates", r.candidates}}; }
json to_json(const AcceptabilityRequest& r) { return {{"problem", r.problem}, {"explanation", r.explanation}}; }
json to_json(const CompletionResponse& r) { return {{"text", r.text}}; }
json to_json(const MaskScoreResponse& r) { return {{"logits", r.logits}}; }
json to_json(const AcceptabilityResponse& r) { return {{"score", r.score}}; }

CompletionRequest completion_request_from_json(const json& j) {
  try {
    CompletionRequest r;
    r.prompt = j.at("prompt").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    r.top_p = j.at("top_p").get<double>();
    r.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::int64_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadInput, std::string("completion request: ") + e.what());
  }
}

MaskScoreRequest mask_request_from_json(const json& j) {
  try {
    return {j.at("text").get<std::string>(), j.at("candidates").get<std::vector<std::string>>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadInput, std::string("mask_score request: ") + e.what());
  }
}

AcceptabilityRequest acceptability_request_from_json(const json& j) {
  try {
    return {j.at("problem").get<std::string>(), j.at("explanation").get<std::string>()};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadInput, std::string("acceptability request: ") + e.what());
  }
}

CompletionResponse completion_response_from_json(const json& j) {
  const json& text = require(j, "text");
  if (!text.is_string()) protocol_error("'text' is not a string");
  return {text.get<std::string>()};
}

MaskScoreResponse mask_response_from_json(const json& j, const MaskScoreRequest& req) {
  const json& logits = require(j, "logits");
  if (!logits.is_object()) protocol_error("'logits' is not an object");
  MaskScoreResponse out;
  for (const auto& cand : req.candidates) {
    if (!logits.contains(cand)) protocol_error("no logit for candidate '" + cand + "'");
    const json& v = logits.at(cand);
    if (!v.is_number()) protocol_error("logit for '" + cand + "' is not a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) protocol_error("non-finite logit for '" + cand + "'");
    out.logits[cand] = x;
  }
  return out;
}

AcceptabilityResponse acceptability_response_from_json(const json& j) {
  const json& s = require(j, "score");
  if (!s.is_number()) protocol_error("'score' is not a number");
  double x = s.get<double>();
  if (!(x >= 0.0 && x <= 1.0)) {
    throw Error(ErrorCode::ScoreOutOfRange, "acceptability score " + s.dump() + " outside [0,1]");
  }
  return {x};
}

void validate(const MaskScoreRequest& r) {
  if (count_occurrences(r.text, "{MASK}") != 1) {
    throw Error(ErrorCode::BadInput, "mask_score text must contain exactly one {MASK}");
  }
  if (r.candidates.empty()) throw Error(ErrorCode::BadInput, "mask_score needs candidates");
  std::set<std::string> seen(r.candidates.begin(), r.candidates.end());
  if (seen.size() != r.candidates.size()) throw Error(ErrorCode::BadInput, "duplicate mask_score candidates");
}

void validate(const CompletionRequest& r) {
  if (!(r.temperature > 0.0)) throw Error(ErrorCode::BadInput, "temperature must be > 0");
  if (!(r.top_p > 0.0 && r.top_p <= 1.0)) throw Error(ErrorCode::BadInput, "top_p must be in (0,1]");
  if (r.max_tokens <= 0) throw Error(ErrorCode::BadInput, "max_tokens must be positive");
}

void validate(const AcceptabilityRequest& r) {
  if (r.problem.empty() || r.explanation.empty()) {
    throw Error(ErrorCode::BadInput, "acceptability needs a nonempty problem and explanation");
  }
}

// ---- mocks -------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double unit_interval(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

const std::vector<std::string_view> kMockVocabulary = {
    "the",     "a",       "it",     "is",      "because", "people",  "often",  "use",
    "water",   "stone",   "table",  "apple",   "dog",     "house",   "car",    "helmet",
    "bike",    "road",    "tree",   "book",    "idea",    "reason",  "truth",  "quality",
    "price",   "value",   "notion", "concept", "safe",    "useful",  "simple", "good",
    "helps",   "makes",   "keeps",  "gives",   "when",    "where",   "very",   "also",
    "hand",    "kitchen", "paper",  "glass",   "light",   "feeling", "belief", "way",
};

CompletionResponse HashMockCompletion::complete(const CompletionRequest& req) {
  validate(req);
  const std::string seed = req.seed ? std::to_string(*req.seed) : std::string("none");
  auto word_hash = [&](std::size_t k) {
    return fnv1a64(join_fields({req.prompt, seed, std::to_string(k)}));
  };
  const std::uint64_t h0 = word_hash(0);
  const std::size_t body = 3 + h0 % 10;
  const std::size_t tail = 2 + (h0 >> 8) % 6;
  const std::size_t cap = static_cast<std::size_t>(req.max_tokens);

  std::size_t k = 1;
  auto words = [&](std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count; ++i, ++k) {
      if (i > 0) out.push_back(' ');
      out.append(kMockVocabulary[word_hash(k) % kMockVocabulary.size()]);
    }
    return out;
  };
  const std::size_t body_words = std::min(body, cap);
  std::string text = " " + words(body_words) + ".";
  const std::size_t tail_words = std::min(tail, cap - body_words);
  if (tail_words > 0) text += "\n\n" + words(tail_words) + ".";
  return {text};
}

bool HashMockMaskScorer::is_mappable(std::string_view candidate) {
  if (candidate.empty() || candidate.size() > 8) return false;
  for (char c : candidate) {
    if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return false;
  }
  return true;
}

MaskScoreResponse HashMockMaskScorer::mask_score(const MaskScoreRequest& req) {
  validate(req);
  MaskScoreResponse out;
  for (const auto& cand : req.candidates) {
    if (!is_mappable(cand)) throw Error(ErrorCode::UnmappableCandidate, cand);
    out.logits[cand] = -5.0 + 10.0 * unit_interval(fnv1a64(join_fields({req.text, cand})));
  }
  return out;
}

AcceptabilityResponse HashMockAcceptability::score_acceptability(const AcceptabilityRequest& req) {
  validate(req);
  return {unit_interval(fnv1a64(join_fields({req.problem, req.explanation})))};
}

// ---- cache -------------------------------------------------------------------

json canonicalize(const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      json out = json::object();
      for (const auto& [k, v] : j.items()) out[k] = canonicalize(v);
      return out;
    }
    case json::value_t::array: {
      json out = json::array();
      for (const auto& v : j) out.push_back(canonicalize(v));
      return out;
    }
    case json::value_t::number_float: {
      double x = j.get<double>();
      if (std::isfinite(x) && std::trunc(x) == x && std::fabs(x) < 9.0e15) {
        return json(static_cast<std::int64_t>(x));
      }
      return j;
    }
    case json::value_t::number_unsigned: {
      auto u = j.get<std::uint64_t>();
      if (u <= static_cast<std::uint64_t>(INT64_MAX)) return json(static_cast<std::int64_t>(u));
      return j;
    }
    default:
      return j;
  }
}

std::string cache_key(std::string_view backend_id, Kind kind, const json& request) {
  std::string material(backend_id);
  material.push_back('\n');
  material.append(to_string(kind));
  material.push_back('\n');
  material.append(canonicalize(request).dump());
  return sha256_hex(material);
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec || !std::filesystem::is_directory(dir_)) disable("cannot create " + dir_.string());
}

void ResponseCache::disable(const std::string& why) {
  if (enabled_.exchange(false)) {
    std::cerr << "warning: " << to_string(ErrorCode::CacheIoError) << ": " << why
              << "; continuing without cache\n";
  }
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  std::ifstream in(dir_ / key, std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void ResponseCache::put(const std::string& key, const std::string& body) {
  if (!enabled()) return;
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << std::this_thread::get_id() << "." << tmp_counter_.fetch_add(1);
  const auto tmp = dir_ / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !(out << body) || !out.flush()) {
      disable("cannot write " + tmp.string());
      return;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, dir_ / key, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    disable("cannot rename into " + dir_.string());
  }
}

namespace {

// Hit: parse stored body; a body that fails to parse is treated as a miss and
// overwritten.
template <typename Response, typename Call, typename Parse>
Response cached_call(ResponseCache& cache, const std::string& key, Call&& call, Parse&& parse) {
  if (auto body = cache.get(key)) {
    try {
      return parse(json::parse(*body));
    } catch (const std::exception&) {
    }
  }
  Response resp = call();
  cache.put(key, to_json(resp).dump());
  return resp;
}

class CachedCompletion final : public CompletionBackend {
 public:
  CachedCompletion(std::shared_ptr<CompletionBackend> inner, std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  CompletionResponse complete(const CompletionRequest& req) override {
    return cached_call<CompletionResponse>(
        *cache_, cache_key(inner_->id(), Kind::Completion, to_json(req)), [&] { return inner_->complete(req); },
        [](const json& j) { return completion_response_from_json(j); });
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<CompletionBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

class CachedMaskScorer final : public MaskScoreBackend {
 public:
  CachedMaskScorer(std::shared_ptr<MaskScoreBackend> inner, std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  MaskScoreResponse mask_score(const MaskScoreRequest& req) override {
    return cached_call<MaskScoreResponse>(
        *cache_, cache_key(inner_->id(), Kind::MaskScore, to_json(req)), [&] { return inner_->mask_score(req); },
        [&](const json& j) { return mask_response_from_json(j, req); });
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<MaskScoreBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

class CachedAcceptability final : public AcceptabilityBackend {
 public:
  CachedAcceptability(std::shared_ptr<AcceptabilityBackend> inner, std::shared_ptr<ResponseCache> cache)
      : inner_(std::move(inner)), cache_(std::move(cache)) {}
  AcceptabilityResponse score_acceptability(const AcceptabilityRequest& req) override {
    return cached_call<AcceptabilityResponse>(
        *cache_, cache_key(inner_->id(), Kind::Acceptability, to_json(req)),
        [&] { return inner_->score_acceptability(req); },
        [](const json& j) { return acceptability_response_from_json(j); });
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<AcceptabilityBackend> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

class LimitedCompletion final : public CompletionBackend {
 public:
  LimitedCompletion(std::shared_ptr<CompletionBackend> inner, int limit) : inner_(std::move(inner)), gate_(limit) {}
  CompletionResponse complete(const CompletionRequest& req) override {
    ConcurrencyGate::Hold hold(gate_);
    return inner_->complete(req);
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<CompletionBackend> inner_;
  ConcurrencyGate gate_;
};

class LimitedMaskScorer final : public MaskScoreBackend {
 public:
  LimitedMaskScorer(std::shared_ptr<MaskScoreBackend> inner, int limit) : inner_(std::move(inner)), gate_(limit) {}
  MaskScoreResponse mask_score(const MaskScoreRequest& req) override {
    ConcurrencyGate::Hold hold(gate_);
    return inner_->mask_score(req);
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<MaskScoreBackend> inner_;
  ConcurrencyGate gate_;
};

class LimitedAcceptability final : public AcceptabilityBackend {
 public:
  LimitedAcceptability(std::shared_ptr<AcceptabilityBackend> inner, int limit)
      : inner_(std::move(inner)), gate_(limit) {}
  AcceptabilityResponse score_acceptability(const AcceptabilityRequest& req) override {
    ConcurrencyGate::Hold hold(gate_);
    return inner_->score_acceptability(req);
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::shared_ptr<AcceptabilityBackend> inner_;
  ConcurrencyGate gate_;
};

bool is_mock(const BackendDescriptor& d) { return d.endpoint_url.rfind("mock://", 0) == 0; }

void check_descriptor(const BackendDescriptor& d, Kind expected) {
  if (d.kind != expected) {
    throw Error(ErrorCode::ConfigError, "backend '" + d.id + "' has kind " + std::string(to_string(d.kind)) +
                                            ", expected " + std::string(to_string(expected)));
  }
  if (d.timeout.count() <= 0) throw Error(ErrorCode::ConfigError, "backend '" + d.id + "' timeout must be > 0");
  if (d.max_concurrency < 1) throw Error(ErrorCode::ConfigError, "backend '" + d.id + "' max_concurrency must be >= 1");
}

std::shared_ptr<ResponseCache> open_cache(const std::optional<std::filesystem::path>& dir) {
  if (!dir || dir->empty()) return nullptr;
  return std::make_shared<ResponseCache>(*dir);
}

}  // namespace

ConcurrencyGate::ConcurrencyGate(int limit) : limit_(limit), sem_(limit) {
  if (limit < 1) throw Error(ErrorCode::ConfigError, "concurrency limit must be >= 1");
}

std::shared_ptr<CompletionBackend> with_cache(std::shared_ptr<CompletionBackend> inner,
                                              std::shared_ptr<ResponseCache> cache) {
  return std::make_shared<CachedCompletion>(std::move(inner), std::move(cache));
}
std::shared_ptr<MaskScoreBackend> with_cache(std::shared_ptr<MaskScoreBackend> inner,
                                             std::shared_ptr<ResponseCache> cache) {
  return std::make_shared<CachedMaskScorer>(std::move(inner), std::move(cache));
}
std::shared_ptr<AcceptabilityBackend> with_cache(std::shared_ptr<AcceptabilityBackend> inner,
                                                 std::shared_ptr<ResponseCache> cache) {
  return std::make_shared<CachedAcceptability>(std::move(inner), std::move(cache));
}

std::shared_ptr<CompletionBackend> with_limit(std::shared_ptr<CompletionBackend> inner, int n) {
  return std::make_shared<LimitedCompletion>(std::move(inner), n);
}
std::shared_ptr<MaskScoreBackend> with_limit(std::shared_ptr<MaskScoreBackend> inner, int n) {
  return std::make_shared<LimitedMaskScorer>(std::move(inner), n);
}
std::shared_ptr<AcceptabilityBackend> with_limit(std::shared_ptr<AcceptabilityBackend> inner, int n) {
  return std::make_shared<LimitedAcceptability>(std::move(inner), n);
}

std::shared_ptr<CompletionBackend> make_completion(const BackendDescriptor& d,
                                                   const std::optional<std::filesystem::path>& cache_dir) {
  check_descriptor(d, Kind::Completion);
  std::shared_ptr<CompletionBackend> b;
  if (is_mock(d)) {
    if (d.endpoint_url != "mock://hash") throw Error(ErrorCode::ConfigError, "unknown mock " + d.endpoint_url);
    b = std::make_shared<HashMockCompletion>(d.id);
  } else {
    b = make_http_completion(d);
  }
  if (auto cache = open_cache(cache_dir)) b = with_cache(std::move(b), std::move(cache));
  return with_limit(std::move(b), d.max_concurrency);
}

std::shared_ptr<MaskScoreBackend> make_mask_scorer(const BackendDescriptor& d,
                                                   const std::optional<std::filesystem::path>& cache_dir) {
  check_descriptor(d, Kind::MaskScore);
  std::shared_ptr<MaskScoreBackend> b;
  if (is_mock(d)) {
    if (d.endpoint_url != "mock://hash") throw Error(ErrorCode::ConfigError, "unknown mock " + d.endpoint_url);
    b = std::make_shared<HashMockMaskScorer>(d.id);
  } else {
    b = make_http_mask_scorer(d);
  }
  if (auto cache = open_cache(cache_dir)) b = with_cache(std::move(b), std::move(cache));
  return with_limit(std::move(b), d.max_concurrency);
}

std::shared_ptr<AcceptabilityBackend> make_acceptability(const BackendDescriptor& d,
                                                         const std::optional<std::filesystem::path>& cache_dir) {
  check_descriptor(d, Kind::Acceptability);
  std::shared_ptr<AcceptabilityBackend> b;
  if (is_mock(d)) {
    constexpr std::string_view kFixed = "mock://fixed/";
    if (d.endpoint_url == "mock://hash") {
      b = std::make_shared<HashMockAcceptability>(d.id);
    } else if (d.endpoint_url.rfind(kFixed, 0) == 0) {
      double score = 0.0;
      try {
        score = std::stod(d.endpoint_url.substr(kFixed.size()));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "bad fixed score in " + d.endpoint_url);
      }
      b = std::make_shared<FixedAcceptability>(score, d.id);
    } else {
      throw Error(ErrorCode::ConfigError, "unknown mock " + d.endpoint_url);
    }
  } else {
    b = make_http_acceptability(d);
  }
  if (auto cache = open_cache(cache_dir)) b = with_cache(std::move(b), std::move(cache));
  return with_limit(std::move(b), d.max_concurrency);
}

}  // namespace nle::backends
