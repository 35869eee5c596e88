#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>

#include "nle/backends.hpp"
#include "nle/error.hpp"
#include "nle/mock_server.hpp"
#include "nle/pragmatics.hpp"
#include "nle/worker_pool.hpp"

using namespace nle;
using namespace nle::backends;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no nle::Error thrown";
  return ErrorCode::ConfigError;
}

// Plain FNV-1a 64, written out again here.
std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) / 9007199254740992.0; }

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("nle_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

class Counting : public CompletionBackend {
 public:
  std::atomic<int> calls{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  CompletionResponse complete(const CompletionRequest& req) override {
    calls++;
    const int now = ++in_flight;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --in_flight;
    return {" reply to " + req.prompt};
  }
  std::string id() const override { return "counting"; }
};

// Scripted HTTP server for contract violations the hash mock never produces.
struct BadServer {
  httplib::Server srv;
  std::thread th;
  int port = 0;
  std::atomic<int> hits{0};
  std::string last_auth;

  BadServer() {
    srv.Post("/v1/complete", [this](const httplib::Request& req, httplib::Response& res) {
      hits++;
      last_auth = req.get_header_value("Authorization");
      const auto j = nlohmann::json::parse(req.body);
      res.set_content(nlohmann::json{{"text", j["prompt"].get<std::string>() + " and more"}}.dump(), "application/json");
    });
    srv.Post("/v1/acceptability", [this](const httplib::Request&, httplib::Response& res) {
      hits++;
      res.set_content(R"({"score": 1.0000001})", "application/json");
    });
    srv.Post("/v1/mask_score", [this](const httplib::Request&, httplib::Response& res) {
      const int n = hits++;
      if (n < 2) {
        res.status = 503;
        res.set_content(R"({"error":"busy"})", "application/json");
        return;
      }
      res.set_content(R"({"logits": {"yes": 1.5, "no": -0.5}})", "application/json");
    });
    port = srv.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  ~BadServer() {
    srv.stop();
    th.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST(HashMocks, MatchDocumentedConstruction) {
  HashMockMaskScorer m;
  const MaskScoreRequest req{"Is it? {MASK}.", {"yes", "no"}};
  const auto r = m.mask_score(req);
  for (const auto& c : req.candidates) {
    EXPECT_EQ(r.logits.at(c), -5.0 + 10.0 * unit(fnv(req.text + "\x1f" + c)));
    EXPECT_GE(r.logits.at(c), -5.0);
    EXPECT_LT(r.logits.at(c), 5.0);
  }
  HashMockAcceptability a;
  EXPECT_EQ(a.score_acceptability({"p", "e"}).score, unit(fnv("p\x1f" "e")));
  EXPECT_EQ(fnv1a64("hello"), fnv("hello"));
  EXPECT_EQ(code_of([&] { m.mask_score({"Is it? {MASK}.", {"unquestionably"}}); }), ErrorCode::UnmappableCandidate);
}

TEST(HashMocks, CompletionShape) {
  HashMockCompletion c;
  for (int s = 0; s < 50; ++s) {
    CompletionRequest req{"Why? a because", 0.7, 1.0, 64, s};
    const auto a = c.complete(req).text;
    EXPECT_EQ(a, c.complete(req).text);
    ASSERT_FALSE(a.empty());
    EXPECT_EQ(a[0], ' ');
    const auto cut = a.find("\n\n");
    ASSERT_NE(cut, std::string::npos);
    EXPECT_EQ(a[cut - 1], '.');
    EXPECT_EQ(a.back(), '.');
    EXPECT_EQ(a.find(req.prompt), std::string::npos);
  }
  CompletionRequest capped{"x", 0.7, 1.0, 2, 1};
  const auto t = c.complete(capped).text;
  EXPECT_LE(std::count(t.begin(), t.end(), ' '), 2);
}

TEST(Validation, MaskRequests) {
  EXPECT_EQ(code_of([] { validate(MaskScoreRequest{"no mask", {"yes"}}); }), ErrorCode::BadInput);
  EXPECT_EQ(code_of([] { validate(MaskScoreRequest{"{MASK} {MASK}", {"yes"}}); }), ErrorCode::BadInput);
  EXPECT_EQ(code_of([] { validate(MaskScoreRequest{"{MASK}", {}}); }), ErrorCode::BadInput);
  EXPECT_EQ(code_of([] { validate(MaskScoreRequest{"{MASK}", {"yes", "yes"}}); }), ErrorCode::BadInput);
  EXPECT_NO_THROW(validate(MaskScoreRequest{"{MASK}", {"yes", "no"}}));
  const MaskScoreRequest req{"{MASK}", {"yes", "no"}};
  EXPECT_EQ(code_of([&] { mask_response_from_json(nlohmann::json{{"logits", {{"yes", 1.0}}}}, req); }),
            ErrorCode::ProtocolError);
  EXPECT_EQ(code_of([] { acceptability_response_from_json(nlohmann::json{{"score", 1.2}}); }),
            ErrorCode::ScoreOutOfRange);
  EXPECT_EQ(code_of([] { completion_response_from_json(nlohmann::json{{"txt", "a"}}); }), ErrorCode::ProtocolError);
}

TEST(CacheKey, Canonical) {
  const auto a = nlohmann::json::parse(R"({"prompt": "p", "temperature": 1.0, "top_p": 1, "max_tokens": 64})");
  const auto b = nlohmann::json::parse(R"({"max_tokens": 64.0, "top_p": 1.0, "temperature": 1, "prompt": "p"})");
  EXPECT_EQ(cache_key("m", Kind::Completion, a), cache_key("m", Kind::Completion, b));
  EXPECT_NE(cache_key("m", Kind::Completion, a), cache_key("n", Kind::Completion, a));
  EXPECT_NE(cache_key("m", Kind::Completion, a), cache_key("m", Kind::MaskScore, a));
  EXPECT_EQ(cache_key("m", Kind::Completion, a).size(), 64u);
  const auto c = nlohmann::json::parse(R"({"prompt": "p", "temperature": 0.7})");
  EXPECT_EQ(canonicalize(c)["temperature"], 0.7);
}

TEST(Cache, HitsSkipUpstream) {
  const auto dir = fresh_dir("cache_hits");
  auto inner = std::make_shared<Counting>();
  auto cached = with_cache(inner, std::make_shared<ResponseCache>(dir));
  const CompletionRequest req{"hello", 0.7, 1.0, 64, 1};
  const auto first = cached->complete(req);
  const auto second = cached->complete(req);
  EXPECT_EQ(first.text, inner->complete(req).text);
  EXPECT_EQ(second.text, first.text);
  EXPECT_EQ(inner->calls, 2);
  fs::remove_all(dir);
}

TEST(Cache, CorruptEntryIsMiss) {
  const auto dir = fresh_dir("cache_corrupt");
  auto inner = std::make_shared<Counting>();
  auto cache = std::make_shared<ResponseCache>(dir);
  auto cached = with_cache(inner, cache);
  const CompletionRequest req{"x", 0.7, 1.0, 64, std::nullopt};
  cached->complete(req);
  for (const auto& e : fs::directory_iterator(dir)) std::ofstream(e.path()) << "{garbage";
  EXPECT_EQ(cached->complete(req).text, " reply to x");
  EXPECT_EQ(inner->calls, 2);
  EXPECT_EQ(cached->complete(req).text, " reply to x");
  EXPECT_EQ(inner->calls, 2);
  fs::remove_all(dir);
}

TEST(Cache, UnwritableDirDegrades) {
  const auto file = fresh_dir("cache_file");
  std::ofstream(file) << "not a directory";
  auto inner = std::make_shared<Counting>();
  auto cache = std::make_shared<ResponseCache>(file / "sub");
  EXPECT_FALSE(cache->enabled());
  auto cached = with_cache(inner, cache);
  EXPECT_EQ(cached->complete({"y"}).text, " reply to y");
  fs::remove(file);
}

TEST(Cache, ConcurrentSameKey) {
  const auto dir = fresh_dir("cache_conc");
  auto inner = std::make_shared<Counting>();
  auto cached = with_cache(inner, std::make_shared<ResponseCache>(dir));
  std::vector<std::string> out(32);
  parallel_for(out.size(), 8, [&](std::size_t i) { out[i] = cached->complete({"same"}).text; });
  for (const auto& s : out) EXPECT_EQ(s, " reply to same");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.path().extension() != ".tmp" ? 1 : 0;
  EXPECT_EQ(files, 1u);
  fs::remove_all(dir);
}

TEST(Limit, NeverExceeded) {
  auto inner = std::make_shared<Counting>();
  auto limited = with_limit(inner, 3);
  parallel_for(60, 12, [&](std::size_t i) { limited->complete({"p" + std::to_string(i)}); });
  EXPECT_EQ(inner->calls, 60);
  EXPECT_LE(inner->peak, 3);
  EXPECT_GE(inner->peak, 1);
}

TEST(Http, AgainstMockServer) {
  MockServer server;
  server.start();
  BackendDescriptor d;
  d.id = "http-mock";
  d.endpoint_url = server.base_url();
  d.timeout = std::chrono::milliseconds(5000);
  auto completion = make_http_completion(d);
  auto masks = make_http_mask_scorer(d);
  auto accept = make_http_acceptability(d);

  HashMockCompletion local_c;
  HashMockMaskScorer local_m;
  HashMockAcceptability local_a;
  const CompletionRequest creq{"Why? a because", 0.7, 1.0, 64, 9};
  EXPECT_EQ(completion->complete(creq).text, local_c.complete(creq).text);
  const MaskScoreRequest mreq{"Q? A. Is this choice convincing? {MASK}.", {"yes", "no"}};
  EXPECT_EQ(masks->mask_score(mreq).logits, local_m.mask_score(mreq).logits);
  EXPECT_EQ(accept->score_acceptability({"p", "e"}).score, local_a.score_acceptability({"p", "e"}).score);

  EXPECT_EQ(code_of([&] { masks->mask_score({"{MASK}", {"yes", "unquestionably"}}); }),
            ErrorCode::UnmappableCandidate);
  try {
    pragmatics::convincingness("p", "e", *masks);
  } catch (...) {
    ADD_FAILURE() << "convincingness over HTTP failed";
  }

  httplib::Client raw(server.base_url());
  auto bad = raw.Post("/v1/complete", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(nlohmann::json::parse(bad->body)["error"], "bad_request");
  auto missing = raw.Post("/v1/acceptability", R"({"problem": "p"})", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 400);
  auto health = raw.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  server.stop();
}

TEST(Http, ContractViolations) {
  BadServer bad;
  BackendDescriptor d;
  d.id = "bad";
  d.endpoint_url = bad.url();
  d.timeout = std::chrono::milliseconds(5000);
  d.strict_no_echo = true;
  EXPECT_EQ(code_of([&] { make_http_completion(d)->complete({"echo me"}); }), ErrorCode::ProtocolError);
  d.strict_no_echo = false;
  EXPECT_EQ(make_http_completion(d)->complete({"echo me"}).text, "echo me and more");
  EXPECT_EQ(code_of([&] { make_http_acceptability(d)->score_acceptability({"p", "e"}); }),
            ErrorCode::ScoreOutOfRange);
  bad.hits = 0;
  const auto r = make_http_mask_scorer(d)->mask_score({"{MASK}", {"yes", "no"}});
  EXPECT_EQ(r.logits.at("yes"), 1.5);
  EXPECT_EQ(bad.hits, 3);
  EXPECT_EQ(bad.last_auth, "");
  d.auth_token = "s3cret";
  make_http_completion(d)->complete({"x"});
  EXPECT_EQ(bad.last_auth, "Bearer s3cret");
}

TEST(Http, UnreachableIsTimeout) {
  BackendDescriptor d;
  d.id = "nowhere";
  d.endpoint_url = "http://127.0.0.1:1";
  d.timeout = std::chrono::milliseconds(300);
  EXPECT_EQ(code_of([&] { make_http_completion(d)->complete({"x"}); }), ErrorCode::Timeout);
  d.endpoint_url = "ftp://x";
  EXPECT_EQ(code_of([&] { make_http_completion(d); }), ErrorCode::ConfigError);
}

TEST(Factories, MockDescriptors) {
  BackendDescriptor d;
  d.id = "m";
  d.kind = Kind::Acceptability;
  d.endpoint_url = "mock://fixed/0.5";
  EXPECT_EQ(make_acceptability(d, std::nullopt)->score_acceptability({"p", "e"}).score, 0.5);
  EXPECT_EQ(code_of([&] { make_completion(d, std::nullopt); }), ErrorCode::ConfigError);
  d.kind = Kind::Completion;
  d.endpoint_url = "mock://nope";
  EXPECT_EQ(code_of([&] { make_completion(d, std::nullopt); }), ErrorCode::ConfigError);
  d.endpoint_url = "mock://hash";
  EXPECT_EQ(make_completion(d, std::nullopt)->complete({"p"}).text, HashMockCompletion().complete({"p"}).text);
}
