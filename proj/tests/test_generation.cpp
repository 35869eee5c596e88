#include <atomic>
#include <random>

#include <gtest/gtest.h>

#include "nle/backends.hpp"
#include "nle/error.hpp"
#include "nle/generation.hpp"

using namespace nle;
using namespace nle::generation;

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

class Scripted : public backends::CompletionBackend {
 public:
  std::vector<std::string> replies;
  std::atomic<int> calls{0};
  bool fail = false;
  backends::CompletionRequest last;

  backends::CompletionResponse complete(const backends::CompletionRequest& req) override {
    last = req;
    if (fail) throw Error(ErrorCode::Timeout, "timed out");
    const int i = calls++;
    return {replies[std::min<std::size_t>(i, replies.size() - 1)]};
  }
  std::string id() const override { return "scripted"; }
};

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "ab .\n\n\r\t";
  std::uniform_int_distribution<int> len(0, 40);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s(static_cast<std::size_t>(len(rng)), ' ');
  for (auto& c : s) c = alphabet[pick(rng)];
  return s;
}

prompts::RenderedPrompt prompt() { return {"Why? a because", "t1", "p1"}; }

}  // namespace

TEST(PostProcess, Examples) {
  EXPECT_EQ(post_process("great price.\n\nBuy now"), "great price.");
  EXPECT_EQ(post_process("no double newline here"), "no double newline here");
  EXPECT_EQ(post_process("\n\nall tail"), "");
  EXPECT_EQ(post_process("  lead\r\n\r\ntail"), "lead");
  EXPECT_EQ(post_process(" one\nline two \n"), "one\nline two");
  EXPECT_EQ(post_process(""), "");
}

TEST(PostProcess, IdempotentAndSubstring) {
  std::mt19937_64 rng(73);
  for (int i = 0; i < 1000; ++i) {
    const auto x = random_text(rng);
    const auto once = post_process(x);
    EXPECT_EQ(post_process(once), once);
    EXPECT_EQ(once.find("\n\n"), std::string::npos);
    EXPECT_NE(x.find(once), std::string::npos) << "output not a substring of input";
  }
}

TEST(Params, DefaultsAndValidation) {
  GenerationParams p;
  EXPECT_EQ(p.temperature, 0.7);
  EXPECT_EQ(p.top_p, 1.0);
  EXPECT_EQ(p.max_tokens, 64);
  EXPECT_FALSE(p.seed);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(code_of([] { GenerationParams{0.0}.validate(); }), ErrorCode::BadInput);
  EXPECT_EQ(code_of([] { GenerationParams{0.7, 1.5}.validate(); }), ErrorCode::BadInput);
  EXPECT_EQ(code_of([] { GenerationParams{0.7, 1.0, 0}.validate(); }), ErrorCode::BadInput);
  GenerationParams s{0.9, 0.8, 12, 42};
  EXPECT_EQ(params_from_json(to_json(s)), s);
}

TEST(Generate, ProvenanceAndPostProcess) {
  Scripted b;
  b.replies = {" because-suffix: X.\n\nmore"};
  GenerationParams params{0.7, 1.0, 64, 5};
  const auto r = generate(prompt(), b, params);
  EXPECT_EQ(r.raw_text, " because-suffix: X.\n\nmore");
  EXPECT_EQ(r.processed_text, "because-suffix: X.");
  EXPECT_EQ(r.problem_id, "p1");
  EXPECT_EQ(r.template_id, "t1");
  EXPECT_EQ(r.prompt, "Why? a because");
  EXPECT_EQ(r.backend_id, "scripted");
  EXPECT_EQ(r.params, params);
  EXPECT_EQ(b.last.prompt, "Why? a because");
  EXPECT_EQ(b.last.seed, 5);
  EXPECT_FALSE(r.empty_generation);
  EXPECT_EQ(record_from_json(to_json(r)), r);
}

TEST(Generate, NoPostprocessKeepsTail) {
  Scripted b;
  b.replies = {" first.\n\nsecond "};
  const auto r = generate(prompt(), b, {}, {false, 0});
  EXPECT_EQ(r.processed_text, "first.\n\nsecond");
  EXPECT_FALSE(r.postprocessed);
}

TEST(Generate, EmptyIsFlaggedAndRetried) {
  Scripted b;
  b.replies = {"  \n", "ok"};
  const auto flagged = generate(prompt(), b, {});
  EXPECT_TRUE(flagged.empty_generation);
  EXPECT_EQ(b.calls, 1);
  Scripted c;
  c.replies = {"", "ok"};
  const auto retried = generate(prompt(), c, {}, {true, 2});
  EXPECT_FALSE(retried.empty_generation);
  EXPECT_EQ(retried.processed_text, "ok");
  EXPECT_EQ(c.calls, 2);
}

TEST(Generate, BackendFailureNamesProvenance) {
  Scripted b;
  b.fail = true;
  try {
    generate(prompt(), b, {});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendError);
    const std::string what = e.what();
    EXPECT_NE(what.find("p1"), std::string::npos);
    EXPECT_NE(what.find("t1"), std::string::npos);
  }
}

TEST(Generate, HashMockDeterministic) {
  backends::HashMockCompletion m;
  GenerationParams params;
  params.seed = 3;
  const auto a = generate(prompt(), m, params);
  const auto b = generate(prompt(), m, params);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a.processed_text.empty());
  EXPECT_EQ(a.processed_text.find("\n"), std::string::npos);
  EXPECT_NE(a.raw_text.find("\n\n"), std::string::npos);
}
