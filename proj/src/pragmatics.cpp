#include "nle/pragmatics.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "nle/backends.hpp"
#include "nle/error.hpp"

namespace nle::pragmatics {

namespace {

std::string_view trim(std::string_view s) {
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

bool ends_terminal(std::string_view s) {
  return !s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!');
}

// "<text>. " unless text already ends in terminal punctuation, then "<text> ".
std::string sentence(std::string_view text) {
  std::string out(text);
  if (!ends_terminal(text)) out.push_back('.');
  out.push_back(' ');
  return out;
}

constexpr std::string_view kChoiceQuestion = "Is this choice convincing? ";
constexpr std::string_view kExplanationQuestion = "Is this explanation convincing? ";

void check_unit(double y, const char* name) {
  if (!(y >= 0.0 && y <= 1.0)) {
    throw Error(ErrorCode::OutOfRange, std::string(name) + " = " + std::to_string(y) + " outside [0,1]");
  }
}

}  // namespace

const std::string& ClozeQuad::at(int index) const {
  switch (index) {
    case 0: return s1;
    case 1: return s2;
    case 2: return s3;
    case 3: return s4;
    default: throw Error(ErrorCode::BadInput, "cloze index out of range");
  }
}

ClozeQuad build_cloze_quad(std::string_view problem_text, std::string_view explanation) {
  const auto problem = trim(problem_text);
  const auto expl = trim(explanation);
  if (problem.empty()) throw Error(ErrorCode::BadInput, "empty problem text");
  if (expl.empty()) throw Error(ErrorCode::BadInput, "empty explanation");
  if (expl.find(kMask) != std::string_view::npos || problem.find(kMask) != std::string_view::npos) {
    throw Error(ErrorCode::BadInput, "input contains the mask placeholder");
  }
  const std::string mask_tail = std::string(kMask) + ".";
  const std::string with_expl = std::string(problem) + " because " + sentence(expl);
  const std::string with_dummy = std::string(problem) + " because " + sentence(kDummyExplanation);

  ClozeQuad q;
  q.s1 = sentence(problem) + std::string(kChoiceQuestion) + mask_tail;
  q.s2 = with_expl + std::string(kChoiceQuestion) + mask_tail;
  q.s3 = with_dummy + std::string(kExplanationQuestion) + mask_tail;
  q.s4 = with_expl + std::string(kExplanationQuestion) + mask_tail;
  return q;
}

double yes_no_propensity(const YesNoLogits& l) {
  if (!std::isfinite(l.logit_yes) || !std::isfinite(l.logit_no)) {
    throw Error(ErrorCode::NonFiniteLogit, "yes/no logits must be finite");
  }
  const double m = std::max(l.logit_yes, l.logit_no);
  const double ey = std::exp(l.logit_yes - m);
  const double en = std::exp(l.logit_no - m);
  return ey / (ey + en);
}

double c_v_no(double y1, double y2) {
  check_unit(y1, "y1");
  check_unit(y2, "y2");
  return (y2 - y1 + 1.0) / 2.0;
}

double c_v_dummy(double y3, double y4) {
  check_unit(y3, "y3");
  check_unit(y4, "y4");
  return (y4 - y3 + 1.0) / 2.0;
}

ConvincingnessScores compose_scores(const std::array<YesNoLogits, 4>& logits) {
  ConvincingnessScores s;
  for (int i = 0; i < 4; ++i) s.y[i] = yes_no_propensity(logits[i]);
  s.c_v_no = c_v_no(s.y[0], s.y[1]);
  s.c_v_dummy = c_v_dummy(s.y[2], s.y[3]);
  return s;
}

ConvincingnessScores convincingness(std::string_view problem_text, std::string_view explanation,
                                    backends::MaskScoreBackend& scorer) {
  const ClozeQuad quad = build_cloze_quad(problem_text, explanation);

  std::array<std::future<backends::MaskScoreResponse>, 4> pending;
  for (int i = 0; i < 4; ++i) {
    pending[i] = std::async(std::launch::async, [&scorer, text = quad.at(i)] {
      return scorer.mask_score({text, {"yes", "no"}});
    });
  }
  // Every future is drained before reporting, so no request outlives the call.
  std::array<YesNoLogits, 4> logits;
  std::string failure;
  for (int i = 0; i < 4; ++i) {
    try {
      auto resp = pending[i].get();
      auto yes = resp.logits.find("yes");
      auto no = resp.logits.find("no");
      if (yes == resp.logits.end() || no == resp.logits.end()) {
        throw Error(ErrorCode::ProtocolError, "response lacks yes/no logits");
      }
      logits[i] = {yes->second, no->second};
    } catch (const std::exception& e) {
      if (failure.empty()) failure = "S" + std::to_string(i + 1) + " failed: " + e.what();
    }
  }
  if (!failure.empty()) throw Error(ErrorCode::BackendError, failure);
  try {
    return compose_scores(logits);
  } catch (const Error& e) {
    throw Error(ErrorCode::BackendError, std::string("bad logits from tester: ") + e.what());
  }
}

double acceptability(std::string_view problem_text, std::string_view explanation,
                     backends::AcceptabilityBackend& scorer) {
  const auto problem = trim(problem_text);
  const auto expl = trim(explanation);
  if (problem.empty() || expl.empty()) throw Error(ErrorCode::BadInput, "acceptability needs nonempty inputs");
  double score = 0.0;
  try {
    score = scorer.score_acceptability({std::string(problem), std::string(expl)}).score;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ScoreOutOfRange) throw;
    throw Error(ErrorCode::BackendError, e.what());
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    throw Error(ErrorCode::ScoreOutOfRange, "acceptability score " + std::to_string(score) + " outside [0,1]");
  }
  return score;
}

}  // namespace nle::pragmatics
