#pragma once

#include <array>
#include <string>
#include <string_view>

namespace nle::backends {
class MaskScoreBackend;
class AcceptabilityBackend;
}  // namespace nle::backends

namespace nle::pragmatics {

/// Placeholder carried over the wire; servers swap in their native mask token.
inline constexpr std::string_view kMask = "{MASK}";
inline constexpr std::string_view kDummyExplanation = "it is what it is";

/// The four cloze sentences. s1/s2 ask about the choice, s3/s4 about the
/// explanation; s3 uses the dummy explanation.
struct ClozeQuad {
  std::string s1;
  std::string s2;
  std::string s3;
  std::string s4;

  const std::string& at(int index) const;
};

struct YesNoLogits {
  double logit_yes = 0.0;
  double logit_no = 0.0;
};

struct ConvincingnessScores {
  double c_v_no = 0.0;
  double c_v_dummy = 0.0;
  std::array<double, 4> y{};
};

/// Problem and explanation are trimmed; a terminal '.', '?' or '!' on either
/// suppresses the period that would otherwise be inserted before the
/// question. Throws BadInput on empty text or a mask placeholder in either.
ClozeQuad build_cloze_quad(std::string_view problem_text, std::string_view explanation);

/// Two-way softmax exp(yes) / (exp(yes) + exp(no)), max-shifted.
double yes_no_propensity(const YesNoLogits& logits);

/// (y2 - y1 + 1) / 2: does the explanation make the choice more convincing
/// than no explanation at all.
double c_v_no(double y1, double y2);

/// (y4 - y3 + 1) / 2: is the explanation more convincing than the dummy.
double c_v_dummy(double y3, double y4);

ConvincingnessScores compose_scores(const std::array<YesNoLogits, 4>& logits);

/// Issues the four mask-scoring requests concurrently and composes the result.
/// Any failed sub-query fails the whole computation with BackendError naming
/// the sentence (S1..S4).
ConvincingnessScores convincingness(std::string_view problem_text, std::string_view explanation,
                                    backends::MaskScoreBackend& scorer);

double acceptability(std::string_view problem_text, std::string_view explanation,
                     backends::AcceptabilityBackend& scorer);

}  // namespace nle::pragmatics
