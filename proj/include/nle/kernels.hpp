#pragma once

// Data-parallel scoring kernels. Each OpenMP kernel has a serial reference
// with identical arithmetic; tests assert bit-equality and bench/ compares
// their throughput.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nle/text_metrics.hpp"

namespace nle::kernels {

/// Self-BLEU via a corpus-wide n-gram index: for each n-gram the two largest
/// per-item counts are kept, so the clipping count against "every item but i"
/// is an O(1) lookup. Parallel over items. threads <= 0 uses the OpenMP default.
text::SelfBleuResult self_bleu_parallel(std::span<const text::TokenSequence> corpus,
                                        const text::BleuOptions& options = {}, int threads = 0);

/// Reference: literally bleu(corpus[i], corpus \ {i}) for every i, serially.
text::SelfBleuResult self_bleu_serial(std::span<const text::TokenSequence> corpus,
                                      const text::BleuOptions& options = {});

struct LexicalScores {
  std::size_t length = 0;
  std::optional<double> ttr;
  std::optional<double> concreteness;
  std::optional<double> bleu;
};

struct LexicalInput {
  std::span<const std::string> texts;
  /// Optional lexicon; concreteness stays absent without one.
  const text::ConcretenessLexicon* lexicon = nullptr;
  /// Optional per-text reference sets (same length as texts when given).
  std::span<const std::vector<text::TokenSequence>> references = {};
  text::BleuOptions bleu_options{};
};

std::vector<LexicalScores> lexical_scores_parallel(const LexicalInput& input, int threads = 0);
std::vector<LexicalScores> lexical_scores_serial(const LexicalInput& input);

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace nle::kernels
