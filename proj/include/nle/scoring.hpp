#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nle/datasets.hpp"
#include "nle/generation.hpp"
#include "nle/metrics.hpp"
#include "nle/text_metrics.hpp"

namespace nle::backends {
class MaskScoreBackend;
class AcceptabilityBackend;
}  // namespace nle::backends

namespace nle::scoring {

/// What a record can be scored with. Null members leave their metrics absent.
struct ScoringContext {
  const text::ConcretenessLexicon* lexicon = nullptr;
  backends::MaskScoreBackend* mask_scorer = nullptr;
  backends::AcceptabilityBackend* acceptability = nullptr;
  datasets::ProblemFormat format{};
  text::BleuOptions bleu_options{};
};

/// Explanations of one template across problems, used as the self-BLEU
/// reference set for a single candidate.
class TemplateCorpus {
 public:
  void add(const std::string& template_id, const std::string& problem_id, const std::string& text);
  /// Token sequences for the template, minus the given problem and empties.
  std::vector<text::TokenSequence> others(const std::string& template_id, const std::string& problem_id) const;

 private:
  std::map<std::string, std::vector<std::pair<std::string, text::TokenSequence>>> by_template_;
};

/// Abstractive references for BLEU, or empty when the dataset has none.
std::vector<text::TokenSequence> references_for(const datasets::ProblemInstance& problem);

/// Every metric except self-BLEU for one record. Undefined values
/// (EmptyText, NoKnownWords, no references, no backend) stay absent; backend
/// failures propagate.
MetricVector score_record(const generation::ExplanationRecord& record, const datasets::ProblemInstance& problem,
                          const ScoringContext& ctx);

/// A single metric; self-BLEU is the candidate against `corpus` (absent
/// without one or with an empty reference set).
std::optional<double> score_metric(Metric metric, const generation::ExplanationRecord& record,
                                   const datasets::ProblemInstance& problem, const ScoringContext& ctx,
                                   const TemplateCorpus* corpus = nullptr);

}  // namespace nle::scoring
