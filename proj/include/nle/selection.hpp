#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nle/datasets.hpp"
#include "nle/generation.hpp"
#include "nle/metrics.hpp"
#include "nle/prompt_engine.hpp"
#include "nle/scoring.hpp"

namespace nle::backends {
class CompletionBackend;
}

namespace nle::selection {

enum class Direction { Minimize, Maximize };

struct Objective {
  Metric metric = Metric::Length;
  Direction direction = Direction::Minimize;
  /// Self-BLEU is a corpus metric; per instance it is only a proxy.
  bool is_proxy() const { return metric == Metric::SelfBleu; }
  bool operator==(const Objective&) const = default;
};

/// "length:min", "acceptability:max" (also "minimize"/"maximize").
Objective parse_objective(std::string_view spec);
std::string to_string(const Objective& o);

struct SelectionResult {
  std::string problem_id;
  std::string chosen_template_id;
  /// Every candidate in catalog order, undefined values included.
  std::vector<std::pair<std::string, std::optional<double>>> metric_by_template;
  /// Candidates left out because their value was undefined.
  std::vector<std::string> excluded;
  Objective objective;
  bool operator==(const SelectionResult&) const = default;
};

/// Argmin/argmax over the defined values; the earliest candidate wins ties.
/// Errors: NoCandidates, AllMetricsUndefined.
SelectionResult choose(std::string problem_id, std::vector<std::pair<std::string, std::optional<double>>> values,
                       const Objective& objective);

/// Scoring inputs for select_prompt. `corpus` feeds the self-BLEU proxy.
struct MetricContext {
  scoring::ScoringContext scoring{};
  const scoring::TemplateCorpus* corpus = nullptr;
  prompts::SituatedParts parts{};
  prompts::ComposeOptions compose{};
  generation::GenerateOptions generate{};
};

/// Generates one explanation per candidate (concurrently, identical params),
/// scores the objective and chooses. Composition failures (e.g. a situated
/// part missing) mark that candidate undefined. Errors: NoCandidates,
/// KindMismatch, AllMetricsUndefined, BackendError.
SelectionResult select_prompt(const datasets::ProblemInstance& problem, std::span<const prompts::PromptTemplate> candidates,
                              const Objective& objective, backends::CompletionBackend& backend,
                              const generation::GenerationParams& params, const MetricContext& ctx);

struct MetricChange {
  /// (mean(selected) - mean(baseline)) / mean(baseline) over complete pairs.
  std::optional<double> portion_change;
  std::optional<double> p_value;
  bool significant = false;
  int stars = 0;
  std::size_t n = 0;
  /// Why a cell is empty: "no pairs", "zero baseline mean".
  std::string note;
};

using RelativeChange = std::array<MetricChange, kMetricCount>;

/// Paired by problem_id. family_size defaults to the number of metrics with a
/// p-value. Errors: LengthMismatch, PairingMismatch.
RelativeChange relative_change(std::span<const MetricVector> baseline, std::span<const MetricVector> selected,
                               double alpha = 0.05, std::optional<std::size_t> family_size = std::nullopt);

nlohmann::json to_json(const SelectionResult& r);
SelectionResult selection_from_json(const nlohmann::json& j);

}  // namespace nle::selection
