#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nle/backends.hpp"
#include "nle/datasets.hpp"
#include "nle/generation.hpp"
#include "nle/metrics.hpp"
#include "nle/prompt_engine.hpp"
#include "nle/selection.hpp"
#include "nle/stats.hpp"

namespace nle::app {

inline constexpr std::string_view kToolVersion = "0.3.0";
inline constexpr std::string_view kSchemaVersion = "1.0";

struct DatasetConfig {
  std::filesystem::path path;
  datasets::DatasetKind kind = datasets::DatasetKind::Cose;
  std::optional<std::size_t> take_first;
  datasets::EsciLoadOptions esci{};
  datasets::ProblemFormat format{};
};

struct RunConfig {
  DatasetConfig dataset;
  std::filesystem::path catalog;
  /// Template ids to run; empty means every catalog row of the dataset kind.
  std::vector<std::string> templates;
  std::optional<backends::BackendDescriptor> completion;
  std::optional<backends::BackendDescriptor> mask_score;
  std::optional<backends::BackendDescriptor> acceptability;
  generation::GenerationParams generation{};
  generation::GenerateOptions generate{};
  std::optional<std::filesystem::path> lexicon;
  std::optional<selection::Objective> objective;
  std::optional<std::string> baseline_template;
  double alpha = 0.05;
  /// Bonferroni family; defaults to the number of tests in the report grid.
  std::optional<std::size_t> family_size;
  std::optional<std::filesystem::path> cache_dir;
  int workers = 4;
  std::filesystem::path output_dir = "run";
  /// Failed rows tolerated before a command exits with status 2.
  std::size_t row_failure_budget = 0;
  prompts::SituatedParts situated_parts{};
};

/// Replaces ${NAME} with the environment value (ConfigError when unset).
std::string interpolate_env(std::string_view s);

/// Relative paths resolve against base_dir.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);
/// Referenced files exist, workers >= 1, alpha in (0,1).
void validate(const RunConfig& c);
nlohmann::json to_json(const RunConfig& c);
/// The part of the config that determines results: no worker count, cache
/// or output locations, no file paths, no auth tokens.
nlohmann::json semantic_config(const RunConfig& c);

struct RelativeChangeTable {
  selection::Objective objective;
  std::string baseline_template;
  std::size_t family_size = 0;
  double alpha = 0.05;
  selection::RelativeChange cells{};
};

struct RunArtifact {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json semantic_config = nlohmann::json::object();
  std::vector<datasets::ProblemInstance> problems;
  std::vector<generation::ExplanationRecord> records;
  std::vector<MetricVector> metrics;
  std::vector<selection::SelectionResult> selections;
  std::optional<RelativeChangeTable> relative_change;
  std::string tool_version{kToolVersion};
  std::string digest;
};

/// SHA-256 over the semantic config and every row, in row order.
std::string compute_digest(const RunArtifact& a);
/// Recomputes the digest and writes the directory (created if needed).
void write_artifact(RunArtifact& a, const std::filesystem::path& dir);
/// Rejects an unknown schema major version (SchemaVersion).
RunArtifact read_artifact(const std::filesystem::path& dir);

struct CommandStats {
  std::size_t rows = 0;
  std::size_t failed_rows = 0;
};

/// Every (problem, template) pair, problem-major in catalog order.
RunArtifact cmd_generate(const RunConfig& c, CommandStats* stats = nullptr);
/// Adds one MetricVector per record.
void cmd_score(RunArtifact& a, const RunConfig& c, CommandStats* stats = nullptr);
/// Per-problem selection over the scored templates plus the relative-change
/// table against the baseline template.
void cmd_select(RunArtifact& a, const selection::Objective& objective, const std::string& baseline_template,
                double alpha, std::optional<std::size_t> family_size = std::nullopt);

struct ComparisonReport {
  std::string baseline_label;
  std::vector<std::string> row_labels;
  std::vector<stats::ComparisonRow> rows;
  std::size_t family_size = 0;
  double alpha = 0.05;
};

/// Each template of `b` against the same template of `a`.
ComparisonReport cmd_compare(const RunArtifact& a, const RunArtifact& b, double alpha,
                             std::optional<std::size_t> family_size = std::nullopt);
/// Every other template of one artifact against its baseline template.
ComparisonReport compare_templates(const RunArtifact& a, const std::string& baseline_template, double alpha,
                                   std::optional<std::size_t> family_size = std::nullopt);

/// "↑**", "↓", "" (tested, not significant) or "--" (not tested).
std::string render_cell(const std::optional<stats::TestResult>& cell);
std::string render_text(const ComparisonReport& r);
std::string render_tsv(const ComparisonReport& r);
std::string render_text(const RelativeChangeTable& t);
std::string render_tsv(const RelativeChangeTable& t);
/// Per-template metric means; "--" where no record defines the metric.
std::string render_means(const RunArtifact& a);

/// Maps an exception to the CLI exit status (1 config, 2 budget, 3 other).
int exit_code_for(const std::exception& e);

}  // namespace nle::app
