#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "nle/prompt_engine.hpp"

namespace nle::backends {
class CompletionBackend;
}

namespace nle::generation {

/// Nucleus-sampling parameters; defaults are temperature 0.7, top_p 1, at
/// most 64 tokens.
struct GenerationParams {
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 64;
  std::optional<std::int64_t> seed;

  void validate() const;
  bool operator==(const GenerationParams&) const = default;
};

struct ExplanationRecord {
  std::string problem_id;
  std::string template_id;
  std::string prompt;
  std::string raw_text;
  std::string processed_text;
  GenerationParams params;
  std::string backend_id;
  bool postprocessed = true;
  /// The backend returned an empty (or whitespace-only) continuation.
  bool empty_generation = false;
  /// Set when the backend call failed; the texts are then empty.
  std::optional<std::string> error;

  bool operator==(const ExplanationRecord&) const = default;
};

/// Normalizes "\r\n\r\n" to "\n\n", cuts at the first "\n\n" (exclusive) and
/// trims surrounding whitespace. Idempotent.
std::string post_process(std::string_view raw);

std::string trim_whitespace(std::string_view s);

struct GenerateOptions {
  bool postprocess = true;
  /// Extra attempts after an empty continuation; 0 keeps the first result.
  int retries = 0;
};

/// One completion request for the rendered prompt. Backend failures are
/// rethrown as BackendError naming the problem and template; an empty
/// continuation is returned as a flagged record.
ExplanationRecord generate(const prompts::RenderedPrompt& prompt, backends::CompletionBackend& backend,
                           const GenerationParams& params, const GenerateOptions& options = {});

nlohmann::json to_json(const GenerationParams& p);
GenerationParams params_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExplanationRecord& r);
ExplanationRecord record_from_json(const nlohmann::json& j);

}  // namespace nle::generation
