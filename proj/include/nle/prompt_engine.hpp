#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nle/datasets.hpp"

namespace nle::prompts {

enum class SituationClass { Unsituated, Abstract, Detailed, Basic, Short };

std::string_view to_string(SituationClass c);
SituationClass situation_class_from_string(std::string_view s);

/// Named template slots. Situated parts are Hint (H), Audience (D_A) and
/// ProblemDetails (D_P); the rest come from the problem instance.
enum class Slot { Problem, Hint, Audience, ProblemDetails, Q, C, A, P, Esci };

std::string_view slot_name(Slot s);
bool is_situated_slot(Slot s);

/// Optional hint, audience details and problem details.
struct SituatedParts {
  std::optional<std::string> hint;
  std::optional<std::string> audience_details;
  std::optional<std::string> problem_details;

  bool any() const { return hint || audience_details || problem_details; }
};

class PromptTemplate {
 public:
  struct Segment {
    std::string literal;
    std::optional<Slot> slot;
  };

  /// Parses `{slot}` markers (`{{`/`}}` are literal braces) and checks that
  /// every slot exists for the dataset kind (UnresolvedSlot) and that
  /// unsituated templates use no situated slot (ParseError). Whitespace runs
  /// in the literal text collapse to one space.
  static PromptTemplate create(std::string id, datasets::DatasetKind kind, SituationClass situation,
                               std::string_view text);

  const std::string& id() const noexcept { return id_; }
  datasets::DatasetKind dataset_kind() const noexcept { return kind_; }
  SituationClass situation_class() const noexcept { return situation_; }
  const std::string& text() const noexcept { return text_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  bool uses(Slot s) const;

 private:
  std::string id_;
  datasets::DatasetKind kind_ = datasets::DatasetKind::Cose;
  SituationClass situation_ = SituationClass::Unsituated;
  std::string text_;
  std::vector<Segment> segments_;
};

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  std::string problem_id;
};

struct ComposeOptions {
  datasets::ProblemFormat format{};
  datasets::EsciPhraseTable esci_phrases{};
};

/// Substitutes every slot. Slot values are trimmed and the result carries no
/// leading or trailing whitespace. Errors: KindMismatch, MissingPart (a
/// situated slot whose part is absent or blank), UnresolvedSlot.
RenderedPrompt compose_prompt(const PromptTemplate& tmpl, const datasets::ProblemInstance& problem,
                              const SituatedParts& parts = {}, const ComposeOptions& options = {});

/// True when the template has a situated slot or its class is abstract,
/// detailed or short.
bool is_situated(const PromptTemplate& tmpl);

using Catalog = std::vector<PromptTemplate>;

/// TSV columns id, dataset_kind, situation_class, template. '#' lines and an
/// optional "id\t..." header are skipped.
Catalog parse_catalog(std::string_view tsv, std::string_view source_name = "<memory>");
Catalog load_catalog(const std::filesystem::path& path);

const PromptTemplate* find_template(const Catalog& catalog, std::string_view id);

}  // namespace nle::prompts
