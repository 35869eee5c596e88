#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nle::datasets {

enum class DatasetKind { Cose, Esci };
enum class EsciLabel { Exact, Substitute, Complement, Irrelevant };

std::string_view to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(std::string_view s);

/// Accepts single-letter codes (e/s/c/i) and the long forms, case-insensitive.
EsciLabel parse_esci_label(std::string_view s);
char esci_code(EsciLabel l);
/// "exact match", "substitute", "complement", "irrelevant".
std::string_view esci_long_form(EsciLabel l);

/// Prose used for the {esci} prompt slot; defaults follow the situated-prompt
/// figure ("is a complementary match").
struct EsciPhraseTable {
  std::array<std::string, 4> phrases{"an exact match", "a substitute", "a complementary match", "irrelevant"};
  const std::string& operator[](EsciLabel l) const { return phrases[static_cast<int>(l)]; }
};

struct CoseItem {
  std::string question;
  std::vector<std::string> choices;
  std::string answer;
  std::optional<std::string> abstractive_explanation;

  bool operator==(const CoseItem&) const = default;
};

struct EsciItem {
  std::string query;
  std::string product_title;
  EsciLabel label = EsciLabel::Exact;

  bool operator==(const EsciItem&) const = default;
};

struct ProblemInstance {
  std::string id;
  DatasetKind kind = DatasetKind::Cose;
  std::optional<CoseItem> cose;
  std::optional<EsciItem> esci;

  bool operator==(const ProblemInstance&) const = default;
};

/// Checks the kind/payload pairing and answer-in-choices.
void validate(const ProblemInstance& p);

/// `take_first` truncates after that many rows. Instance ids default to
/// "cose-<row index>" unless the row carries an "id" field.
std::vector<ProblemInstance> load_cose(const std::filesystem::path& path, std::optional<std::size_t> take_first = {});
std::vector<ProblemInstance> parse_cose(std::string_view jsonl, std::optional<std::size_t> take_first = {});

struct EsciLoadOptions {
  /// Keep the first N rows of each label, concatenated in e, s, c, i order.
  std::optional<std::size_t> per_label;
  /// Drop rows whose query+title non-ASCII byte ratio exceeds this.
  std::optional<double> max_non_ascii_ratio;
};

/// RFC-4180 CSV with header columns query, product_title, esci_label (any
/// order, extra columns ignored; an "id" or "example_id" column names rows).
std::vector<ProblemInstance> load_esci(const std::filesystem::path& path, const EsciLoadOptions& options = {});
std::vector<ProblemInstance> parse_esci(std::string_view csv, const EsciLoadOptions& options = {});

/// Splits RFC-4180 text into records of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view csv);

enum class ProblemStyle {
  Table,     // "q c? a"
  Appendix,  // "q, c? a"
};

struct ProblemFormat {
  ProblemStyle style = ProblemStyle::Table;
  std::string choice_joiner = ", ";
};

/// Canonical problem string. CoS-E: "q c? a" (or "q, c? a"); ESCI:
/// "When searching for q, p is <long-form label>".
std::string problem_string(const ProblemInstance& p, const ProblemFormat& format = {});

std::string joined_choices(const CoseItem& item, std::string_view joiner = ", ");

nlohmann::json to_json(const ProblemInstance& p);
ProblemInstance problem_from_json(const nlohmann::json& j);

}  // namespace nle::datasets
