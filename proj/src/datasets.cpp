#include "nle/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "nle/error.hpp"

namespace nle::datasets {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

double non_ascii_ratio(std::string_view a, std::string_view b) {
  std::size_t total = a.size() + b.size();
  if (total == 0) return 0.0;
  std::size_t high = 0;
  for (unsigned char c : a) high += c >= 0x80;
  for (unsigned char c : b) high += c >= 0x80;
  return static_cast<double>(high) / static_cast<double>(total);
}

}  // namespace

std::string_view to_string(DatasetKind k) { return k == DatasetKind::Cose ? "cose" : "esci"; }

DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "cose") return DatasetKind::Cose;
  if (s == "esci") return DatasetKind::Esci;
  throw Error(ErrorCode::ParseError, "unknown dataset kind '" + std::string(s) + "'");
}

EsciLabel parse_esci_label(std::string_view s) {
  const std::string l = lower(trimmed(s));
  if (l == "e" || l == "exact" || l == "exact match") return EsciLabel::Exact;
  if (l == "s" || l == "substitute") return EsciLabel::Substitute;
  if (l == "c" || l == "complement") return EsciLabel::Complement;
  if (l == "i" || l == "irrelevant") return EsciLabel::Irrelevant;
  throw Error(ErrorCode::BadLabel, "unknown ESCI label '" + std::string(s) + "'");
}

char esci_code(EsciLabel l) {
  constexpr char kCodes[] = {'e', 's', 'c', 'i'};
  return kCodes[static_cast<int>(l)];
}

std::string_view esci_long_form(EsciLabel l) {
  switch (l) {
    case EsciLabel::Exact: return "exact match";
    case EsciLabel::Substitute: return "substitute";
    case EsciLabel::Complement: return "complement";
    case EsciLabel::Irrelevant: return "irrelevant";
  }
  return "exact match";
}

void validate(const ProblemInstance& p) {
  if (p.kind == DatasetKind::Cose) {
    if (!p.cose || p.esci) throw Error(ErrorCode::ParseError, p.id + ": cose instance must carry only a cose payload");
    const auto& c = *p.cose;
    if (std::find(c.choices.begin(), c.choices.end(), c.answer) == c.choices.end()) {
      throw Error(ErrorCode::AnswerNotInChoices, p.id + ": answer '" + c.answer + "' not among choices");
    }
  } else {
    if (!p.esci || p.cose) throw Error(ErrorCode::ParseError, p.id + ": esci instance must carry only an esci payload");
  }
}

std::vector<ProblemInstance> parse_cose(std::string_view jsonl, std::optional<std::size_t> take_first) {
  std::vector<ProblemInstance> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (take_first && out.size() >= *take_first) break;
    if (trimmed(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    ProblemInstance p;
    p.kind = DatasetKind::Cose;
    try {
      const json j = json::parse(line);
      CoseItem item;
      item.question = j.at("question").get<std::string>();
      item.choices = j.at("choices").get<std::vector<std::string>>();
      item.answer = j.at("answer").get<std::string>();
      if (j.contains("abstractive_explanation") && !j.at("abstractive_explanation").is_null()) {
        item.abstractive_explanation = j.at("abstractive_explanation").get<std::string>();
      }
      p.id = j.contains("id") ? j.at("id").get<std::string>() : "cose-" + std::to_string(out.size());
      p.cose = std::move(item);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (std::find(p.cose->choices.begin(), p.cose->choices.end(), p.cose->answer) == p.cose->choices.end()) {
      throw Error(ErrorCode::AnswerNotInChoices, where + ": answer '" + p.cose->answer + "' not among choices");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ProblemInstance> load_cose(const std::filesystem::path& path, std::optional<std::size_t> take_first) {
  return parse_cose(read_file(path), take_first);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const char c = csv[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') {
      // handled by the '\n'
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error(ErrorCode::ParseError, "unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::vector<ProblemInstance> parse_esci(std::string_view csv, const EsciLoadOptions& options) {
  auto rows = parse_csv(csv);
  if (rows.empty()) return {};
  const auto& header = rows.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[lower(trimmed(header[i]))] = i;
  for (const char* required : {"query", "product_title", "esci_label"}) {
    if (!col.count(required)) throw Error(ErrorCode::ParseError, std::string("ESCI header lacks '") + required + "'");
  }
  std::optional<std::size_t> id_col;
  if (col.count("id")) id_col = col["id"];
  else if (col.count("example_id")) id_col = col["example_id"];

  std::array<std::vector<ProblemInstance>, 4> by_label;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = "record " + std::to_string(r + 1);
    auto field = [&](std::size_t c) -> const std::string& {
      if (c >= row.size()) throw Error(ErrorCode::ParseError, where + ": too few fields");
      return row[c];
    };
    ProblemInstance p;
    p.kind = DatasetKind::Esci;
    EsciItem item;
    item.query = field(col["query"]);
    item.product_title = field(col["product_title"]);
    try {
      item.label = parse_esci_label(field(col["esci_label"]));
    } catch (const Error& e) {
      throw Error(ErrorCode::BadLabel, where + ": " + e.what());
    }
    if (options.max_non_ascii_ratio && non_ascii_ratio(item.query, item.product_title) > *options.max_non_ascii_ratio) {
      continue;
    }
    p.id = id_col ? field(*id_col) : "esci-" + std::to_string(r - 1);
    p.esci = std::move(item);
    auto& bucket = by_label[static_cast<int>(p.esci->label)];
    if (!options.per_label || bucket.size() < *options.per_label) {
      if (options.per_label) {
        bucket.push_back(std::move(p));
      } else {
        by_label[0].push_back(std::move(p));  // file order when not grouping
      }
    }
  }
  std::vector<ProblemInstance> out;
  for (auto& bucket : by_label) {
    for (auto& p : bucket) out.push_back(std::move(p));
  }
  return out;
}

std::vector<ProblemInstance> load_esci(const std::filesystem::path& path, const EsciLoadOptions& options) {
  return parse_esci(read_file(path), options);
}

std::string joined_choices(const CoseItem& item, std::string_view joiner) {
  std::string out;
  for (std::size_t i = 0; i < item.choices.size(); ++i) {
    if (i > 0) out.append(joiner);
    out.append(item.choices[i]);
  }
  return out;
}

std::string problem_string(const ProblemInstance& p, const ProblemFormat& format) {
  if (p.kind == DatasetKind::Cose) {
    const auto& c = *p.cose;
    const std::string sep = format.style == ProblemStyle::Table ? " " : ", ";
    return c.question + sep + joined_choices(c, format.choice_joiner) + "? " + c.answer;
  }
  const auto& e = *p.esci;
  return "When searching for " + e.query + ", " + e.product_title + " is " + std::string(esci_long_form(e.label));
}

json to_json(const ProblemInstance& p) {
  json j = {{"id", p.id}, {"kind", to_string(p.kind)}};
  if (p.cose) {
    json c = {{"question", p.cose->question}, {"choices", p.cose->choices}, {"answer", p.cose->answer}};
    if (p.cose->abstractive_explanation) c["abstractive_explanation"] = *p.cose->abstractive_explanation;
    j["cose"] = std::move(c);
  }
  if (p.esci) {
    j["esci"] = {{"query", p.esci->query},
                 {"product_title", p.esci->product_title},
                 {"label", std::string(1, esci_code(p.esci->label))}};
  }
  return j;
}

ProblemInstance problem_from_json(const json& j) {
  try {
    ProblemInstance p;
    p.id = j.at("id").get<std::string>();
    p.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("cose")) {
      const auto& c = j.at("cose");
      CoseItem item;
      item.question = c.at("question").get<std::string>();
      item.choices = c.at("choices").get<std::vector<std::string>>();
      item.answer = c.at("answer").get<std::string>();
      if (c.contains("abstractive_explanation")) item.abstractive_explanation = c.at("abstractive_explanation").get<std::string>();
      p.cose = std::move(item);
    }
    if (j.contains("esci")) {
      const auto& e = j.at("esci");
      p.esci = EsciItem{e.at("query").get<std::string>(), e.at("product_title").get<std::string>(),
                        parse_esci_label(e.at("label").get<std::string>())};
    }
    validate(p);
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("problem record: ") + e.what());
  }
}

}  // namespace nle::datasets
