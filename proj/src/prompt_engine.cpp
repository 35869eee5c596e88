#include "nle/prompt_engine.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "nle/error.hpp"

namespace nle::prompts {

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string trim(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string collapse_ws(std::string_view s) {
  std::string out;
  bool prev_ws = false;
  for (char c : s) {
    if (is_ws(c)) {
      if (!prev_ws) out.push_back(' ');
      prev_ws = true;
    } else {
      out.push_back(c);
      prev_ws = false;
    }
  }
  return out;
}

constexpr Slot kAllSlots[] = {Slot::Problem, Slot::Hint, Slot::Audience, Slot::ProblemDetails, Slot::Q,
                              Slot::C,       Slot::A,    Slot::P,        Slot::Esci};

std::optional<Slot> slot_from_name(std::string_view name) {
  for (Slot s : kAllSlots) {
    if (slot_name(s) == name) return s;
  }
  return std::nullopt;
}

bool slot_allowed(Slot s, datasets::DatasetKind kind) {
  switch (s) {
    case Slot::Problem: case Slot::Hint: case Slot::Audience: case Slot::ProblemDetails: case Slot::Q:
      return true;
    case Slot::C: case Slot::A:
      return kind == datasets::DatasetKind::Cose;
    case Slot::P: case Slot::Esci:
      return kind == datasets::DatasetKind::Esci;
  }
  return false;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

const std::string& require_part(const std::optional<std::string>& part, Slot slot, const PromptTemplate& t) {
  if (!part || trim(*part).empty()) {
    throw Error(ErrorCode::MissingPart,
                "template '" + t.id() + "' needs {" + std::string(slot_name(slot)) + "} but it was not provided");
  }
  return *part;
}

}  // namespace

std::string_view to_string(SituationClass c) {
  switch (c) {
    case SituationClass::Unsituated: return "unsituated";
    case SituationClass::Abstract: return "abstract";
    case SituationClass::Detailed: return "detailed";
    case SituationClass::Basic: return "basic";
    case SituationClass::Short: return "short";
  }
  return "unsituated";
}

SituationClass situation_class_from_string(std::string_view s) {
  if (s == "unsituated") return SituationClass::Unsituated;
  if (s == "abstract") return SituationClass::Abstract;
  if (s == "detailed") return SituationClass::Detailed;
  if (s == "basic") return SituationClass::Basic;
  if (s == "short") return SituationClass::Short;
  throw Error(ErrorCode::ParseError, "unknown situation class '" + std::string(s) + "'");
}

std::string_view slot_name(Slot s) {
  switch (s) {
    case Slot::Problem: return "problem";
    case Slot::Hint: return "hint";
    case Slot::Audience: return "audience";
    case Slot::ProblemDetails: return "problem_details";
    case Slot::Q: return "q";
    case Slot::C: return "c";
    case Slot::A: return "a";
    case Slot::P: return "p";
    case Slot::Esci: return "esci";
  }
  return "";
}

bool is_situated_slot(Slot s) { return s == Slot::Hint || s == Slot::Audience || s == Slot::ProblemDetails; }

PromptTemplate PromptTemplate::create(std::string id, datasets::DatasetKind kind, SituationClass situation,
                                      std::string_view text) {
  PromptTemplate t;
  t.id_ = std::move(id);
  t.kind_ = kind;
  t.situation_ = situation;
  t.text_ = trim(collapse_ws(text));
  if (t.id_.empty()) throw Error(ErrorCode::ParseError, "template id is empty");

  std::string literal;
  const std::string_view src = t.text_;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const char c = src[i];
    if (c == '{' && i + 1 < src.size() && src[i + 1] == '{') {
      literal.push_back('{');
      ++i;
    } else if (c == '}' && i + 1 < src.size() && src[i + 1] == '}') {
      literal.push_back('}');
      ++i;
    } else if (c == '{') {
      auto close = src.find('}', i + 1);
      if (close == std::string_view::npos) throw Error(ErrorCode::ParseError, t.id_ + ": unclosed '{'");
      const auto name = src.substr(i + 1, close - i - 1);
      auto slot = slot_from_name(name);
      if (!slot || !slot_allowed(*slot, kind)) {
        throw Error(ErrorCode::UnresolvedSlot, t.id_ + ": slot {" + std::string(name) + "} is not defined for " +
                                                   std::string(datasets::to_string(kind)) + " templates");
      }
      if (situation == SituationClass::Unsituated && is_situated_slot(*slot)) {
        throw Error(ErrorCode::ParseError, t.id_ + ": unsituated template uses {" + std::string(name) + "}");
      }
      t.segments_.push_back({std::move(literal), slot});
      literal.clear();
      i = close;
    } else if (c == '}') {
      throw Error(ErrorCode::ParseError, t.id_ + ": stray '}'");
    } else {
      literal.push_back(c);
    }
  }
  if (!literal.empty()) t.segments_.push_back({std::move(literal), std::nullopt});
  return t;
}

bool PromptTemplate::uses(Slot s) const {
  return std::any_of(segments_.begin(), segments_.end(), [s](const Segment& seg) { return seg.slot == s; });
}

RenderedPrompt compose_prompt(const PromptTemplate& tmpl, const datasets::ProblemInstance& problem,
                              const SituatedParts& parts, const ComposeOptions& options) {
  if (tmpl.dataset_kind() != problem.kind) {
    throw Error(ErrorCode::KindMismatch, "template '" + tmpl.id() + "' is " +
                                             std::string(datasets::to_string(tmpl.dataset_kind())) + " but problem '" +
                                             problem.id + "' is " + std::string(datasets::to_string(problem.kind)));
  }
  auto resolve = [&](Slot slot) -> std::string {
    switch (slot) {
      case Slot::Problem: return datasets::problem_string(problem, options.format);
      case Slot::Hint: return require_part(parts.hint, slot, tmpl);
      case Slot::Audience: return require_part(parts.audience_details, slot, tmpl);
      case Slot::ProblemDetails: return require_part(parts.problem_details, slot, tmpl);
      case Slot::Q: return problem.kind == datasets::DatasetKind::Cose ? problem.cose->question : problem.esci->query;
      case Slot::C:
        if (problem.cose) return datasets::joined_choices(*problem.cose, options.format.choice_joiner);
        break;
      case Slot::A:
        if (problem.cose) return problem.cose->answer;
        break;
      case Slot::P:
        if (problem.esci) return problem.esci->product_title;
        break;
      case Slot::Esci:
        if (problem.esci) return options.esci_phrases[problem.esci->label];
        break;
    }
    throw Error(ErrorCode::UnresolvedSlot, "slot {" + std::string(slot_name(slot)) + "} has no value for problem '" +
                                               problem.id + "'");
  };

  std::string text;
  for (const auto& seg : tmpl.segments()) {
    text += seg.literal;
    if (seg.slot) text += trim(resolve(*seg.slot));
  }
  RenderedPrompt out{trim(text), tmpl.id(), problem.id};
  if (out.text.empty()) throw Error(ErrorCode::UnresolvedSlot, "template '" + tmpl.id() + "' rendered empty");
  return out;
}

bool is_situated(const PromptTemplate& tmpl) {
  switch (tmpl.situation_class()) {
    case SituationClass::Abstract:
    case SituationClass::Detailed:
    case SituationClass::Short:
      return true;
    default:
      break;
  }
  return tmpl.uses(Slot::Hint) || tmpl.uses(Slot::Audience) || tmpl.uses(Slot::ProblemDetails);
}

Catalog parse_catalog(std::string_view tsv, std::string_view source_name) {
  Catalog catalog;
  std::set<std::string> ids;
  std::istringstream in{std::string(tsv)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || line.front() == '#') continue;
    if (line.rfind("id\t", 0) == 0) continue;
    const std::string where = std::string(source_name) + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw Error(ErrorCode::ParseError, where + ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    datasets::DatasetKind kind;
    SituationClass situation;
    try {
      kind = datasets::dataset_kind_from_string(trim(fields[1]));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, where + " field dataset_kind: " + e.what());
    }
    try {
      situation = situation_class_from_string(trim(fields[2]));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, where + " field situation_class: " + e.what());
    }
    std::string id = trim(fields[0]);
    if (!ids.insert(id).second) throw Error(ErrorCode::DuplicateId, where + ": duplicate template id '" + id + "'");
    try {
      catalog.push_back(PromptTemplate::create(std::move(id), kind, situation, fields[3]));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, where + " field template: " + e.what());
    }
  }
  return catalog;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open catalog " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_catalog(buf.str(), path.string());
}

const PromptTemplate* find_template(const Catalog& catalog, std::string_view id) {
  for (const auto& t : catalog) {
    if (t.id() == id) return &t;
  }
  return nullptr;
}

}  // namespace nle::prompts
