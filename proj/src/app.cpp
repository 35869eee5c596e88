#include "nle/app.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "nle/error.hpp"
#include "nle/hashing.hpp"
#include "nle/kernels.hpp"
#include "nle/scoring.hpp"
#include "nle/text_metrics.hpp"
#include "nle/worker_pool.hpp"

namespace nle::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json interpolate_all(const json& j) {
  if (j.is_string()) return interpolate_env(j.get<std::string>());
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(interpolate_all(v));
    return out;
  }
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = interpolate_all(v);
    return out;
  }
  return j;
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw Error(ErrorCode::ConfigError, std::string(where) + ": unknown key '" + k + "'");
    }
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : (base / p).lexically_normal(); }

backends::BackendDescriptor parse_backend(const json& j, backends::Kind kind, std::string_view name) {
  reject_unknown(j, {"id", "url", "timeout_ms", "max_concurrency", "auth_token", "strict_no_echo"},
                 "backends." + std::string(name));
  backends::BackendDescriptor d;
  d.kind = kind;
  d.endpoint_url = j.at("url").get<std::string>();
  d.id = j.value("id", d.endpoint_url);
  d.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(d.timeout.count())));
  d.max_concurrency = j.value("max_concurrency", d.max_concurrency);
  d.auth_token = j.value("auth_token", std::string());
  d.strict_no_echo = j.value("strict_no_echo", false);
  if (d.max_concurrency < 1) throw Error(ErrorCode::ConfigError, "backends." + std::string(name) + ".max_concurrency must be >= 1");
  return d;
}

json backend_json(const backends::BackendDescriptor& d, bool with_secrets) {
  json j = {{"id", d.id},
            {"url", d.endpoint_url},
            {"timeout_ms", d.timeout.count()},
            {"max_concurrency", d.max_concurrency},
            {"strict_no_echo", d.strict_no_echo}};
  if (with_secrets && !d.auth_token.empty()) j["auth_token"] = "***";
  return j;
}

json situated_json(const prompts::SituatedParts& p) {
  json j = json::object();
  if (p.hint) j["hint"] = *p.hint;
  if (p.audience_details) j["audience_details"] = *p.audience_details;
  if (p.problem_details) j["problem_details"] = *p.problem_details;
  return j;
}

json opt(const auto& v) { return v ? json(*v) : json(nullptr); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + p.string());
  out << content;
  if (!out) throw Error(ErrorCode::ConfigError, "write failed for " + p.string());
}

template <typename T>
std::string jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> rows;
  if (!fs::exists(p)) return rows;
  std::istringstream in(read_file(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

json to_json(const RelativeChangeTable& t) {
  json cells = json::object();
  for (Metric m : kAllMetrics) {
    const auto& c = t.cells[static_cast<std::size_t>(m)];
    cells[std::string(metric_key(m))] = {{"portion_change", opt(c.portion_change)},
                                         {"p_value", opt(c.p_value)},
                                         {"significant", c.significant},
                                         {"stars", c.stars},
                                         {"n", c.n},
                                         {"note", c.note}};
  }
  return {{"objective", selection::to_string(t.objective)},
          {"proxy", t.objective.is_proxy()},
          {"baseline_template", t.baseline_template},
          {"family_size", t.family_size},
          {"alpha", t.alpha},
          {"cells", cells}};
}

RelativeChangeTable relative_change_from_json(const json& j) {
  RelativeChangeTable t;
  t.objective = selection::parse_objective(j.at("objective").get<std::string>());
  t.baseline_template = j.at("baseline_template").get<std::string>();
  t.family_size = j.at("family_size").get<std::size_t>();
  t.alpha = j.at("alpha").get<double>();
  for (Metric m : kAllMetrics) {
    const auto& c = j.at("cells").at(std::string(metric_key(m)));
    auto& cell = t.cells[static_cast<std::size_t>(m)];
    if (!c.at("portion_change").is_null()) cell.portion_change = c.at("portion_change").get<double>();
    if (!c.at("p_value").is_null()) cell.p_value = c.at("p_value").get<double>();
    cell.significant = c.at("significant").get<bool>();
    cell.stars = c.at("stars").get<int>();
    cell.n = c.at("n").get<std::size_t>();
    cell.note = c.at("note").get<std::string>();
  }
  return t;
}

std::vector<datasets::ProblemInstance> load_problems(const DatasetConfig& d) {
  auto problems = d.kind == datasets::DatasetKind::Cose ? datasets::load_cose(d.path, d.take_first)
                                                        : datasets::load_esci(d.path, d.esci);
  if (d.kind == datasets::DatasetKind::Esci && d.take_first && problems.size() > *d.take_first) {
    problems.resize(*d.take_first);
  }
  std::set<std::string> ids;
  for (const auto& p : problems) {
    if (!ids.insert(p.id).second) throw Error(ErrorCode::DuplicateId, "duplicate problem id '" + p.id + "'");
  }
  return problems;
}

bool parts_available(const prompts::PromptTemplate& t, const prompts::SituatedParts& parts) {
  auto blank = [](const std::optional<std::string>& s) {
    return !s || generation::trim_whitespace(*s).empty();
  };
  if (t.uses(prompts::Slot::Hint) && blank(parts.hint)) return false;
  if (t.uses(prompts::Slot::Audience) && blank(parts.audience_details)) return false;
  if (t.uses(prompts::Slot::ProblemDetails) && blank(parts.problem_details)) return false;
  return true;
}

std::vector<prompts::PromptTemplate> select_templates(const RunConfig& c) {
  const auto catalog = prompts::load_catalog(c.catalog);
  std::vector<prompts::PromptTemplate> out;
  if (c.templates.empty()) {
    for (const auto& t : catalog) {
      if (t.dataset_kind() == c.dataset.kind) out.push_back(t);
    }
  } else {
    std::set<std::string> wanted(c.templates.begin(), c.templates.end());
    for (const auto& id : c.templates) {
      const auto* t = prompts::find_template(catalog, id);
      if (t == nullptr) throw Error(ErrorCode::ConfigError, "template '" + id + "' not in catalog");
      if (t->dataset_kind() != c.dataset.kind) {
        throw Error(ErrorCode::ConfigError, "template '" + id + "' is for a different dataset kind");
      }
    }
    for (const auto& t : catalog) {
      if (wanted.count(t.id())) out.push_back(t);
    }
  }
  std::vector<prompts::PromptTemplate> usable;
  for (auto& t : out) {
    if (parts_available(t, c.situated_parts)) {
      usable.push_back(std::move(t));
    } else {
      std::cerr << "warning: skipping template '" << t.id() << "': situated part not configured\n";
    }
  }
  if (usable.empty()) throw Error(ErrorCode::ConfigError, "no usable templates for this dataset");
  return usable;
}

std::vector<std::string> template_order(const RunArtifact& a) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& r : a.records) {
    if (seen.insert(r.template_id).second) order.push_back(r.template_id);
  }
  for (const auto& m : a.metrics) {
    if (seen.insert(m.template_id).second) order.push_back(m.template_id);
  }
  return order;
}

std::vector<MetricVector> vectors_for(const RunArtifact& a, const std::string& template_id) {
  std::vector<MetricVector> out;
  for (const auto& m : a.metrics) {
    if (m.template_id == template_id) out.push_back(m);
  }
  return out;
}

std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  const std::size_t w = display_width(s);
  if (w < width) out.append(width - w, ' ');
  return out;
}

std::string align(const std::vector<std::vector<std::string>>& table) {
  std::vector<std::size_t> widths;
  for (const auto& row : table) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
  }
  std::string out;
  for (const auto& row : table) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      line += i + 1 < row.size() ? pad(row[i], widths[i] + 2) : row[i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string fixed(double v, int digits, bool sign = false) {
  std::ostringstream ss;
  if (sign) ss << std::showpos;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::string sci(double v) {
  std::ostringstream ss;
  ss << std::setprecision(3) << v;
  return ss.str();
}

std::string legend(std::size_t m, double alpha) {
  return "Bonferroni m = " + std::to_string(m) + ", alpha = " + sci(alpha) +
         "; * p<0.05, ** p<0.01, *** p<0.001 (each threshold divided by m)";
}

ComparisonReport finish(ComparisonReport r, double alpha, std::optional<std::size_t> family_size) {
  std::size_t tests = 0;
  for (const auto& row : r.rows) tests += stats::tests_in(row);
  r.alpha = alpha;
  r.family_size = family_size.value_or(std::max<std::size_t>(tests, 1));
  for (auto& row : r.rows) {
    for (auto& cell : row) {
      if (cell) stats::apply_correction(*cell, alpha, r.family_size);
    }
  }
  return r;
}

}  // namespace

std::string interpolate_env(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
      const auto close = s.find('}', i + 2);
      if (close == std::string_view::npos) throw Error(ErrorCode::ConfigError, "unterminated ${ in '" + std::string(s) + "'");
      const std::string name(s.substr(i + 2, close - i - 2));
      const char* value = std::getenv(name.c_str());
      if (value == nullptr) throw Error(ErrorCode::ConfigError, "environment variable " + name + " is not set");
      out += value;
      i = close + 1;
    } else {
      out += s[i++];
    }
  }
  return out;
}

RunConfig parse_config(const json& raw, const fs::path& base_dir) {
  try {
    const json j = interpolate_all(raw);
    reject_unknown(j,
                   {"dataset", "catalog", "templates", "backends", "generation", "lexicon", "objective",
                    "baseline_template", "alpha", "family_size", "cache_dir", "workers", "output_dir",
                    "row_failure_budget", "situated_parts"},
                   "config");
    RunConfig c;
    const auto& d = j.at("dataset");
    reject_unknown(d, {"path", "kind", "take_first", "per_label", "max_non_ascii_ratio", "problem_style", "choice_joiner"},
                   "dataset");
    c.dataset.path = resolve(d.at("path").get<std::string>(), base_dir);
    c.dataset.kind = datasets::dataset_kind_from_string(d.at("kind").get<std::string>());
    if (d.contains("take_first")) c.dataset.take_first = d.at("take_first").get<std::size_t>();
    if (d.contains("per_label")) c.dataset.esci.per_label = d.at("per_label").get<std::size_t>();
    if (d.contains("max_non_ascii_ratio")) c.dataset.esci.max_non_ascii_ratio = d.at("max_non_ascii_ratio").get<double>();
    const std::string style = d.value("problem_style", "table");
    if (style == "table") {
      c.dataset.format.style = datasets::ProblemStyle::Table;
    } else if (style == "appendix") {
      c.dataset.format.style = datasets::ProblemStyle::Appendix;
    } else {
      throw Error(ErrorCode::ConfigError, "dataset.problem_style must be table or appendix");
    }
    c.dataset.format.choice_joiner = d.value("choice_joiner", c.dataset.format.choice_joiner);

    c.catalog = resolve(j.at("catalog").get<std::string>(), base_dir);
    c.templates = j.value("templates", std::vector<std::string>{});

    if (j.contains("backends")) {
      const auto& b = j.at("backends");
      reject_unknown(b, {"completion", "mask_score", "acceptability"}, "backends");
      if (b.contains("completion")) c.completion = parse_backend(b.at("completion"), backends::Kind::Completion, "completion");
      if (b.contains("mask_score")) c.mask_score = parse_backend(b.at("mask_score"), backends::Kind::MaskScore, "mask_score");
      if (b.contains("acceptability")) {
        c.acceptability = parse_backend(b.at("acceptability"), backends::Kind::Acceptability, "acceptability");
      }
    }

    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      reject_unknown(g, {"temperature", "top_p", "max_tokens", "seed", "retries", "postprocess"}, "generation");
      c.generation = generation::params_from_json(g);
      c.generate.retries = g.value("retries", 0);
      c.generate.postprocess = g.value("postprocess", true);
    }
    if (j.contains("lexicon")) c.lexicon = resolve(j.at("lexicon").get<std::string>(), base_dir);
    if (j.contains("objective")) c.objective = selection::parse_objective(j.at("objective").get<std::string>());
    if (j.contains("baseline_template")) c.baseline_template = j.at("baseline_template").get<std::string>();
    c.alpha = j.value("alpha", c.alpha);
    if (j.contains("family_size") && !j.at("family_size").is_null()) c.family_size = j.at("family_size").get<std::size_t>();
    if (j.contains("cache_dir")) c.cache_dir = resolve(j.at("cache_dir").get<std::string>(), base_dir);
    c.workers = j.value("workers", c.workers);
    if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>(), base_dir);
    c.row_failure_budget = j.value("row_failure_budget", c.row_failure_budget);
    if (j.contains("situated_parts")) {
      const auto& s = j.at("situated_parts");
      reject_unknown(s, {"hint", "audience_details", "problem_details"}, "situated_parts");
      if (s.contains("hint")) c.situated_parts.hint = s.at("hint").get<std::string>();
      if (s.contains("audience_details")) c.situated_parts.audience_details = s.at("audience_details").get<std::string>();
      if (s.contains("problem_details")) c.situated_parts.problem_details = s.at("problem_details").get<std::string>();
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

void validate(const RunConfig& c) {
  auto must_exist = [](const fs::path& p, std::string_view what) {
    if (!fs::exists(p)) throw Error(ErrorCode::ConfigError, std::string(what) + " not found: " + p.string());
  };
  must_exist(c.dataset.path, "dataset");
  must_exist(c.catalog, "catalog");
  if (c.lexicon) must_exist(*c.lexicon, "lexicon");
  if (c.workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw Error(ErrorCode::ConfigError, "alpha must be in (0,1)");
  if (c.family_size && *c.family_size == 0) throw Error(ErrorCode::ConfigError, "family_size must be >= 1");
  try {
    c.generation.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

json to_json(const RunConfig& c) {
  json j = semantic_config(c);
  j["dataset"]["path"] = c.dataset.path.string();
  j["catalog"] = c.catalog.string();
  j["lexicon"] = c.lexicon ? json(c.lexicon->string()) : json(nullptr);
  j["cache_dir"] = c.cache_dir ? json(c.cache_dir->string()) : json(nullptr);
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir.string();
  for (const auto& [name, d] : {std::pair{"completion", &c.completion}, std::pair{"mask_score", &c.mask_score},
                                std::pair{"acceptability", &c.acceptability}}) {
    if (*d) j["backends"][name] = backend_json(**d, true);
  }
  return j;
}

json semantic_config(const RunConfig& c) {
  json j;
  j["dataset"] = {{"kind", datasets::to_string(c.dataset.kind)},
                  {"take_first", opt(c.dataset.take_first)},
                  {"per_label", opt(c.dataset.esci.per_label)},
                  {"max_non_ascii_ratio", opt(c.dataset.esci.max_non_ascii_ratio)},
                  {"problem_style", c.dataset.format.style == datasets::ProblemStyle::Table ? "table" : "appendix"},
                  {"choice_joiner", c.dataset.format.choice_joiner}};
  j["templates"] = c.templates;
  j["backends"] = json::object();
  for (const auto& [name, d] : {std::pair{"completion", &c.completion}, std::pair{"mask_score", &c.mask_score},
                                std::pair{"acceptability", &c.acceptability}}) {
    if (*d) j["backends"][name] = {{"id", (*d)->id}, {"url", (*d)->endpoint_url}, {"strict_no_echo", (*d)->strict_no_echo}};
  }
  j["generation"] = generation::to_json(c.generation);
  j["generation"]["retries"] = c.generate.retries;
  j["generation"]["postprocess"] = c.generate.postprocess;
  j["lexicon"] = c.lexicon ? json(c.lexicon->filename().string()) : json(nullptr);
  j["objective"] = c.objective ? json(selection::to_string(*c.objective)) : json(nullptr);
  j["baseline_template"] = opt(c.baseline_template);
  j["alpha"] = c.alpha;
  j["family_size"] = opt(c.family_size);
  j["row_failure_budget"] = c.row_failure_budget;
  j["situated_parts"] = situated_json(c.situated_parts);
  return j;
}

std::string compute_digest(const RunArtifact& a) {
  Sha256 h;
  auto section = [&](std::string_view name) {
    h.update(name);
    h.update("\n");
  };
  section("config");
  h.update(a.semantic_config.dump());
  h.update("\n");
  section("problems");
  for (const auto& p : a.problems) h.update(datasets::to_json(p).dump() + "\n");
  section("records");
  for (const auto& r : a.records) h.update(generation::to_json(r).dump() + "\n");
  section("metrics");
  for (const auto& m : a.metrics) h.update(nle::to_json(m).dump() + "\n");
  section("selections");
  for (const auto& s : a.selections) h.update(selection::to_json(s).dump() + "\n");
  section("relative_change");
  if (a.relative_change) h.update(to_json(*a.relative_change).dump() + "\n");
  return h.hex_digest();
}

void write_artifact(RunArtifact& a, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "cannot create " + dir.string() + ": " + ec.message());
  a.digest = compute_digest(a);
  write_file(dir / "config.json", a.config.dump(2) + "\n");
  std::string problems;
  for (const auto& p : a.problems) problems += datasets::to_json(p).dump() + "\n";
  write_file(dir / "problems.jsonl", problems);
  write_file(dir / "records.jsonl", jsonl(a.records));
  std::string metrics;
  for (const auto& m : a.metrics) metrics += nle::to_json(m).dump() + "\n";
  write_file(dir / "metrics.jsonl", metrics);
  write_file(dir / "selections.jsonl", jsonl(a.selections));
  if (a.relative_change) {
    write_file(dir / "relative_change.json", to_json(*a.relative_change).dump(2) + "\n");
    write_file(dir / "relative_change.tsv", render_tsv(*a.relative_change));
  } else {
    fs::remove(dir / "relative_change.json", ec);
    fs::remove(dir / "relative_change.tsv", ec);
  }
  const json manifest = {{"schema_version", kSchemaVersion},
                         {"tool_version", a.tool_version},
                         {"digest", a.digest},
                         {"semantic_config", a.semantic_config},
                         {"counts",
                          {{"problems", a.problems.size()},
                           {"records", a.records.size()},
                           {"metrics", a.metrics.size()},
                           {"selections", a.selections.size()}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

RunArtifact read_artifact(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
  const std::string version = manifest.value("schema_version", "");
  if (version.substr(0, version.find('.')) != std::string(kSchemaVersion.substr(0, kSchemaVersion.find('.')))) {
    throw Error(ErrorCode::SchemaVersion, "unsupported artifact schema version '" + version + "'");
  }
  RunArtifact a;
  a.tool_version = manifest.value("tool_version", "");
  a.semantic_config = manifest.value("semantic_config", json::object());
  try {
    a.config = json::parse(read_file(dir / "config.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, (dir / "config.json").string() + ": " + e.what());
  }
  for (const auto& row : read_jsonl(dir / "problems.jsonl")) a.problems.push_back(datasets::problem_from_json(row));
  for (const auto& row : read_jsonl(dir / "records.jsonl")) a.records.push_back(generation::record_from_json(row));
  for (const auto& row : read_jsonl(dir / "metrics.jsonl")) a.metrics.push_back(metric_vector_from_json(row));
  for (const auto& row : read_jsonl(dir / "selections.jsonl")) a.selections.push_back(selection::selection_from_json(row));
  if (fs::exists(dir / "relative_change.json")) {
    try {
      a.relative_change = relative_change_from_json(json::parse(read_file(dir / "relative_change.json")));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, (dir / "relative_change.json").string() + ": " + e.what());
    }
  }
  a.digest = compute_digest(a);
  if (manifest.value("digest", "") != a.digest) {
    std::cerr << "warning: " << dir.string() << ": rows do not match the manifest digest\n";
  }
  return a;
}

RunArtifact cmd_generate(const RunConfig& c, CommandStats* stats) {
  validate(c);
  if (!c.completion) throw Error(ErrorCode::ConfigError, "generate needs backends.completion");
  RunArtifact a;
  a.config = to_json(c);
  a.semantic_config = semantic_config(c);
  a.problems = load_problems(c.dataset);
  const auto templates = select_templates(c);
  auto backend = backends::make_completion(*c.completion, c.cache_dir);

  prompts::ComposeOptions compose;
  compose.format = c.dataset.format;
  const std::size_t n = a.problems.size() * templates.size();
  a.records.resize(n);
  std::vector<char> failed(n, 0);
  parallel_for(n, c.workers, [&](std::size_t i) {
    const auto& problem = a.problems[i / templates.size()];
    const auto& tmpl = templates[i % templates.size()];
    const auto prompt = prompts::compose_prompt(tmpl, problem, c.situated_parts, compose);
    try {
      a.records[i] = generation::generate(prompt, *backend, c.generation, c.generate);
    } catch (const Error& e) {
      if (!is_backend_failure(e.code())) throw;
      auto& r = a.records[i];
      r.problem_id = prompt.problem_id;
      r.template_id = prompt.template_id;
      r.prompt = prompt.text;
      r.params = c.generation;
      r.backend_id = backend->id();
      r.postprocessed = c.generate.postprocess;
      r.error = e.what();
      failed[i] = 1;
    }
  });
  const auto n_failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  for (std::size_t i = 0; i < n; ++i) {
    if (failed[i]) std::cerr << "row " << i << ": " << *a.records[i].error << "\n";
  }
  if (stats) *stats = {n, n_failed};
  return a;
}

void cmd_score(RunArtifact& a, const RunConfig& c, CommandStats* stats) {
  if (c.workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");
  std::map<std::string, const datasets::ProblemInstance*> problems;
  for (const auto& p : a.problems) problems[p.id] = &p;

  std::optional<text::ConcretenessLexicon> lexicon;
  if (c.lexicon) lexicon = text::ConcretenessLexicon::load(*c.lexicon);
  std::shared_ptr<backends::MaskScoreBackend> mask;
  std::shared_ptr<backends::AcceptabilityBackend> acc;
  if (c.mask_score) mask = backends::make_mask_scorer(*c.mask_score, c.cache_dir);
  if (c.acceptability) acc = backends::make_acceptability(*c.acceptability, c.cache_dir);

  scoring::ScoringContext ctx;
  ctx.lexicon = lexicon ? &*lexicon : nullptr;
  ctx.mask_scorer = mask.get();
  ctx.acceptability = acc.get();
  ctx.format = c.dataset.format;
  scoring::ScoringContext lexical_ctx = ctx;
  lexical_ctx.mask_scorer = nullptr;
  lexical_ctx.acceptability = nullptr;

  const std::size_t n = a.records.size();
  std::vector<MetricVector> vectors(n);
  std::vector<std::string> errors(n);
  parallel_for(n, c.workers, [&](std::size_t i) {
    const auto& rec = a.records[i];
    auto it = problems.find(rec.problem_id);
    if (it == problems.end()) throw Error(ErrorCode::PairingMismatch, "record for unknown problem '" + rec.problem_id + "'");
    try {
      vectors[i] = scoring::score_record(rec, *it->second, ctx);
    } catch (const Error& e) {
      if (!is_backend_failure(e.code())) throw;
      errors[i] = e.what();
      vectors[i] = scoring::score_record(rec, *it->second, lexical_ctx);
    }
  });

  std::map<std::string, std::vector<std::size_t>> by_template;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = a.records[i];
    if (!rec.error && !text::tokenize(rec.processed_text).empty()) by_template[rec.template_id].push_back(i);
  }
  for (const auto& [id, idx] : by_template) {
    if (idx.size() < 2) continue;
    std::vector<text::TokenSequence> corpus;
    corpus.reserve(idx.size());
    for (std::size_t i : idx) corpus.push_back(text::tokenize(a.records[i].processed_text));
    const auto sb = kernels::self_bleu_parallel(corpus);
    for (std::size_t k = 0; k < idx.size(); ++k) vectors[idx[k]][Metric::SelfBleu] = sb.per_item[k];
  }

  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      ++n_failed;
      std::cerr << "row " << i << ": " << errors[i] << "\n";
    }
  }
  a.metrics = std::move(vectors);
  a.selections.clear();
  a.relative_change.reset();
  if (stats) *stats = {n, n_failed};
}

void cmd_select(RunArtifact& a, const selection::Objective& objective, const std::string& baseline_template,
                double alpha, std::optional<std::size_t> family_size) {
  if (a.metrics.empty()) throw Error(ErrorCode::ConfigError, "artifact has no metrics; run score first");
  const auto order = template_order(a);
  if (std::find(order.begin(), order.end(), baseline_template) == order.end()) {
    throw Error(ErrorCode::ConfigError, "baseline template '" + baseline_template + "' not in artifact");
  }
  std::map<std::pair<std::string, std::string>, const MetricVector*> index;
  for (const auto& m : a.metrics) index[{m.problem_id, m.template_id}] = &m;

  a.selections.clear();
  std::vector<MetricVector> baseline, selected;
  for (const auto& p : a.problems) {
    std::vector<std::pair<std::string, std::optional<double>>> values;
    for (const auto& t : order) {
      auto it = index.find({p.id, t});
      if (it != index.end()) values.emplace_back(t, (*it->second)[objective.metric]);
    }
    if (values.empty()) continue;
    try {
      a.selections.push_back(selection::choose(p.id, std::move(values), objective));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AllMetricsUndefined) throw;
      std::cerr << "warning: " << e.what() << "\n";
      continue;
    }
    auto base = index.find({p.id, baseline_template});
    if (base == index.end()) continue;
    baseline.push_back(*base->second);
    selected.push_back(*index.at({p.id, a.selections.back().chosen_template_id}));
  }
  RelativeChangeTable t;
  t.objective = objective;
  t.baseline_template = baseline_template;
  t.alpha = alpha;
  t.cells = selection::relative_change(baseline, selected, alpha, family_size);
  std::size_t tested = 0;
  for (const auto& c : t.cells) tested += c.p_value ? 1 : 0;
  t.family_size = family_size.value_or(tested);
  a.relative_change = t;
}

ComparisonReport cmd_compare(const RunArtifact& a, const RunArtifact& b, double alpha,
                             std::optional<std::size_t> family_size) {
  ComparisonReport r;
  r.baseline_label = "first artifact";
  const auto order_b = template_order(b);
  for (const auto& t : template_order(a)) {
    if (std::find(order_b.begin(), order_b.end(), t) == order_b.end()) continue;
    const auto base = vectors_for(a, t);
    const auto var = vectors_for(b, t);
    r.row_labels.push_back(t);
    r.rows.push_back(stats::compare_prompt_runs(base, var, alpha, 1));
  }
  if (r.rows.empty()) throw Error(ErrorCode::PairingMismatch, "artifacts share no scored template");
  return finish(std::move(r), alpha, family_size);
}

ComparisonReport compare_templates(const RunArtifact& a, const std::string& baseline_template, double alpha,
                                   std::optional<std::size_t> family_size) {
  const auto order = template_order(a);
  if (std::find(order.begin(), order.end(), baseline_template) == order.end()) {
    throw Error(ErrorCode::ConfigError, "baseline template '" + baseline_template + "' not in artifact");
  }
  ComparisonReport r;
  r.baseline_label = baseline_template;
  const auto base = vectors_for(a, baseline_template);
  for (const auto& t : order) {
    if (t == baseline_template) continue;
    r.row_labels.push_back(t);
    r.rows.push_back(stats::compare_prompt_runs(base, vectors_for(a, t), alpha, 1));
  }
  return finish(std::move(r), alpha, family_size);
}

std::string render_cell(const std::optional<stats::TestResult>& cell) {
  if (!cell) return "--";
  if (cell->direction == stats::Direction::None) return "";
  std::string out = cell->direction == stats::Direction::Up ? "↑" : "↓";
  out.append(static_cast<std::size_t>(cell->stars), '*');
  return out;
}

std::string render_text(const ComparisonReport& r) {
  std::string out = "# baseline: " + r.baseline_label + "\n# " + legend(r.family_size, r.alpha) +
                    "\n# empty cell: no significant change; --: not tested\n";
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"template"};
  for (Metric m : kAllMetrics) header.emplace_back(metric_label(m));
  table.push_back(header);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    std::vector<std::string> row{r.row_labels[i]};
    for (const auto& cell : r.rows[i]) row.push_back(render_cell(cell));
    table.push_back(row);
  }
  return out + align(table);
}

std::string render_tsv(const ComparisonReport& r) {
  std::string out = "template";
  for (Metric m : kAllMetrics) out += "\t" + std::string(metric_key(m));
  out += "\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    out += r.row_labels[i];
    for (const auto& cell : r.rows[i]) out += "\t" + render_cell(cell);
    out += "\n";
  }
  return out;
}

std::string render_text(const RelativeChangeTable& t) {
  std::string out = "# objective: " + selection::to_string(t.objective) + (t.objective.is_proxy() ? " (proxy)" : "") +
                    "; baseline: " + t.baseline_template + "\n# " + legend(t.family_size, t.alpha) + "\n";
  std::vector<std::vector<std::string>> table{{"metric", "portion change", "p", "significance"}};
  for (Metric m : kAllMetrics) {
    const auto& c = t.cells[static_cast<std::size_t>(m)];
    std::vector<std::string> row{std::string(metric_label(m))};
    row.push_back(c.portion_change ? fixed(*c.portion_change, 4, true) : "--");
    row.push_back(c.p_value ? sci(*c.p_value) : "--");
    if (!c.p_value) {
      row.push_back(c.note.empty() ? "--" : c.note);
    } else if (c.significant) {
      row.push_back("significant " + std::string(static_cast<std::size_t>(c.stars), '*'));
    } else {
      row.push_back("no significant change");
    }
    table.push_back(row);
  }
  return out + align(table);
}

std::string render_tsv(const RelativeChangeTable& t) {
  std::string out = "metric\tportion_change\tp_value\tsignificant\tstars\tn\n";
  for (Metric m : kAllMetrics) {
    const auto& c = t.cells[static_cast<std::size_t>(m)];
    std::ostringstream p;
    if (c.p_value) p << std::setprecision(17) << *c.p_value;
    std::ostringstream pc;
    if (c.portion_change) pc << std::setprecision(17) << *c.portion_change;
    out += std::string(metric_key(m)) + "\t" + (c.portion_change ? pc.str() : "--") + "\t" +
           (c.p_value ? p.str() : "--") + "\t" + (c.significant ? "true" : "false") + "\t" +
           std::to_string(c.stars) + "\t" + std::to_string(c.n) + "\n";
  }
  return out;
}

std::string render_means(const RunArtifact& a) {
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> header{"template", "n"};
  for (Metric m : kAllMetrics) header.emplace_back(metric_label(m));
  table.push_back(header);
  for (const auto& t : template_order(a)) {
    const auto vs = vectors_for(a, t);
    std::vector<std::string> row{t, std::to_string(vs.size())};
    for (Metric m : kAllMetrics) {
      double sum = 0.0;
      std::size_t k = 0;
      for (const auto& v : vs) {
        if (v[m]) {
          sum += *v[m];
          ++k;
        }
      }
      row.push_back(k == 0 ? "--" : fixed(sum / static_cast<double>(k), m == Metric::Length ? 2 : 4));
    }
    table.push_back(row);
  }
  return align(table);
}

int exit_code_for(const std::exception& e) {
  const auto* err = dynamic_cast<const Error*>(&e);
  if (err == nullptr) return 3;
  switch (err->code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicateId:
    case ErrorCode::SchemaVersion:
    case ErrorCode::UnresolvedSlot:
    case ErrorCode::KindMismatch:
    case ErrorCode::MissingPart:
    case ErrorCode::PairingMismatch:
    case ErrorCode::BadAlpha:
    case ErrorCode::BadInput:
    case ErrorCode::BadLabel:
    case ErrorCode::AnswerNotInChoices:
    case ErrorCode::LengthMismatch:
      return 1;
    case ErrorCode::FailureBudget:
      return 2;
    default:
      return is_backend_failure(err->code()) ? 2 : 3;
  }
}

}  // namespace nle::app
