#include "nle/generation.hpp"

#include "nle/backends.hpp"
#include "nle/error.hpp"

namespace nle::generation {

using nlohmann::json;

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string replace_all(std::string_view s, std::string_view from, std::string_view to) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = s.find(from, pos);
    if (hit == std::string_view::npos) break;
    out.append(s.substr(pos, hit - pos));
    out.append(to);
    pos = hit + from.size();
  }
  out.append(s.substr(pos));
  return out;
}

}  // namespace

void GenerationParams::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorCode::BadInput, "temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::BadInput, "top_p must be in (0,1]");
  if (max_tokens <= 0) throw Error(ErrorCode::BadInput, "max_tokens must be positive");
}

std::string trim_whitespace(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::string post_process(std::string_view raw) {
  const std::string normalized = replace_all(raw, "\r\n\r\n", "\n\n");
  std::string_view view = normalized;
  if (auto cut = view.find("\n\n"); cut != std::string_view::npos) view = view.substr(0, cut);
  return trim_whitespace(view);
}

ExplanationRecord generate(const prompts::RenderedPrompt& prompt, backends::CompletionBackend& backend,
                           const GenerationParams& params, const GenerateOptions& options) {
  params.validate();
  ExplanationRecord rec;
  rec.problem_id = prompt.problem_id;
  rec.template_id = prompt.template_id;
  rec.prompt = prompt.text;
  rec.params = params;
  rec.backend_id = backend.id();
  rec.postprocessed = options.postprocess;

  const backends::CompletionRequest req{prompt.text, params.temperature, params.top_p, params.max_tokens, params.seed};
  for (int attempt = 0;; ++attempt) {
    try {
      rec.raw_text = backend.complete(req).text;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::BackendError,
                  "problem '" + prompt.problem_id + "' template '" + prompt.template_id + "': " + e.what());
    }
    rec.processed_text = options.postprocess ? post_process(rec.raw_text) : trim_whitespace(rec.raw_text);
    rec.empty_generation = trim_whitespace(rec.raw_text).empty();
    if (!rec.empty_generation || attempt >= options.retries) break;
  }
  return rec;
}

json to_json(const GenerationParams& p) {
  json j = {{"temperature", p.temperature}, {"top_p", p.top_p}, {"max_tokens", p.max_tokens}};
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
  return j;
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.temperature = j.value("temperature", p.temperature);
  p.top_p = j.value("top_p", p.top_p);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  if (j.contains("seed") && !j.at("seed").is_null()) p.seed = j.at("seed").get<std::int64_t>();
  return p;
}

json to_json(const ExplanationRecord& r) {
  json j = {{"problem_id", r.problem_id},
            {"template_id", r.template_id},
            {"prompt", r.prompt},
            {"raw_text", r.raw_text},
            {"processed_text", r.processed_text},
            {"params", to_json(r.params)},
            {"backend_id", r.backend_id},
            {"postprocessed", r.postprocessed},
            {"empty_generation", r.empty_generation}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
  return j;
}

ExplanationRecord record_from_json(const json& j) {
  try {
    ExplanationRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.prompt = j.at("prompt").get<std::string>();
    r.raw_text = j.at("raw_text").get<std::string>();
    r.processed_text = j.at("processed_text").get<std::string>();
    r.params = params_from_json(j.at("params"));
    r.backend_id = j.at("backend_id").get<std::string>();
    r.postprocessed = j.at("postprocessed").get<bool>();
    r.empty_generation = j.at("empty_generation").get<bool>();
    if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("explanation record: ") + e.what());
  }
}

}  // namespace nle::generation
