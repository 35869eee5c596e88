#include "nle/selection.hpp"

#include <future>
#include <map>
#include <numeric>

#include "nle/backends.hpp"
#include "nle/error.hpp"
#include "nle/stats.hpp"

namespace nle::selection {

using nlohmann::json;

Objective parse_objective(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::ConfigError, "objective must look like metric:min|max, got '" + std::string(spec) + "'");
  }
  Objective o;
  o.metric = metric_from_key(spec.substr(0, colon));
  const auto dir = spec.substr(colon + 1);
  if (dir == "min" || dir == "minimize") {
    o.direction = Direction::Minimize;
  } else if (dir == "max" || dir == "maximize") {
    o.direction = Direction::Maximize;
  } else {
    throw Error(ErrorCode::ConfigError, "objective direction must be min or max, got '" + std::string(dir) + "'");
  }
  return o;
}

std::string to_string(const Objective& o) {
  return std::string(metric_key(o.metric)) + (o.direction == Direction::Minimize ? ":min" : ":max");
}

SelectionResult choose(std::string problem_id, std::vector<std::pair<std::string, std::optional<double>>> values,
                       const Objective& objective) {
  if (values.empty()) throw Error(ErrorCode::NoCandidates, "no candidates for problem '" + problem_id + "'");
  SelectionResult r;
  r.problem_id = std::move(problem_id);
  r.objective = objective;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& v = values[i].second;
    if (!v) {
      r.excluded.push_back(values[i].first);
      continue;
    }
    if (!best) {
      best = i;
      continue;
    }
    const double cur = *values[*best].second;
    const bool better = objective.direction == Direction::Minimize ? *v < cur : *v > cur;
    if (better) best = i;
  }
  if (!best) {
    throw Error(ErrorCode::AllMetricsUndefined,
                std::string(metric_key(objective.metric)) + " undefined for every candidate of '" + r.problem_id + "'");
  }
  r.chosen_template_id = values[*best].first;
  r.metric_by_template = std::move(values);
  return r;
}

SelectionResult select_prompt(const datasets::ProblemInstance& problem, std::span<const prompts::PromptTemplate> candidates,
                              const Objective& objective, backends::CompletionBackend& backend,
                              const generation::GenerationParams& params, const MetricContext& ctx) {
  if (candidates.empty()) throw Error(ErrorCode::NoCandidates, "no candidate prompts");
  for (const auto& c : candidates) {
    if (c.dataset_kind() != problem.kind) {
      throw Error(ErrorCode::KindMismatch, "template '" + c.id() + "' does not match problem '" + problem.id + "'");
    }
  }

  std::vector<std::future<std::optional<double>>> jobs;
  jobs.reserve(candidates.size());
  for (const auto& c : candidates) {
    jobs.push_back(std::async(std::launch::async, [&, tmpl = &c]() -> std::optional<double> {
      prompts::RenderedPrompt prompt;
      try {
        prompt = prompts::compose_prompt(*tmpl, problem, ctx.parts, ctx.compose);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::MissingPart) return std::nullopt;
        throw;
      }
      const auto record = generation::generate(prompt, backend, params, ctx.generate);
      return scoring::score_metric(objective.metric, record, problem, ctx.scoring, ctx.corpus);
    }));
  }

  std::vector<std::pair<std::string, std::optional<double>>> values;
  std::exception_ptr failure;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    try {
      values.emplace_back(candidates[i].id(), jobs[i].get());
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return choose(problem.id, std::move(values), objective);
}

RelativeChange relative_change(std::span<const MetricVector> baseline, std::span<const MetricVector> selected,
                               double alpha, std::optional<std::size_t> family_size) {
  if (baseline.size() != selected.size()) {
    throw Error(ErrorCode::LengthMismatch, "baseline and selected differ in length");
  }
  std::map<std::string, const MetricVector*> by_problem;
  for (const auto& s : selected) by_problem[s.problem_id] = &s;

  RelativeChange out;
  std::vector<std::size_t> tested;
  std::vector<stats::TestResult> results(kMetricCount);
  for (Metric m : kAllMetrics) {
    auto& cell = out[static_cast<std::size_t>(m)];
    std::vector<double> b, s;
    for (const auto& base : baseline) {
      auto it = by_problem.find(base.problem_id);
      if (it == by_problem.end()) throw Error(ErrorCode::PairingMismatch, "selected lacks problem '" + base.problem_id + "'");
      if (base[m] && (*it->second)[m]) {
        b.push_back(*base[m]);
        s.push_back(*(*it->second)[m]);
      }
    }
    cell.n = b.size();
    if (b.size() < 2) {
      cell.note = "no pairs";
      continue;
    }
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
    const double mean_s = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    if (mean_b == 0.0) {
      cell.note = "zero baseline mean";
    } else {
      cell.portion_change = (mean_s - mean_b) / mean_b;
    }
    results[static_cast<std::size_t>(m)] = stats::paired_t_test(s, b, alpha, 1);
    cell.p_value = results[static_cast<std::size_t>(m)].p_two_tailed;
    tested.push_back(static_cast<std::size_t>(m));
  }
  const std::size_t family = family_size.value_or(tested.size());
  for (std::size_t idx : tested) {
    stats::apply_correction(results[idx], alpha, family);
    out[idx].significant = results[idx].significant_after_correction;
    out[idx].stars = results[idx].stars;
  }
  return out;
}

json to_json(const SelectionResult& r) {
  json values = json::array();
  for (const auto& [id, v] : r.metric_by_template) {
    values.push_back({{"template_id", id}, {"value", v ? json(*v) : json(nullptr)}});
  }
  return {{"problem_id", r.problem_id},
          {"chosen_template_id", r.chosen_template_id},
          {"objective", to_string(r.objective)},
          {"proxy", r.objective.is_proxy()},
          {"metric_by_template", values},
          {"excluded", r.excluded}};
}

SelectionResult selection_from_json(const json& j) {
  try {
    SelectionResult r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.chosen_template_id = j.at("chosen_template_id").get<std::string>();
    r.objective = parse_objective(j.at("objective").get<std::string>());
    for (const auto& v : j.at("metric_by_template")) {
      std::optional<double> value;
      if (!v.at("value").is_null()) value = v.at("value").get<double>();
      r.metric_by_template.emplace_back(v.at("template_id").get<std::string>(), value);
    }
    r.excluded = j.at("excluded").get<std::vector<std::string>>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("selection row: ") + e.what());
  }
}

}  // namespace nle::selection
