#include "nle/metrics.hpp"

#include "nle/error.hpp"

namespace nle {

std::string_view metric_key(Metric m) {
  switch (m) {
    case Metric::Length: return "length";
    case Metric::SelfBleu: return "self_bleu";
    case Metric::Ttr: return "ttr";
    case Metric::Bleu: return "bleu";
    case Metric::Concreteness: return "concreteness";
    case Metric::CvNo: return "c_v_no";
    case Metric::CvDummy: return "c_v_dummy";
    case Metric::Acceptability: return "acceptability";
  }
  return "";
}

std::string_view metric_label(Metric m) {
  switch (m) {
    case Metric::Length: return "Length";
    case Metric::SelfBleu: return "Self-BLEU";
    case Metric::Ttr: return "TTR";
    case Metric::Bleu: return "BLEU";
    case Metric::Concreteness: return "Concreteness";
    case Metric::CvNo: return "C_v_no";
    case Metric::CvDummy: return "C_v_dummy";
    case Metric::Acceptability: return "Acceptability";
  }
  return "";
}

Metric metric_from_key(std::string_view key) {
  for (Metric m : kAllMetrics) {
    if (metric_key(m) == key) return m;
  }
  throw Error(ErrorCode::ConfigError, "unknown metric '" + std::string(key) + "'");
}

nlohmann::json to_json(const MetricVector& v) {
  nlohmann::json values = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    values[std::string(metric_key(m))] = v[m] ? nlohmann::json(*v[m]) : nlohmann::json(nullptr);
  }
  return {{"problem_id", v.problem_id}, {"template_id", v.template_id}, {"metrics", values}};
}

MetricVector metric_vector_from_json(const nlohmann::json& j) {
  try {
    MetricVector v;
    v.problem_id = j.at("problem_id").get<std::string>();
    v.template_id = j.at("template_id").get<std::string>();
    const auto& values = j.at("metrics");
    for (Metric m : kAllMetrics) {
      const std::string key(metric_key(m));
      if (values.contains(key) && !values.at(key).is_null()) v[m] = values.at(key).get<double>();
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("metric row: ") + e.what());
  }
}

}  // namespace nle
