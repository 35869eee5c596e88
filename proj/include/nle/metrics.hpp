#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace nle {

enum class Metric { Length, SelfBleu, Ttr, Bleu, Concreteness, CvNo, CvDummy, Acceptability };

inline constexpr std::size_t kMetricCount = 8;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {
    Metric::Length, Metric::SelfBleu, Metric::Ttr,   Metric::Bleu,
    Metric::Concreteness, Metric::CvNo, Metric::CvDummy, Metric::Acceptability};

/// Snake-case key used in files and on the command line ("self_bleu").
std::string_view metric_key(Metric m);
/// Column heading used in reports ("Self-BLEU").
std::string_view metric_label(Metric m);
Metric metric_from_key(std::string_view key);

/// The eight scores for one explanation; absent values are undefined for
/// this record (no references, no lexicon hits, backend not configured...).
struct MetricVector {
  std::string problem_id;
  std::string template_id;
  std::array<std::optional<double>, kMetricCount> values{};

  std::optional<double>& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  const std::optional<double>& operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  bool operator==(const MetricVector&) const = default;
};

nlohmann::json to_json(const MetricVector& v);
MetricVector metric_vector_from_json(const nlohmann::json& j);

}  // namespace nle
