#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>

#include "nle/text_metrics.hpp"

namespace nle::text::detail {

inline constexpr int kMaxOrder = 4;

struct BleuStats {
  std::array<std::int64_t, kMaxOrder> matched{};
  std::array<std::int64_t, kMaxOrder> total{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  int order = 0;
};

inline int effective_order(int max_n, std::size_t candidate_length) {
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(max_n), candidate_length));
}

/// Closest reference length to the candidate; ties go to the shorter one.
inline std::size_t closest_length(std::size_t candidate, std::span<const std::size_t> lengths) {
  std::size_t best = lengths.front();
  for (std::size_t len : lengths) {
    const auto d = std::llabs(static_cast<long long>(len) - static_cast<long long>(candidate));
    const auto bd = std::llabs(static_cast<long long>(best) - static_cast<long long>(candidate));
    if (d < bd || (d == bd && len < best)) best = len;
  }
  return best;
}

inline double score_from_stats(const BleuStats& s, bool smoothing) {
  double log_sum = 0.0;
  for (int n = 0; n < s.order; ++n) {
    double num = static_cast<double>(s.matched[n]);
    double den = static_cast<double>(s.total[n]);
    if (smoothing && n >= 1) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0) return 0.0;
    log_sum += std::log(num / den);
  }
  const double c = static_cast<double>(s.candidate_length);
  const double r = static_cast<double>(s.reference_length);
  const double log_bp = c > r ? 0.0 : 1.0 - r / c;
  return std::exp(log_sum / s.order + log_bp);
}

}  // namespace nle::text::detail
