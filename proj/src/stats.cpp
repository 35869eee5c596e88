#include "nle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "nle/error.hpp"

namespace nle::stats {

namespace {

// Lentz's method for the incomplete beta continued fraction.
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  bool constant = true;
};

Moments moments(std::span<const double> d) {
  Moments m;
  const double n = static_cast<double>(d.size());
  m.mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : d) ss += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(ss / (n - 1.0));
  m.constant = std::all_of(d.begin(), d.end(), [&](double x) { return x == d.front(); });
  return m;
}

TestResult t_test_on_differences(std::span<const double> d, double alpha, std::size_t family_size) {
  TestResult r;
  r.n = d.size();
  r.dof = static_cast<int>(d.size()) - 1;
  const Moments m = moments(d);
  r.mean_difference = m.mean;
  if (m.constant) {
    r.degenerate = true;
    if (d.front() == 0.0) {
      r.t_stat = 0.0;
      r.p_two_tailed = 1.0;
    } else {
      r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), d.front());
      r.p_two_tailed = 0.0;
    }
  } else {
    r.t_stat = m.mean / (m.sd / std::sqrt(static_cast<double>(d.size())));
    r.p_two_tailed = student_t_two_tailed_p(r.t_stat, r.dof);
  }
  apply_correction(r, alpha, family_size);
  return r;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::BadAlpha, "alpha must be in (0,1)");
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::BadInput, "correlation of a constant sequence");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
  return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_two_tailed_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return std::clamp(regularized_incomplete_beta(x, dof / 2.0, 0.5), 0.0, 1.0);
}

void apply_correction(TestResult& r, double alpha, std::size_t family_size) {
  check_alpha(alpha);
  const double m = static_cast<double>(std::max<std::size_t>(family_size, 1));
  r.family_size = std::max<std::size_t>(family_size, 1);
  r.significant_after_correction = r.p_two_tailed < alpha / m;
  r.stars = 0;
  if (r.significant_after_correction) {
    for (double level : {0.05, 0.01, 0.001}) {
      if (r.p_two_tailed < level / m) ++r.stars;
    }
  }
  if (!r.significant_after_correction || r.mean_difference == 0.0) {
    r.direction = Direction::None;
  } else {
    r.direction = r.mean_difference > 0.0 ? Direction::Up : Direction::Down;
  }
}

TestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha, std::size_t family_size) {
  check_alpha(alpha);
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorCode::LengthMismatch, "paired t-test needs at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return t_test_on_differences(d, alpha, family_size);
}

TestResult one_sample_t_test(std::span<const double> values, double mu, double alpha, std::size_t family_size) {
  check_alpha(alpha);
  if (values.size() < 2) throw Error(ErrorCode::LengthMismatch, "one-sample t-test needs at least 2 values");
  std::vector<double> d(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) d[i] = values[i] - mu;
  return t_test_on_differences(d, alpha, family_size);
}

std::vector<bool> bonferroni_adjust(std::span<const double> p_values, double alpha,
                                    std::optional<std::size_t> family_size) {
  check_alpha(alpha);
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::BadP, "p-value outside [0,1]");
  }
  const std::size_t m = family_size.value_or(p_values.size());
  const double threshold = alpha / static_cast<double>(std::max<std::size_t>(m, 1));
  std::vector<bool> out;
  out.reserve(p_values.size());
  for (double p : p_values) out.push_back(p < threshold);
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "spearman inputs differ in length");
  if (x.size() < 3) throw Error(ErrorCode::LengthMismatch, "spearman needs at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  SpearmanResult r;
  r.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
  const double dof = static_cast<double>(x.size()) - 2.0;
  if (std::fabs(r.rho) >= 1.0) {
    r.p = 0.0;
  } else {
    const double t = r.rho * std::sqrt(dof / (1.0 - r.rho * r.rho));
    r.p = student_t_two_tailed_p(t, dof);
  }
  return r;
}

ComparisonRow compare_prompt_runs(std::span<const MetricVector> baseline, std::span<const MetricVector> variant,
                                  double alpha, std::optional<std::size_t> family_size) {
  check_alpha(alpha);
  std::map<std::string, const MetricVector*> by_problem;
  for (const auto& v : variant) by_problem[v.problem_id] = &v;
  if (by_problem.size() != baseline.size()) {
    throw Error(ErrorCode::PairingMismatch, "baseline and variant cover different problems");
  }
  std::vector<std::pair<const MetricVector*, const MetricVector*>> pairs;
  for (const auto& b : baseline) {
    auto it = by_problem.find(b.problem_id);
    if (it == by_problem.end()) throw Error(ErrorCode::PairingMismatch, "variant lacks problem '" + b.problem_id + "'");
    pairs.emplace_back(&b, it->second);
  }

  ComparisonRow row;
  for (Metric m : kAllMetrics) {
    std::vector<double> base_vals, var_vals;
    for (const auto& [b, v] : pairs) {
      if ((*b)[m] && (*v)[m]) {
        base_vals.push_back(*(*b)[m]);
        var_vals.push_back(*(*v)[m]);
      }
    }
    if (base_vals.size() < 2) continue;
    row[static_cast<std::size_t>(m)] = paired_t_test(var_vals, base_vals, alpha, 1);
  }
  const std::size_t m = family_size.value_or(tests_in(row));
  for (auto& cell : row) {
    if (cell) apply_correction(*cell, alpha, m);
  }
  return row;
}

std::size_t tests_in(const ComparisonRow& row) {
  return static_cast<std::size_t>(std::count_if(row.begin(), row.end(), [](const auto& c) { return c.has_value(); }));
}

}  // namespace nle::stats
