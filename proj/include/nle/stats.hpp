#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "nle/metrics.hpp"

namespace nle::stats {

enum class Direction { Up, Down, None };

struct TestResult {
  double t_stat = 0.0;
  int dof = 0;
  double p_two_tailed = 1.0;
  /// Mean of (a - b) for paired tests, mean - mu for one-sample tests.
  double mean_difference = 0.0;
  std::size_t n = 0;
  Direction direction = Direction::None;
  bool significant_after_correction = false;
  /// 1, 2, 3 for p below 0.05/m, 0.01/m, 0.001/m; 0 when not significant.
  int stars = 0;
  /// All differences identical: p is 1 for a zero difference, else 0.
  bool degenerate = false;
  /// Bonferroni family size the flags were computed with.
  std::size_t family_size = 1;
};

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double x, double a, double b);

/// Two-tailed p of Student's t with `dof` degrees of freedom.
double student_t_two_tailed_p(double t, double dof);

/// Recomputes significance, stars and direction for a family of m tests.
void apply_correction(TestResult& r, double alpha, std::size_t family_size);

/// Paired two-tailed t-test on a - b; dof = n - 1.
TestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha = 0.05,
                         std::size_t family_size = 1);

TestResult one_sample_t_test(std::span<const double> values, double mu, double alpha = 0.05,
                             std::size_t family_size = 1);

/// significant[i] = p[i] < alpha / m, with m defaulting to p.size().
std::vector<bool> bonferroni_adjust(std::span<const double> p_values, double alpha,
                                    std::optional<std::size_t> family_size = std::nullopt);

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;
};

/// Average ranks for ties, Pearson on ranks, p from the t approximation
/// with n - 2 degrees of freedom.
SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y);

/// Ranks starting at 1; ties share their average rank.
std::vector<double> average_ranks(std::span<const double> v);

/// One row of per-metric tests of `variant` against `baseline`, paired by
/// problem_id with pair deletion for undefined values. A metric with fewer
/// than two complete pairs has no result. family_size defaults to the
/// number of tests performed.
using ComparisonRow = std::array<std::optional<TestResult>, kMetricCount>;

ComparisonRow compare_prompt_runs(std::span<const MetricVector> baseline, std::span<const MetricVector> variant,
                                  double alpha = 0.05, std::optional<std::size_t> family_size = std::nullopt);

/// Tests performed in a row (cells that are not "--").
std::size_t tests_in(const ComparisonRow& row);

}  // namespace nle::stats
