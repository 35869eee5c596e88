#pragma once
// Reference computations written independently of the library, used as
// test oracles. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using Words = std::vector<std::string>;

inline Words split(const std::string& s) {
  Words out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::map<Words, int> ngrams(const Words& w, int n) {
  std::map<Words, int> out;
  for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) {
    out[Words(w.begin() + i, w.begin() + i + n)] += 1;
  }
  return out;
}

/// Sentence BLEU: clipped precisions up to min(4, |cand|), geometric mean as
/// a product root, brevity penalty against the closest reference length
/// (shorter on ties).
inline double bleu(const Words& cand, const std::vector<Words>& refs, bool smoothing = false) {
  const int order = std::min<int>(4, static_cast<int>(cand.size()));
  long double product = 1.0L;
  for (int n = 1; n <= order; ++n) {
    auto c = ngrams(cand, n);
    long double matched = 0, total = 0;
    for (auto& [g, k] : c) {
      int best = 0;
      for (const auto& r : refs) {
        auto rc = ngrams(r, n);
        auto it = rc.find(g);
        if (it != rc.end()) best = std::max(best, it->second);
      }
      matched += std::min(k, best);
      total += k;
    }
    if (smoothing && n > 1) {
      matched += 1;
      total += 1;
    }
    if (matched == 0) return 0.0;
    product *= matched / total;
  }
  std::size_t r = refs.front().size();
  for (const auto& ref : refs) {
    const long d = std::labs(static_cast<long>(ref.size()) - static_cast<long>(cand.size()));
    const long bd = std::labs(static_cast<long>(r) - static_cast<long>(cand.size()));
    if (d < bd || (d == bd && ref.size() < r)) r = ref.size();
  }
  const long double c = static_cast<long double>(cand.size());
  const long double bp = c > r ? 1.0L : std::exp(1.0L - static_cast<long double>(r) / c);
  return static_cast<double>(bp * std::pow(product, 1.0L / order));
}

/// exp(a) / (exp(a) + exp(b)) at 50 decimal digits.
inline double softmax_first(double a, double b) {
  using boost::multiprecision::cpp_bin_float_50;
  const cpp_bin_float_50 ea = boost::multiprecision::exp(cpp_bin_float_50(a));
  const cpp_bin_float_50 eb = boost::multiprecision::exp(cpp_bin_float_50(b));
  return static_cast<double>(ea / (ea + eb));
}

inline double t_pdf(double x, double dof) {
  const double logc = std::lgamma((dof + 1) / 2) - std::lgamma(dof / 2) - 0.5 * std::log(dof * M_PI);
  return std::exp(logc - (dof + 1) / 2 * std::log1p(x * x / dof));
}

/// Two-tailed p by composite Simpson integration of the density over
/// [0, |t|]: p = 1 - 2 * integral.
inline double t_two_tailed_p(double t, double dof) {
  const double a = std::fabs(t);
  if (a == 0.0) return 1.0;
  const int n = 200000;
  const double h = a / n;
  double s = t_pdf(0, dof) + t_pdf(a, dof);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * t_pdf(i * h, dof);
  return std::clamp(1.0 - 2.0 * s * h / 3.0, 0.0, 1.0);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Ranks by counting: rank(x) = #(< x) + (#(== x) + 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : v) {
      if (y < v[i]) less += 1;
      if (y == v[i]) equal += 1;
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean(x), my = mean(y);
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

inline Words random_words(std::mt19937_64& rng, int max_len, int vocab) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<int> pick(0, vocab - 1);
  Words w(static_cast<std::size_t>(len(rng)));
  for (auto& x : w) x = "w" + std::to_string(pick(rng));
  return w;
}

inline std::string join(const Words& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + w[i];
  return s;
}

}  // namespace oracle
