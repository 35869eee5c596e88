#include "nle/kernels.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bleu_stats.hpp"
#include "nle/error.hpp"

namespace nle::kernels {

namespace {

struct NgramKey {
  std::array<std::uint32_t, text::detail::kMaxOrder> ids{};
  bool operator==(const NgramKey&) const = default;
};

struct NgramKeyHash {
  std::size_t operator()(const NgramKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto id : k.ids) {
      h ^= id;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Two largest per-item counts of one n-gram, and the owner of the largest.
struct TopTwo {
  std::int64_t first = 0;
  std::int64_t second = 0;
  std::size_t owner = static_cast<std::size_t>(-1);

  void offer(std::int64_t count, std::size_t item) {
    if (count > first) {
      second = first;
      first = count;
      owner = item;
    } else if (count > second) {
      second = count;
    }
  }
  std::int64_t max_excluding(std::size_t item) const { return owner == item ? second : first; }
};

using ItemCounts = std::vector<std::pair<NgramKey, std::int64_t>>;

// Closest length to `candidate` among all lengths with one copy of
// `candidate` removed (the item's own length). Ties go to the shorter.
std::size_t closest_excluding_self(const std::map<std::size_t, std::size_t>& length_counts,
                                   std::size_t candidate) {
  auto own = length_counts.find(candidate);
  if (own != length_counts.end() && own->second > 1) return candidate;
  std::vector<std::size_t> options;
  auto hi = length_counts.upper_bound(candidate);
  if (hi != length_counts.end()) options.push_back(hi->first);
  auto lo = length_counts.lower_bound(candidate);
  if (lo != length_counts.begin()) options.push_back(std::prev(lo)->first);
  return text::detail::closest_length(candidate, options);
}

void check_corpus(std::span<const text::TokenSequence> corpus, const text::BleuOptions& options) {
  if (options.max_n < 1 || options.max_n > text::detail::kMaxOrder) {
    throw Error(ErrorCode::BadOrder, "max_n must be in [1,4], got " + std::to_string(options.max_n));
  }
  if (corpus.size() < 2) throw Error(ErrorCode::CorpusTooSmall, "self-BLEU needs at least 2 items");
  for (const auto& item : corpus) {
    if (item.empty()) throw Error(ErrorCode::EmptyText, "self-BLEU corpus contains an empty text");
  }
}

double mean_of(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

LexicalScores score_one(const LexicalInput& input, std::size_t i) {
  LexicalScores out;
  auto seq = text::tokenize(input.texts[i]);
  out.length = seq.size();
  if (seq.empty()) return out;
  out.ttr = text::type_token_ratio(seq);
  if (input.lexicon != nullptr) {
    try {
      out.concreteness = text::concreteness(seq, *input.lexicon);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoKnownWords) throw;
    }
  }
  if (!input.references.empty()) {
    const auto& refs = input.references[i];
    bool any = std::any_of(refs.begin(), refs.end(), [](const auto& r) { return !r.empty(); });
    if (any) out.bleu = text::bleu(seq, refs, input.bleu_options);
  }
  return out;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

text::SelfBleuResult self_bleu_parallel(std::span<const text::TokenSequence> corpus,
                                        const text::BleuOptions& options, int threads) {
  check_corpus(corpus, options);
  const std::size_t n_items = corpus.size();

  std::unordered_map<std::string, std::uint32_t> vocab;
  std::vector<std::vector<std::uint32_t>> ids(n_items);
  for (std::size_t i = 0; i < n_items; ++i) {
    for (const auto& tok : corpus[i].tokens()) {
      auto [it, _] = vocab.emplace(tok, static_cast<std::uint32_t>(vocab.size() + 1));
      ids[i].push_back(it->second);
    }
  }

  const int max_order = options.max_n;
  // counts[n][i]: n-gram counts of item i at order n+1
  std::vector<std::vector<ItemCounts>> counts(max_order, std::vector<ItemCounts>(n_items));
  std::vector<std::unordered_map<NgramKey, TopTwo, NgramKeyHash>> index(max_order);
  for (int n = 1; n <= max_order; ++n) {
    for (std::size_t i = 0; i < n_items; ++i) {
      std::unordered_map<NgramKey, std::int64_t, NgramKeyHash> local;
      const auto& s = ids[i];
      for (std::size_t p = 0; p + n <= s.size(); ++p) {
        NgramKey key;
        std::copy_n(s.begin() + p, n, key.ids.begin());
        ++local[key];
      }
      auto& flat = counts[n - 1][i];
      flat.assign(local.begin(), local.end());
      for (const auto& [key, c] : flat) index[n - 1][key].offer(c, i);
    }
  }

  std::map<std::size_t, std::size_t> length_counts;
  for (const auto& item : corpus) ++length_counts[item.size()];

  text::SelfBleuResult result;
  result.per_item.assign(n_items, 0.0);
  const auto n_signed = static_cast<std::int64_t>(n_items);
  const int n_threads = threads > 0 ? threads : max_threads();
  (void)n_threads;

#pragma omp parallel for schedule(dynamic, 16) num_threads(n_threads)
  for (std::int64_t ii = 0; ii < n_signed; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    text::detail::BleuStats stats;
    stats.candidate_length = corpus[i].size();
    stats.order = text::detail::effective_order(options.max_n, stats.candidate_length);
    stats.reference_length = closest_excluding_self(length_counts, stats.candidate_length);
    for (int n = 1; n <= stats.order; ++n) {
      std::int64_t matched = 0;
      std::int64_t total = 0;
      const auto& table = index[n - 1];
      for (const auto& [key, c] : counts[n - 1][i]) {
        total += c;
        matched += std::min(c, table.find(key)->second.max_excluding(i));
      }
      stats.matched[n - 1] = matched;
      stats.total[n - 1] = total;
    }
    result.per_item[i] = text::detail::score_from_stats(stats, options.smoothing);
  }
  result.mean = mean_of(result.per_item);
  return result;
}

text::SelfBleuResult self_bleu_serial(std::span<const text::TokenSequence> corpus,
                                      const text::BleuOptions& options) {
  check_corpus(corpus, options);
  text::SelfBleuResult result;
  std::vector<text::TokenSequence> others;
  others.reserve(corpus.size() - 1);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < corpus.size(); ++j) {
      if (j != i) others.push_back(corpus[j]);
    }
    result.per_item.push_back(text::bleu(corpus[i], others, options));
  }
  result.mean = mean_of(result.per_item);
  return result;
}

std::vector<LexicalScores> lexical_scores_serial(const LexicalInput& input) {
  std::vector<LexicalScores> out;
  out.reserve(input.texts.size());
  for (std::size_t i = 0; i < input.texts.size(); ++i) out.push_back(score_one(input, i));
  return out;
}

std::vector<LexicalScores> lexical_scores_parallel(const LexicalInput& input, int threads) {
  if (!input.references.empty() && input.references.size() != input.texts.size()) {
    throw Error(ErrorCode::LengthMismatch, "references must align with texts");
  }
  std::vector<LexicalScores> out(input.texts.size());
  const auto n = static_cast<std::int64_t>(input.texts.size());
  const int n_threads = threads > 0 ? threads : max_threads();
  (void)n_threads;
  // Only BadOrder can escape score_one, and it is checked up front.
  if (!input.references.empty() &&
      (input.bleu_options.max_n < 1 || input.bleu_options.max_n > text::detail::kMaxOrder)) {
    throw Error(ErrorCode::BadOrder, "max_n must be in [1,4]");
  }
#pragma omp parallel for schedule(dynamic, 8) num_threads(n_threads)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = score_one(input, static_cast<std::size_t>(i));
  }
  return out;
}

}  // namespace nle::kernels
