#include "nle/text_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "bleu_stats.hpp"
#include "nle/error.hpp"
#include "nle/kernels.hpp"

namespace nle::text {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

using Ngram = std::vector<std::string>;

std::map<Ngram, std::int64_t> count_ngrams(const std::vector<std::string>& tokens, int n) {
  std::map<Ngram, std::int64_t> counts;
  if (tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.size() - start : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  s = trim_view(s);
  if (s.empty()) return false;
  // from_chars for double is available in libstdc++ 11
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

bool is_detachable_punct(char c) noexcept {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '\'': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  seq.source_ = std::string(text);
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view chunk = text.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;

    std::vector<std::string> trailing;
    while (!chunk.empty() && is_detachable_punct(chunk.front())) {
      seq.tokens_.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    while (!chunk.empty() && is_detachable_punct(chunk.back())) {
      trailing.emplace_back(1, chunk.back());
      chunk.remove_suffix(1);
    }
    if (!chunk.empty()) seq.tokens_.emplace_back(chunk);
    seq.tokens_.insert(seq.tokens_.end(), trailing.rbegin(), trailing.rend());
  }
  return seq;
}

std::size_t length(const TokenSequence& seq) noexcept { return seq.size(); }

double type_token_ratio(const TokenSequence& seq) {
  if (seq.empty()) throw Error(ErrorCode::EmptyText, "type-token ratio of an empty text");
  std::set<std::string> types;
  for (const auto& t : seq.tokens()) types.insert(to_lower_ascii(t));
  return static_cast<double>(types.size()) / static_cast<double>(seq.size());
}

double bleu(const TokenSequence& candidate, std::span<const TokenSequence> references,
            const BleuOptions& options) {
  if (options.max_n < 1 || options.max_n > detail::kMaxOrder) {
    throw Error(ErrorCode::BadOrder, "max_n must be in [1,4], got " + std::to_string(options.max_n));
  }
  if (candidate.empty()) throw Error(ErrorCode::EmptyText, "empty BLEU candidate");

  std::vector<const TokenSequence*> refs;
  for (const auto& r : references) {
    if (!r.empty()) refs.push_back(&r);
  }
  if (refs.empty()) throw Error(ErrorCode::EmptyText, "no nonempty BLEU reference");

  detail::BleuStats stats;
  stats.order = detail::effective_order(options.max_n, candidate.size());
  stats.candidate_length = candidate.size();
  std::vector<std::size_t> ref_lengths;
  for (const auto* r : refs) ref_lengths.push_back(r->size());
  stats.reference_length = detail::closest_length(candidate.size(), ref_lengths);

  for (int n = 1; n <= stats.order; ++n) {
    auto cand_counts = count_ngrams(candidate.tokens(), n);
    std::map<Ngram, std::int64_t> max_ref;
    for (const auto* r : refs) {
      for (auto& [gram, c] : count_ngrams(r->tokens(), n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    std::int64_t matched = 0;
    std::int64_t total = 0;
    for (const auto& [gram, c] : cand_counts) {
      total += c;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    stats.matched[n - 1] = matched;
    stats.total[n - 1] = total;
  }
  return detail::score_from_stats(stats, options.smoothing);
}

SelfBleuResult self_bleu(std::span<const TokenSequence> corpus, const BleuOptions& options) {
  return kernels::self_bleu_parallel(corpus, options);
}

ConcretenessLexicon ConcretenessLexicon::from_entries(
    const std::vector<std::pair<std::string, double>>& entries) {
  ConcretenessLexicon lex;
  for (const auto& [word, rating] : entries) {
    std::string key = to_lower_ascii(trim_view(word));
    if (key.empty()) throw Error(ErrorCode::ParseError, "empty lexicon word");
    if (!(rating >= 0.0 && rating <= 1.0)) {
      throw Error(ErrorCode::ParseError, "rating for '" + key + "' outside [0,1]");
    }
    if (!lex.entries_.emplace(key, rating).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate lexicon word '" + key + "'");
    }
  }
  return lex;
}

ConcretenessLexicon ConcretenessLexicon::parse(std::string_view tsv, std::string_view source_name) {
  ConcretenessLexicon lex;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= tsv.size()) {
    auto end = tsv.find('\n', pos);
    if (end == std::string_view::npos) end = tsv.size();
    std::string_view line = tsv.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim_view(line).empty() || line.front() == '#') {
      if (end == tsv.size()) break;
      continue;
    }
    const std::string where = std::string(source_name) + ":" + std::to_string(line_no);
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw Error(ErrorCode::ParseError, where + ": expected word<TAB>rating");
    double rating = 0.0;
    if (!parse_double(fields[1], rating)) throw Error(ErrorCode::ParseError, where + ": bad rating");
    std::string key = to_lower_ascii(trim_view(fields[0]));
    if (key.empty()) throw Error(ErrorCode::ParseError, where + ": empty word");
    if (rating < 0.0 || rating > 1.0) throw Error(ErrorCode::ParseError, where + ": rating outside [0,1]");
    if (!lex.entries_.emplace(key, rating).second) {
      throw Error(ErrorCode::DuplicateId, where + ": duplicate word '" + key + "'");
    }
    if (end == tsv.size()) break;
  }
  return lex;
}

ConcretenessLexicon ConcretenessLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open lexicon " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const double* ConcretenessLexicon::find(std::string_view lowercase_word) const {
  auto it = entries_.find(lowercase_word);
  return it == entries_.end() ? nullptr : &it->second;
}

double concreteness(const TokenSequence& seq, const ConcretenessLexicon& lexicon) {
  if (seq.empty()) throw Error(ErrorCode::EmptyText, "concreteness of an empty text");
  double sum = 0.0;
  std::size_t hits = 0;
  for (const auto& t : seq.tokens()) {
    if (const double* r = lexicon.find(to_lower_ascii(t))) {
      sum += *r;
      ++hits;
    }
  }
  if (hits == 0) throw Error(ErrorCode::NoKnownWords, "no token found in the concreteness lexicon");
  return sum / static_cast<double>(hits);
}

std::string prepare_lexicon(std::string_view source_tsv, int rating_column) {
  if (rating_column < 2) throw Error(ErrorCode::ConfigError, "rating column must be >= 2");
  std::vector<std::pair<std::string, double>> rows;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(source_tsv)};
  std::string raw;
  bool first_data_line = true;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim_view(line).empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() < static_cast<std::size_t>(rating_column)) {
      throw Error(ErrorCode::ParseError, where + ": missing rating column");
    }
    double rating = 0.0;
    if (!parse_double(fields[rating_column - 1], rating)) {
      if (first_data_line) {  // header row
        first_data_line = false;
        continue;
      }
      throw Error(ErrorCode::ParseError, where + ": bad rating");
    }
    first_data_line = false;
    std::string key = to_lower_ascii(trim_view(fields[0]));
    if (key.empty()) throw Error(ErrorCode::ParseError, where + ": empty word");
    if (!seen.insert(key).second) throw Error(ErrorCode::DuplicateId, where + ": duplicate word '" + key + "'");
    rows.emplace_back(std::move(key), rating);
  }
  if (rows.empty()) return "";
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.second);
    hi = std::max(hi, r.second);
  }
  if (!(hi > lo)) throw Error(ErrorCode::ParseError, "all ratings equal; cannot min-max rescale");
  std::ostringstream out;
  out.precision(17);
  for (const auto& [word, rating] : rows) {
    out << word << '\t' << (rating - lo) / (hi - lo) << '\n';
  }
  return out.str();
}

}  // namespace nle::text
