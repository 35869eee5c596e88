#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nle::text {

/// Word tokens of a text, always produced by tokenize() so the token list and
/// the source string never drift apart.
class TokenSequence {
 public:
  TokenSequence() = default;

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& source_text() const noexcept { return source_; }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool empty() const noexcept { return tokens_.empty(); }

  friend TokenSequence tokenize(std::string_view text);

 private:
  std::vector<std::string> tokens_;
  std::string source_;
};

/// Whitespace split, then leading and trailing characters from .,!?;:'"()
/// are peeled off one at a time as separate tokens. Internal apostrophes stay
/// attached, so "don't" is a single token.
TokenSequence tokenize(std::string_view text);

bool is_detachable_punct(char c) noexcept;

std::size_t length(const TokenSequence& seq) noexcept;

/// Distinct lowercased tokens over token count. Throws EmptyText on [].
double type_token_ratio(const TokenSequence& seq);

struct BleuOptions {
  int max_n = 4;
  /// Add-one smoothing on the n >= 2 modified precisions.
  bool smoothing = false;
};

/// Sentence BLEU of one candidate against a reference set: geometric mean of
/// clipped n-gram precisions times the brevity penalty. The effective order is
/// min(max_n, |candidate|). Empty references are ignored.
double bleu(const TokenSequence& candidate, std::span<const TokenSequence> references,
            const BleuOptions& options = {});

struct SelfBleuResult {
  std::vector<double> per_item;
  double mean = 0.0;
};

/// per_item[i] = bleu(corpus[i], corpus without i). Requires >= 2 items.
SelfBleuResult self_bleu(std::span<const TokenSequence> corpus, const BleuOptions& options = {});

/// Lowercase word -> concreteness rating in [0,1]. Immutable after load.
class ConcretenessLexicon {
 public:
  ConcretenessLexicon() = default;
  /// Keys are lowercased; ratings outside [0,1], empty keys and duplicates
  /// (after lowercasing) are rejected with ParseError/DuplicateId.
  static ConcretenessLexicon from_entries(const std::vector<std::pair<std::string, double>>& entries);
  /// UTF-8 TSV `word<TAB>rating`, '#' comment lines ignored.
  static ConcretenessLexicon load(const std::filesystem::path& path);
  static ConcretenessLexicon parse(std::string_view tsv, std::string_view source_name = "<memory>");

  const double* find(std::string_view lowercase_word) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, double, std::less<>> entries_;
};

/// Mean rating over tokens present in the lexicon (case-insensitive lookup);
/// unknown tokens are skipped. Throws NoKnownWords when nothing matches and
/// EmptyText on an empty sequence.
double concreteness(const TokenSequence& seq, const ConcretenessLexicon& lexicon);

/// Min-max rescales a `word<TAB>rating...` source (rating taken from the
/// given 1-based column, default 2) into [0,1] lexicon TSV text.
std::string prepare_lexicon(std::string_view source_tsv, int rating_column = 2);

std::string to_lower_ascii(std::string_view s);

}  // namespace nle::text
