#pragma once

#include "lotus/corpus.hpp"
#include "lotus/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace lotus {

struct Entity {
  std::string type;
  TokenSeq surface;

  friend bool operator==(const Entity&, const Entity&) = default;
};

// The five gold control attributes of one document-summary pair.
struct ControlSignals {
  std::size_t length_bin = 0;          // multiple of 5, summary length in [bin, bin + 5)
  std::size_t abstractiveness_bin = 0; // multiple of 5 in [0, 100]
  std::size_t n_sentences = 0;
  TokenSeq keywords;
  std::vector<Entity> entities;

  friend bool operator==(const ControlSignals&, const ControlSignals&) = default;
};

struct OracleSelection {
  std::vector<std::size_t> indices; // document order
  double score = 0.0;
};

struct EntitySpan {
  std::size_t begin = 0;
  std::size_t end = 0; // exclusive
  std::string type;

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// Maps a token sequence to typed spans. Implementations must be
// deterministic and return non-overlapping spans in textual order.
class EntityTagger {
public:
  virtual ~EntityTagger() = default;
  virtual std::vector<EntitySpan> tag(std::span<const Token> tokens) const = 0;
};

// Longest-match lookup over a lexicon of tokenized surfaces. Scans left to
// right; at each position takes the longest entry starting there.
class DictionaryTagger final : public EntityTagger {
public:
  DictionaryTagger() = default;

  void add(std::string_view surface, std::string type);
  std::size_t size() const { return entries_.size(); }

  std::vector<EntitySpan> tag(std::span<const Token> tokens) const override;

  // Lines of `surface<TAB>TYPE`; blank lines and lines starting with '#' are ignored.
  static DictionaryTagger load(const std::filesystem::path& path);
  static DictionaryTagger parse(std::string_view text);

private:
  struct TrieNode {
    std::map<Token, std::size_t> next;
    std::optional<std::string> type;
  };
  std::vector<TrieNode> nodes_{TrieNode{}};
  std::vector<std::pair<TokenSeq, std::string>> entries_;
};

// Fixed English function-word list used for keyword filtering.
const std::unordered_set<Token>& default_stopwords();
inline constexpr const char* kStopwordListVersion = "en-v1";

// Mean of ROUGE-1 F1 and ROUGE-2 F1 of the chosen sentences, concatenated in
// document order, against the summary.
double oracle_score(const Document& doc, std::span<const std::size_t> indices,
                    std::span<const Token> summary);

// Greedy sentence selection: repeatedly add the sentence that maximizes
// oracle_score, lowest index on ties, until nothing strictly improves it.
OracleSelection extractive_oracle(const Document& doc, std::span<const Token> summary);

// 5 * floor(value / 5) with a tolerance for values a rounding error below a bin edge.
std::size_t bin5(double value);

// Unbinned 100 * (1 - oracle score).
double abstractiveness_raw(const Document& doc, std::span<const Token> summary);
std::size_t abstractiveness(const Document& doc, std::span<const Token> summary);

std::size_t length_bin(std::span<const Token> summary);

std::size_t count_sentences(std::span<const TokenSeq> summary_sentences);

// Matched positions of one longest common subsequence, preferring the
// leftmost positions in `a`, then in `b`.
std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::span<const Token> a,
                                                               std::span<const Token> b);

TokenSeq extract_keywords(std::span<const Token> summary, std::span<const TokenSeq> oracle_sentences,
                          const std::unordered_set<Token>& stopwords);

std::vector<Entity> extract_entities(std::span<const Token> summary, const EntityTagger& tagger);

// Draws n uniformly from [1, min(5, |items|)], then n distinct items without
// replacement, returned in their original order.
template <class T>
std::vector<T> sample_control_subset(std::span<const T> items, Rng& rng);

std::vector<std::size_t> sample_subset_indices(std::size_t count, Rng& rng);

// Everything the annotation pipeline derives for one example, including the
// unbinned values the serialized signals drop.
struct Annotation {
  ControlSignals signals;
  OracleSelection oracle;
  std::size_t length = 0;
  double abstractiveness_raw = 0.0;
};

struct AnnotatorOptions {
  const EntityTagger* tagger = nullptr; // null: no entities
  const std::unordered_set<Token>* stopwords = nullptr; // null: default list
};

Annotation annotate(const Example& example, const AnnotatorOptions& options);

// Annotates in parallel; results are in input order.
std::vector<Annotation> annotate_corpus(std::span<const Example> examples, const AnnotatorOptions& options);

struct AnnotatedExample {
  Example example;
  ControlSignals signals;
};

// JSON Lines: the corpus record plus a "signals" object
// {length_bin, abstractiveness, n_sentences, keywords: [str], entities: [[type, surface]]}.
std::string serialize_annotated(std::span<const Example> examples, std::span<const Annotation> annotations);
std::vector<AnnotatedExample> parse_annotated(std::string_view jsonl, std::string_view source_name = "<memory>");
std::vector<AnnotatedExample> load_annotated(const std::filesystem::path& path);

struct SignalStatistics {
  double keywords = 0.0;
  double entities = 0.0;
  double length = 0.0;
  double abstractiveness = 0.0;
  double sentences = 0.0;
  std::size_t n_examples = 0;
};

// Means over raw (unbinned) length and abstractiveness.
SignalStatistics signal_statistics(std::span<const Annotation> annotations);
std::string format_statistics(const SignalStatistics& stats);

// ---------------------------------------------------------------------------

template <class T>
std::vector<T> sample_control_subset(std::span<const T> items, Rng& rng) {
  std::vector<T> out;
  for (auto i : sample_subset_indices(items.size(), rng)) {
    out.push_back(items[i]);
  }
  return out;
}

} // namespace lotus
