#pragma once

#include "lotus/corpus.hpp"
#include "lotus/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lotus::synthetic {

// Pronounceable pseudo-words, deterministic in `index`.
std::string word(std::size_t index);

struct LengthTaskOptions {
  std::size_t n_examples = 1000;
  std::size_t vocab_words = 40;
  std::size_t min_doc_tokens = 30;
  std::size_t max_doc_tokens = 80;
  std::vector<std::size_t> summary_lengths{5, 10, 15, 20, 25, 30, 35};
  std::uint64_t seed = 0;
};

// Documents of random words split into sentences; each summary is the first
// k document tokens, k drawn from summary_lengths and clipped to the document.
std::vector<Example> length_task(const LengthTaskOptions& options);

// One small document (2..max_sentences sentences over a narrow word pool) and
// a summary that mixes perturbed document sentences with novel words.
Example oracle_case(Rng& rng, std::size_t max_sentences, const std::string& id);

struct NewsCorpusOptions {
  std::size_t n_examples = 1000;
  std::size_t mean_summary_length = 60;
  std::size_t length_spread = 20;
  std::uint64_t seed = 0;
};

struct NewsCorpus {
  std::vector<Example> examples;
  std::string lexicon; // surface<TAB>TYPE lines for every planted entity
  std::vector<std::size_t> summary_lengths;
};

// News-like corpus whose summary token counts average exactly
// mean_summary_length. Summaries copy, trim and paraphrase document sentences
// and mention entities from the returned lexicon.
NewsCorpus news_corpus(const NewsCorpusOptions& options);

} // namespace lotus::synthetic
