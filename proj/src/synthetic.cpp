#include "lotus/synthetic.hpp"

#include "lotus/error.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace lotus::synthetic {

namespace {

constexpr std::array<const char*, 14> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
constexpr std::array<const char*, 5> kVowels{"a", "e", "i", "o", "u"};

struct EntityEntry {
  TokenSeq tokens;
  std::string type;
};

const std::vector<EntityEntry>& entity_table() {
  static const std::vector<EntityEntry> table = [] {
    std::vector<EntityEntry> out;
    const std::array<const char*, 6> first{"anna", "boris", "carla", "dmitri", "elena", "farid"};
    const std::array<const char*, 5> last{"okafor", "lindqvist", "moreau", "tanaka", "velasco"};
    for (std::size_t i = 0; i < first.size(); ++i) {
      out.push_back({{first[i], last[i % last.size()]}, "PERSON"});
    }
    for (const char* city : {"port", "lake", "north"}) {
      out.push_back({{city, "harrow"}, "GPE"});
    }
    out.push_back({{"velden"}, "GPE"});
    out.push_back({{"ostmark"}, "GPE"});
    for (const char* org : {"quill", "meridian", "halcyon"}) {
      out.push_back({{org, "systems"}, "ORG"});
    }
    out.push_back({{"the", "river", "council"}, "ORG"});
    return out;
  }();
  return table;
}

// Sentence lengths (including the final period) that add up to `total`.
std::vector<std::size_t> split_lengths(Rng& rng, std::size_t total, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out;
  std::size_t remaining = total;
  while (remaining > 0) {
    auto s = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
    if (remaining < s + lo) {
      s = remaining;
    }
    out.push_back(s);
    remaining -= s;
  }
  return out;
}

TokenSeq random_words(Rng& rng, std::size_t n, std::size_t pool, std::size_t offset = 0) {
  TokenSeq out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(word(offset + static_cast<std::size_t>(rng.below(pool))));
  }
  return out;
}

// Fills `n` slots with words, occasionally splicing in an entity.
TokenSeq news_words(Rng& rng, std::size_t n, double entity_rate) {
  TokenSeq out;
  const auto& entities = entity_table();
  while (out.size() < n) {
    if (rng.uniform() < entity_rate) {
      const auto& e = entities[static_cast<std::size_t>(rng.below(entities.size()))];
      if (out.size() + e.tokens.size() <= n) {
        out.insert(out.end(), e.tokens.begin(), e.tokens.end());
        continue;
      }
    }
    out.push_back(word(static_cast<std::size_t>(rng.below(300))));
  }
  return out;
}

std::string join_sentences(const std::vector<TokenSeq>& sentences) {
  TokenSeq flat;
  for (const auto& s : sentences) {
    flat.insert(flat.end(), s.begin(), s.end());
  }
  return detokenize(flat);
}

} // namespace

std::string word(std::size_t index) {
  // Two or three CV syllables; the first few thousand indices are distinct.
  std::string out;
  std::size_t x = index;
  const std::size_t syllables = index < 70 * 70 ? 2 : 3;
  for (std::size_t s = 0; s < syllables; ++s) {
    out += kOnsets[x % kOnsets.size()];
    x /= kOnsets.size();
    out += kVowels[x % kVowels.size()];
    x /= kVowels.size();
  }
  if (x > 0) {
    out += std::to_string(x);
  }
  return out;
}

std::vector<Example> length_task(const LengthTaskOptions& options) {
  if (options.min_doc_tokens < 8 || options.max_doc_tokens < options.min_doc_tokens) {
    throw Error("length_task: bad document length range");
  }
  if (options.summary_lengths.empty() || options.vocab_words == 0) {
    throw Error("length_task: empty summary length set or word pool");
  }
  Rng rng(options.seed);
  std::vector<Example> out;
  out.reserve(options.n_examples);
  for (std::size_t i = 0; i < options.n_examples; ++i) {
    const auto total = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(options.min_doc_tokens),
                                                            static_cast<std::int64_t>(options.max_doc_tokens)));
    TokenSeq tokens;
    for (auto len : split_lengths(rng, total, 6, 12)) {
      auto words = random_words(rng, len - 1, options.vocab_words);
      tokens.insert(tokens.end(), words.begin(), words.end());
      tokens.push_back(".");
    }
    const auto k = std::min(options.summary_lengths[static_cast<std::size_t>(rng.below(options.summary_lengths.size()))],
                            tokens.size());
    const TokenSeq summary(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(k));
    out.push_back(Example::from_text("len-" + std::to_string(i), detokenize(tokens), detokenize(summary)));
  }
  return out;
}

Example oracle_case(Rng& rng, std::size_t max_sentences, const std::string& id) {
  if (max_sentences < 2) {
    throw Error("oracle_case: max_sentences must be >= 2");
  }
  const auto n = static_cast<std::size_t>(rng.between(2, static_cast<std::int64_t>(max_sentences)));
  std::vector<TokenSeq> sentences;
  for (std::size_t s = 0; s < n; ++s) {
    auto words = random_words(rng, static_cast<std::size_t>(rng.between(4, 10)), 25);
    words.push_back(".");
    sentences.push_back(std::move(words));
  }
  std::vector<TokenSeq> summary;
  const auto picks = static_cast<std::size_t>(rng.between(1, 3));
  for (std::size_t p = 0; p < picks; ++p) {
    auto sentence = sentences[static_cast<std::size_t>(rng.below(n))];
    for (std::size_t t = 0; t + 1 < sentence.size(); ++t) {
      const double r = rng.uniform();
      if (r < 0.15) {
        sentence[t] = word(100 + static_cast<std::size_t>(rng.below(50)));
      } else if (r < 0.3) {
        sentence[t] = word(static_cast<std::size_t>(rng.below(25)));
      }
    }
    if (sentence.size() > 4 && rng.uniform() < 0.3) {
      sentence.erase(sentence.begin() + static_cast<std::ptrdiff_t>(rng.below(sentence.size() - 1)));
    }
    summary.push_back(std::move(sentence));
  }
  return Example::from_text(id, join_sentences(sentences), join_sentences(summary));
}

NewsCorpus news_corpus(const NewsCorpusOptions& options) {
  if (options.length_spread >= options.mean_summary_length || options.mean_summary_length < 8) {
    throw Error("news_corpus: length spread must be smaller than the mean, and the mean at least 8");
  }
  Rng rng(options.seed);
  NewsCorpus corpus;

  // Symmetric pairs around the mean keep the sample mean exact.
  for (std::size_t i = 0; i + 1 < options.n_examples; i += 2) {
    const auto d = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(options.length_spread)));
    corpus.summary_lengths.push_back(options.mean_summary_length + d);
    corpus.summary_lengths.push_back(options.mean_summary_length - d);
  }
  if (corpus.summary_lengths.size() < options.n_examples) {
    corpus.summary_lengths.push_back(options.mean_summary_length);
  }
  for (std::size_t i = corpus.summary_lengths.size(); i-- > 1;) {
    std::swap(corpus.summary_lengths[i], corpus.summary_lengths[static_cast<std::size_t>(rng.below(i + 1))]);
  }

  for (std::size_t i = 0; i < options.n_examples; ++i) {
    std::vector<TokenSeq> doc;
    const auto n_doc = static_cast<std::size_t>(rng.between(8, 18));
    for (std::size_t s = 0; s < n_doc; ++s) {
      auto words = news_words(rng, static_cast<std::size_t>(rng.between(8, 22)), 0.08);
      words.push_back(".");
      doc.push_back(std::move(words));
    }

    std::vector<TokenSeq> summary;
    for (auto len : split_lengths(rng, corpus.summary_lengths[i], 7, 16)) {
      const auto words_needed = len - 1;
      TokenSeq sentence;
      const double style = rng.uniform();
      if (style < 0.5) {
        // Extractive: a document sentence, cut or padded to fit.
        const auto& src = doc[static_cast<std::size_t>(rng.below(doc.size()))];
        sentence.assign(src.begin(), src.end() - 1);
        sentence.resize(std::min(sentence.size(), words_needed));
        auto pad = news_words(rng, words_needed - sentence.size(), 0.1);
        sentence.insert(sentence.end(), pad.begin(), pad.end());
      } else if (style < 0.8) {
        // Paraphrase: document words with some substitutions.
        const auto& src = doc[static_cast<std::size_t>(rng.below(doc.size()))];
        for (std::size_t t = 0; t < words_needed; ++t) {
          sentence.push_back(t + 1 < src.size() && rng.uniform() < 0.7 ? src[t]
                                                                      : word(static_cast<std::size_t>(rng.below(300))));
        }
      } else {
        sentence = news_words(rng, words_needed, 0.15);
      }
      sentence.push_back(".");
      summary.push_back(std::move(sentence));
    }
    corpus.examples.push_back(
        Example::from_text("news-" + std::to_string(i), join_sentences(doc), join_sentences(summary)));
  }

  for (const auto& e : entity_table()) {
    corpus.lexicon += detokenize(e.tokens) + "\t" + e.type + "\n";
  }
  return corpus;
}

} // namespace lotus::synthetic
