#include "lotus/error.hpp"
#include "lotus/rouge.hpp"
#include "lotus/signals.hpp"
#include "lotus/synthetic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace lotus;

namespace {

// Independent scorer built directly on rouge_n.
double subset_score(const Document& doc, const std::vector<std::size_t>& idx, const TokenSeq& summary) {
  TokenSeq cand;
  for (auto i : idx) {
    cand.insert(cand.end(), doc.sentences[i].begin(), doc.sentences[i].end());
  }
  return 0.5 * (rouge_n(cand, summary, 1).f1 + rouge_n(cand, summary, 2).f1);
}

double exhaustive_best(const Document& doc, const TokenSeq& summary) {
  const auto n = doc.sentences.size();
  double best = 0.0;
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) {
        idx.push_back(i);
      }
    }
    best = std::max(best, subset_score(doc, idx, summary));
  }
  return best;
}

} // namespace

TEST_CASE("extractive_oracle basic cases") {
  const auto doc = Document::from_text("d", "The cat sat down. A dog barked loudly. Birds sing.");
  SUBCASE("verbatim sentence") {
    const auto sel = extractive_oracle(doc, tokenize("A dog barked loudly."));
    CHECK(sel.indices == std::vector<std::size_t>{1});
    CHECK(sel.score == doctest::Approx(1.0));
  }
  SUBCASE("no overlap") {
    const auto sel = extractive_oracle(doc, tokenize("zebras run"));
    CHECK(sel.indices.empty());
    CHECK(sel.score == 0.0);
  }
  SUBCASE("score matches the independent scorer") {
    const auto summary = tokenize("the cat barked . birds sing loudly");
    const auto sel = extractive_oracle(doc, summary);
    CHECK(sel.score == doctest::Approx(subset_score(doc, sel.indices, summary)).epsilon(1e-12));
    CHECK(std::is_sorted(sel.indices.begin(), sel.indices.end()));
  }
  CHECK_THROWS_AS(extractive_oracle(doc, TokenSeq{}), Error);
}

TEST_CASE("greedy oracle never beats exhaustive search and usually matches it") {
  Rng rng(77);
  int matches = 0;
  const int cases = 200;
  for (int i = 0; i < cases; ++i) {
    const auto ex = synthetic::oracle_case(rng, 8, "o" + std::to_string(i));
    const auto greedy = extractive_oracle(ex.document, ex.summary);
    const double best = exhaustive_best(ex.document, ex.summary);
    CHECK(greedy.score <= best + 1e-12);
    matches += std::abs(greedy.score - best) <= 1e-12 ? 1 : 0;
  }
  CHECK(matches >= 180);
}

TEST_CASE("bins") {
  CHECK(length_bin(TokenSeq(7, "x")) == 5);
  CHECK(length_bin(TokenSeq(5, "x")) == 5);
  CHECK(length_bin(TokenSeq(10, "x")) == 10);
  CHECK(length_bin(TokenSeq(98, "x")) == 95);
  CHECK_THROWS_AS(length_bin(TokenSeq{}), Error);
  CHECK(bin5(0.0) == 0);
  CHECK(bin5(4.999) == 0);
  CHECK(bin5(100.0 * (1.0 - 0.7)) == 30); // 29.999999999999996 in floating point
  CHECK(bin5(100.0) == 100);

  const auto doc = Document::from_text("d", "Alpha beta gamma. Delta epsilon.");
  CHECK(abstractiveness(doc, tokenize("alpha beta gamma .")) == 0);
  CHECK(abstractiveness(doc, tokenize("nothing shared")) == 100);
  CHECK(abstractiveness_raw(doc, tokenize("nothing shared")) == 100.0);
}

TEST_CASE("count_sentences") {
  CHECK(count_sentences(segment_sentences(tokenize("one sentence"))) == 1);
  CHECK(count_sentences(segment_sentences(tokenize("a . b ."))) == 2);
}

TEST_CASE("lcs_alignment and keywords") {
  const auto summary = tokenize("bob barker returned to the show");
  const std::vector<TokenSeq> oracle{tokenize("bob barker hosted the show")};
  const std::unordered_set<Token> stop{"to", "the"};
  CHECK(extract_keywords(summary, oracle, stop) == TokenSeq{"bob", "barker", "show"});

  const auto same = tokenize("red fox red hen");
  CHECK(extract_keywords(same, std::vector<TokenSeq>{same}, {}) == TokenSeq{"red", "fox", "hen"});
  CHECK(extract_keywords(summary, std::vector<TokenSeq>{tokenize("nothing in common")}, {}).empty());

  // Leftmost match in the oracle sentence.
  const auto a = tokenize("x y x");
  const auto b = tokenize("x");
  const auto pairs = lcs_alignment(a, b);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].first == 0);
}

TEST_CASE("dictionary tagger and entities") {
  auto tagger = DictionaryTagger::parse("# comment\nbob barker\tPERSON\nnew york\tGPE\nnew york times\tORG\n");
  CHECK(tagger.size() == 3);
  const auto ents = extract_entities(tokenize("bob barker read the new york times in new york . bob barker"), tagger);
  REQUIRE(ents.size() == 3);
  CHECK(ents[0] == Entity{"PERSON", {"bob", "barker"}});
  CHECK(ents[1] == Entity{"ORG", {"new", "york", "times"}});
  CHECK(ents[2] == Entity{"GPE", {"new", "york"}});

  CHECK(extract_entities(tokenize("bob barker"), DictionaryTagger{}).empty());

  // Longest match agrees with exhaustive span enumeration at each start.
  const auto tokens = tokenize("new york times new york new");
  const auto spans = tagger.tag(tokens);
  std::size_t prev_end = 0;
  for (const auto& s : spans) {
    CHECK(s.begin >= prev_end);
    prev_end = s.end;
    std::size_t longest = 0;
    for (std::size_t e = s.begin + 1; e <= tokens.size(); ++e) {
      const auto surface = detokenize(TokenSeq(tokens.begin() + static_cast<std::ptrdiff_t>(s.begin),
                                               tokens.begin() + static_cast<std::ptrdiff_t>(e)));
      if (surface == "new york" || surface == "new york times" || surface == "bob barker") {
        longest = e;
      }
    }
    CHECK(s.end == longest);
  }
  CHECK(spans.size() == 2);
}

TEST_CASE("sample_control_subset") {
  Rng one(1);
  const std::vector<std::string> single{"only"};
  CHECK(sample_control_subset<std::string>(single, one) == single);

  const std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng a(42), b(42);
  CHECK(sample_control_subset<int>(items, a) == sample_control_subset<int>(items, b));

  // n is uniform on 1..5, so each of 10 items is included with probability 0.3.
  Rng rng(2024);
  std::vector<int> counts(10, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const auto s = sample_control_subset<int>(items, rng);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    for (int x : s) {
      ++counts[static_cast<std::size_t>(x)];
    }
  }
  const double expected = draws * 0.3;
  const double sigma = std::sqrt(draws * 0.3 * 0.7);
  for (int c : counts) {
    CHECK(std::abs(c - expected) < 3 * sigma);
  }
  CHECK_THROWS_AS(sample_control_subset<int>(std::vector<int>{}, rng), Error);
}

TEST_CASE("annotation pipeline on a synthetic news corpus") {
  synthetic::NewsCorpusOptions opts;
  opts.n_examples = 200;
  opts.seed = 8;
  const auto corpus = synthetic::news_corpus(opts);
  const auto tagger = DictionaryTagger::parse(corpus.lexicon);
  AnnotatorOptions options;
  options.tagger = &tagger;
  const auto anns = annotate_corpus(corpus.examples, options);
  REQUIRE(anns.size() == corpus.examples.size());

  std::size_t planted_sentences = 0;
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& ex = corpus.examples[i];
    const auto& a = anns[i];
    CHECK(a.length == corpus.summary_lengths[i]);
    CHECK(a.signals.length_bin <= a.length);
    CHECK(a.length < a.signals.length_bin + 5);
    CHECK(a.signals.abstractiveness_bin == std::min<std::size_t>(100, 5 * static_cast<std::size_t>(std::floor(
                                                                          a.abstractiveness_raw / 5.0 + 1e-9))));
    planted_sentences += segment_sentences(ex.summary).size();
    CHECK(a.signals.n_sentences == ex.summary_sentences.size());
  }
  const auto stats = signal_statistics(anns);
  CHECK(stats.length == doctest::Approx(60.0));
  CHECK(stats.sentences == doctest::Approx(static_cast<double>(planted_sentences) / anns.size()));
  CHECK(stats.entities > 0.0);
  CHECK(format_statistics(stats).find("Length") != std::string::npos);

  // Serialized output is byte-identical across runs and parses back.
  const auto text = serialize_annotated(corpus.examples, anns);
  CHECK(text == serialize_annotated(corpus.examples, annotate_corpus(corpus.examples, options)));
  const auto parsed = parse_annotated(text);
  REQUIRE(parsed.size() == anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    CHECK(parsed[i].signals == anns[i].signals);
  }
}
