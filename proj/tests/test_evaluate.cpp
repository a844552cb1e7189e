#include "lotus/error.hpp"
#include "lotus/evaluate.hpp"
#include "lotus/rng.hpp"
#include "lotus/signals.hpp"
#include "lotus/synthetic.hpp"

#include <doctest.h>

#include <json.hpp>

#include <cmath>

using namespace lotus;

TEST_CASE("rouge_report") {
  const std::vector<GenerationPair> same{{tokenize("a b c"), tokenize("a b c")}, {tokenize("x y"), tokenize("x y")}};
  const auto r = rouge_report(same);
  CHECK(r.rouge1.f1 == 1.0);
  CHECK(r.rouge2.f1 == 1.0);
  CHECK(r.rougeL.f1 == 1.0);
  CHECK(r.n_examples == 2);

  const std::vector<GenerationPair> one{{tokenize("the cat sat"), tokenize("the cat ate")}};
  const auto single = rouge_report(one);
  CHECK(single.rouge1.f1 == rouge_n(one[0].generated, one[0].reference, 1).f1);
  CHECK(single.rougeL.recall == rouge_l(one[0].generated, one[0].reference).recall);

  // Hand-scored: R-1 F1 of the three pairs is 2/3, 1/2 and 0.
  const std::vector<GenerationPair> three{{tokenize("the cat sat"), tokenize("the cat ate")},
                                          {tokenize("a b"), tokenize("a c")},
                                          {tokenize("p"), tokenize("q")}};
  CHECK(rouge_report(three).rouge1.f1 == doctest::Approx((2.0 / 3.0 + 0.5 + 0.0) / 3.0));

  const std::vector<GenerationPair> padded{{tokenize("a b c junk junk"), tokenize("a b c")}};
  CHECK(rouge_report(padded, RougeMode::LimitedLengthRecall).rouge1.recall == 1.0);
  CHECK_THROWS_AS(rouge_report(std::vector<GenerationPair>{}), Error);
}

TEST_CASE("mad") {
  const std::vector<double> a{10}, b{13};
  CHECK(mad(a, b) == 3.0);
  CHECK(mad(a, a) == 0.0);
  CHECK_THROWS_AS(mad(a, std::vector<double>{1, 2}), Error);

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(1 + rng.below(10)), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<double>(rng.below(100));
      y[i] = static_cast<double>(rng.below(100));
    }
    CHECK(mad(x, y) == mad(y, x));
    auto xs = x, ys = y;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xs[i] += 7;
      ys[i] += 7;
    }
    CHECK(mad(xs, ys) == mad(x, y));
  }
}

TEST_CASE("realized_attributes") {
  const auto doc = Document::from_text("d", "The show returned today. Fans cheered.");
  const auto verbatim = realized_attributes(tokenize("the show returned today ."), doc);
  CHECK(verbatim.abstractiveness == doctest::Approx(0.0));
  CHECK(verbatim.length == 5);
  CHECK(verbatim.n_sentences == 1);

  const auto two = realized_attributes(tokenize("a b c d e . f g h i j k"), doc);
  CHECK(two.length == 12);
  CHECK(two.n_sentences == 2);

  const auto empty = realized_attributes(TokenSeq{}, doc);
  CHECK(empty.length == 0);
  CHECK(empty.n_sentences == 0);
  CHECK(empty.abstractiveness == 100.0);

  // Gold summaries reproduce the annotation's raw values.
  synthetic::NewsCorpusOptions o;
  o.n_examples = 30;
  const auto corpus = synthetic::news_corpus(o);
  const auto anns = annotate_corpus(corpus.examples, {});
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto r = realized_attributes(corpus.examples[i].summary, corpus.examples[i].document);
    CHECK(r.length == anns[i].length);
    CHECK(r.n_sentences == anns[i].signals.n_sentences);
    CHECK(r.abstractiveness == anns[i].abstractiveness_raw);
  }
}

TEST_CASE("control_recall") {
  const auto gen = tokenize("Bob went to the barker show");
  CHECK(control_recall(std::vector<std::string>{"bob", "show"}, gen) == 1.0);
  CHECK(control_recall(std::vector<std::string>{"alice"}, gen) == 0.0);
  CHECK(control_recall(std::vector<std::string>{"bob", "barker-show"}, tokenize("bob says hi")) == 0.5);
  CHECK(control_recall(std::vector<std::string>{"Barker Show"}, gen) == 1.0);
  CHECK(control_recall(std::vector<std::string>{"show barker"}, gen) == 0.0);
  CHECK_THROWS_AS(control_recall(std::vector<std::string>{}, gen), Error);

  // Appending tokens never lowers recall.
  Rng rng(2);
  const std::vector<std::string> pool{"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> req{pool[rng.below(4)] + " " + pool[rng.below(4)], pool[rng.below(4)]};
    TokenSeq g;
    for (int i = 0; i < 5; ++i) {
      g.push_back(pool[rng.below(4)]);
    }
    const double before = control_recall(req, g);
    g.push_back(pool[rng.below(4)]);
    CHECK(control_recall(req, g) >= before);
  }
}

TEST_CASE("bin compliance and report formatting") {
  const std::vector<double> want{10, 20, 30}, got{12, 26, 29};
  CHECK(bin_compliance(want, got) == doctest::Approx(2.0 / 3.0));

  EvalReport r;
  r.n_examples = 2;
  r.mad["length"] = 1.5;
  r.control_recall = 0.5;
  const auto j = nlohmann::json::parse(report_json(r));
  CHECK(j["mad"]["length"] == 1.5);
  CHECK(j["bin_compliance"].is_null());
  CHECK(report_table(r).find("MAD length") != std::string::npos);

  const std::vector<SweepRow> rows{{50, 48.0, 0.1, 0.9}, {55, 53.5, 0.12, 0.8}};
  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind("value,mean_attribute,mean_rouge2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("control_sweep on an untrained model") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.d_ff = 16;
  cfg.max_src_len = 40;
  cfg.max_tgt_len = 10;
  synthetic::LengthTaskOptions o;
  o.n_examples = 3;
  const auto examples = synthetic::length_task(o);
  auto vocab = build_vocab(examples, 1, std::vector<TokenSeq>{tokenize("summarize with length 10 20 :")});
  cfg.vocab_size = vocab.size();
  Seq2SeqModel model(cfg);
  DecodeOptions d;
  d.max_steps = 6;
  const std::vector<double> values{20, 10};
  const auto rows = control_sweep(model, vocab, std::span(examples).first(1), ControlKind::Length, values, d);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == 20);
  CHECK(rows[1].value == 10);
  CHECK(rows[0].mean_attribute <= 6);
  CHECK_THROWS_AS(control_sweep(model, vocab, examples, ControlKind::Keywords, values, d), Error);
  CHECK_THROWS_AS(control_sweep(model, vocab, examples, ControlKind::Length, std::vector<double>{}, d), Error);
}
