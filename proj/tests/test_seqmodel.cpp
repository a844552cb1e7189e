#include "lotus/autograd.hpp"
#include "lotus/decode.hpp"
#include "lotus/error.hpp"
#include "lotus/gradcheck.hpp"
#include "lotus/objective.hpp"
#include "lotus/rng.hpp"
#include "lotus/seqmodel.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace lotus;

namespace {

ModelConfig tiny_config(std::size_t vocab = 11, std::uint64_t seed = 0) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers_enc = 1;
  c.n_layers_dec = 1;
  c.d_ff = 16;
  c.max_src_len = 16;
  c.max_tgt_len = 8;
  c.vocab_size = vocab;
  c.seed = seed;
  return c;
}

IdSeq random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  IdSeq out(n);
  for (auto& x : out) {
    x = static_cast<TokenId>(4 + rng.below(vocab - 4));
  }
  return out;
}

// Enumerates every sequence up to `steps` tokens, scoring completed (EOS or
// horizon) hypotheses the same way the beam search does.
void exhaustive(const Seq2SeqModel& model, const EncodedSource& enc, IdSeq& prefix, double logp, std::size_t steps,
                double norm, double& best) {
  const auto lp = model.next_log_probs(enc, prefix);
  for (std::size_t v = 0; v < lp.size(); ++v) {
    if (static_cast<TokenId>(v) == Vocab::kEos) {
      best = std::max(best, normalized_score(logp + lp[v], prefix.size() + 1, norm));
      continue;
    }
    prefix.push_back(static_cast<TokenId>(v));
    if (prefix.size() == steps) {
      best = std::max(best, normalized_score(logp + lp[v], prefix.size(), norm));
    } else {
      exhaustive(model, enc, prefix, logp + lp[v], steps, norm, best);
    }
    prefix.pop_back();
  }
}

} // namespace

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.d_ff = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("forward produces valid distributions deterministically") {
  Seq2SeqModel model(tiny_config());
  Rng rng(1);
  const auto src = random_ids(rng, 10, 11);
  const auto tgt = random_ids(rng, 6, 11);
  const auto a = model.forward(src, tgt);
  for (std::size_t t = 0; t < a.dist.length(); ++t) {
    double sum = 0.0;
    for (std::size_t v = 0; v < a.dist.vocab(); ++v) {
      CHECK(a.dist.probs(t, v) > 0.0);
      sum += a.dist.probs(t, v);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  const auto b = model.forward(src, tgt);
  CHECK(a.dist.log_probs == b.dist.log_probs);

  IdSeq bad = src;
  bad[0] = 11;
  CHECK_THROWS_AS(model.forward(bad, tgt), Error);
  CHECK_THROWS_AS(model.forward(IdSeq(17, 5), tgt), Error);
}

TEST_CASE("seeded initialization is reproducible") {
  CHECK(Seq2SeqModel(tiny_config(11, 5)).params() == Seq2SeqModel(tiny_config(11, 5)).params());
  CHECK_FALSE(Seq2SeqModel(tiny_config(11, 5)).params() == Seq2SeqModel(tiny_config(11, 6)).params());
}

TEST_CASE("trailing padding is masked") {
  Seq2SeqModel model(tiny_config());
  Rng rng(2);
  auto src = random_ids(rng, 6, 11);
  const auto tgt = random_ids(rng, 4, 11);
  const auto base = model.forward(src, tgt).dist.probs;
  src.push_back(Vocab::kPad);
  src.push_back(Vocab::kPad);
  const auto padded = model.forward(src, tgt).dist.probs;
  for (std::size_t i = 0; i < base.data.size(); ++i) {
    CHECK(padded.data[i] == doctest::Approx(base.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("decoder is causal") {
  Seq2SeqModel model(tiny_config());
  Rng rng(3);
  const auto src = random_ids(rng, 7, 11);
  auto tgt = random_ids(rng, 6, 11);
  const auto before = model.forward(src, tgt).dist.probs;
  const std::size_t t = 2;
  tgt[t] = tgt[t] == 4 ? 5 : 4;
  const auto after = model.forward(src, tgt).dist.probs;
  // Row r reads target tokens < r, so only rows > t may change.
  for (std::size_t r = 0; r <= t; ++r) {
    for (std::size_t v = 0; v < 11; ++v) {
      CHECK(after(r, v) == before(r, v));
    }
  }
  bool changed = false;
  for (std::size_t v = 0; v < 11; ++v) {
    changed = changed || after(t + 1, v) != before(t + 1, v);
  }
  CHECK(changed);
}

TEST_CASE("backward basics") {
  Seq2SeqModel model(tiny_config());
  Rng rng(4);
  const auto src = random_ids(rng, 5, 11);
  const auto tgt = random_ids(rng, 4, 11);
  auto pass = model.forward(src, tgt);
  auto grads = model.params().zeros_like();
  model.backward(pass, Matrix(4, 11), grads);
  CHECK(grads.squared_norm() == 0.0);

  auto pass2 = model.forward(src, tgt);
  CHECK_THROWS_AS(model.backward(pass2, Matrix(3, 11), grads), Error);
}

TEST_CASE("NLL gradient vanishes at a confident model") {
  auto cfg = tiny_config();
  Seq2SeqModel model(cfg);
  // Make the output layer emit token 5 regardless of input.
  auto& b = model.params()["out.b"];
  b.fill(0.0);
  b(0, 5) = 60.0;
  model.params()["out.w"].fill(0.0);
  const IdSeq src{4, 6, 7};
  const IdSeq tgt{5, 5, 5};
  auto pass = model.forward(src, tgt);
  const auto loss = nll(pass.dist, tgt);
  CHECK(loss.value < 1e-20);
  auto grads = model.params().zeros_like();
  model.backward(pass, loss.grad, grads);
  CHECK(std::sqrt(grads.squared_norm()) < 1e-20);
}

TEST_CASE("finite-difference gradient checks") {
  SUBCASE("every scalar of the micro model") {
    GradcheckOptions opts;
    const auto r = run_gradcheck(opts);
    CHECK(r.checked > 1000);
    CHECK(r.failures == 0);
    CHECK(r.max_rel_error < 1e-3);
    CHECK(r.teacher_leak == 0.0);
  }
  SUBCASE("50 random scalars of a d_model=16 model") {
    GradcheckOptions opts;
    opts.d_model = 16;
    opts.n_heads = 4;
    opts.d_ff = 32;
    opts.vocab_size = 20;
    opts.samples = 50;
    opts.seed = 9;
    const auto r = run_gradcheck(opts);
    CHECK(r.checked == 50);
    CHECK(r.failures == 0);
  }
  SUBCASE("other loss weights") {
    for (auto w : {LossWeights{0, 0}, LossWeights{1, 0}, LossWeights{0, 1}, LossWeights{0.5, 2}}) {
      GradcheckOptions opts;
      opts.weights = w;
      opts.seed = 3;
      opts.samples = 200;
      CHECK(run_gradcheck(opts).passed());
    }
  }
}

TEST_CASE("greedy decoding") {
  Seq2SeqModel model(tiny_config());
  Rng rng(5);
  const auto src = random_ids(rng, 6, 11);
  const auto out = greedy_decode(model, src, 5);
  CHECK(out.size() <= 5);
  CHECK(out == beam_decode(model, src, BeamOptions{1, 5, 1.0}));

  auto eos_model = Seq2SeqModel(tiny_config());
  eos_model.params()["out.w"].fill(0.0);
  auto& b = eos_model.params()["out.b"];
  b.fill(0.0);
  b(0, Vocab::kEos) = 10.0;
  CHECK(greedy_decode(eos_model, src, 5).empty());
}

TEST_CASE("beam search dominates greedy and matches exhaustive search") {
  auto cfg = tiny_config(5, 1);
  Seq2SeqModel model(cfg);
  Rng rng(6);
  for (auto& m : model.params().values) {
    for (auto& x : m.data) {
      x += rng.uniform(-0.5, 0.5);
    }
  }
  const IdSeq src{4, 4, 3, 4};
  const auto enc = model.encode(src);
  const std::size_t steps = 4;
  for (double norm : {0.0, 1.0}) {
    const auto beam = beam_search(model, src, BeamOptions{625, steps, norm});
    double best = -std::numeric_limits<double>::infinity();
    IdSeq prefix;
    exhaustive(model, enc, prefix, 0.0, steps, norm, best);
    CHECK(beam.score == doctest::Approx(best).epsilon(1e-12));

    const auto greedy = beam_search(model, src, BeamOptions{1, steps, norm});
    const auto wide = beam_search(model, src, BeamOptions{4, steps, norm});
    CHECK(wide.score >= greedy.score - 1e-12);
  }
}

TEST_CASE("autograd tape rejects mismatched gradient buffers") {
  ad::Tape tape;
  Matrix w(2, 2);
  w.fill(1.0);
  const auto p = tape.parameter(w, 0);
  const auto x = tape.constant(Matrix(3, 2));
  const auto y = tape.matmul(x, p);
  std::vector<Matrix> grads{Matrix(3, 3)};
  Matrix seed(3, 2);
  CHECK_THROWS_AS(tape.backward(y, seed, grads), Error);
}
