#include "lotus/rng.hpp"
#include "lotus/rouge.hpp"

#include <doctest.h>

#include <algorithm>

using namespace lotus;

namespace {

TokenSeq toks(std::initializer_list<const char*> words) {
  TokenSeq out;
  for (const char* w : words) {
    out.emplace_back(w);
  }
  return out;
}

} // namespace

TEST_CASE("rouge_n") {
  const auto a = toks({"the", "cat", "sat"});
  auto s = rouge_n(a, a, 2);
  CHECK(s.precision == 1.0);
  CHECK(s.recall == 1.0);
  CHECK(s.f1 == 1.0);

  s = rouge_n(toks({"a", "b"}), toks({"c", "d"}), 1);
  CHECK(s.f1 == 0.0);

  s = rouge_n(a, toks({"the", "cat", "ate"}), 1);
  CHECK(s.precision == doctest::Approx(2.0 / 3.0));
  CHECK(s.recall == doctest::Approx(2.0 / 3.0));
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0));

  // Clipping: repeated candidate tokens count at most as often as in the reference.
  s = rouge_n(toks({"a", "a", "a"}), toks({"a", "b"}), 1);
  CHECK(s.precision == doctest::Approx(1.0 / 3.0));
  CHECK(s.recall == doctest::Approx(0.5));

  CHECK(rouge_n(toks({"a"}), toks({"a", "b"}), 2).f1 == 0.0);
}

TEST_CASE("rouge_l") {
  const auto s = rouge_l(toks({"a", "b", "c", "d"}), toks({"a", "c", "b", "d"}));
  CHECK(s.precision == 0.75);
  CHECK(s.recall == 0.75);
  CHECK(rouge_l(TokenSeq{}, toks({"a"})).f1 == 0.0);
  CHECK(lcs_length(toks({"x", "y"}), toks({"x", "y"})) == 2);
}

TEST_CASE("rouge properties on random pairs") {
  Rng rng(21);
  const TokenSeq pool{"a", "b", "c", "d", "e"};
  auto draw = [&](std::size_t max_len) {
    TokenSeq out;
    const auto n = rng.below(max_len + 1);
    for (std::uint64_t i = 0; i < n; ++i) {
      out.push_back(pool[rng.below(pool.size())]);
    }
    return out;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = draw(10);
    const auto r = draw(10);
    for (std::size_t n = 1; n <= 2; ++n) {
      const auto fwd = rouge_n(c, r, n);
      const auto rev = rouge_n(r, c, n);
      CHECK(fwd.precision == rev.recall);
      CHECK(fwd.f1 == doctest::Approx(rev.f1));
      CHECK(fwd.f1 >= 0.0);
      CHECK(fwd.f1 <= 1.0);
    }
    auto cr = c;
    auto rr = r;
    std::reverse(cr.begin(), cr.end());
    std::reverse(rr.begin(), rr.end());
    CHECK(lcs_length(c, r) == lcs_length(cr, rr));
    CHECK(lcs_length(c, c) == c.size());

    // Appending a reference n-gram never lowers recall.
    if (!r.empty()) {
      auto longer = c;
      longer.push_back(r[rng.below(r.size())]);
      CHECK(rouge_n(longer, r, 1).recall >= rouge_n(c, r, 1).recall);
    }

    const auto lim = limited_length_recall(c, r, RougeMetric::Rouge2);
    const TokenSeq cut(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(std::min(c.size(), r.size())));
    CHECK(lim.recall == rouge_n(cut, r, 2).recall);
  }
}

TEST_CASE("limited_length_recall") {
  const auto ref = toks({"a", "b", "c"});
  CHECK(limited_length_recall(toks({"a", "b", "c", "x", "y"}), ref, RougeMetric::Rouge1).recall == 1.0);
  const auto shorter = toks({"a", "x"});
  CHECK(limited_length_recall(shorter, ref, RougeMetric::RougeL).recall == rouge_l(shorter, ref).recall);
}
