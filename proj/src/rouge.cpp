#include "lotus/rouge.hpp"

#include "lotus/error.hpp"

#include <algorithm>
#include <map>
#include <vector>

namespace lotus {

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(std::span<const Token> seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    std::vector<std::string_view> gram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                       seq.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[std::move(gram)];
  }
  return counts;
}

} // namespace

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

RougeScore RougeScore::from_counts(double overlap, double candidate_total, double reference_total) {
  RougeScore s;
  s.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  s.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

RougeScore rouge_n(std::span<const Token> candidate, std::span<const Token> reference, std::size_t n) {
  if (n == 0) {
    throw Error("rouge_n: n must be >= 1");
  }
  const auto cand = count_ngrams(candidate, n);
  const auto ref = count_ngrams(reference, n);
  std::size_t overlap = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) {
      overlap += std::min(c, it->second);
    }
  }
  const auto cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  const auto ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  return RougeScore::from_counts(static_cast<double>(overlap), static_cast<double>(cand_total),
                                 static_cast<double>(ref_total));
}

std::size_t lcs_length(std::span<const Token> a, std::span<const Token> b) {
  if (a.size() < b.size()) {
    std::swap(a, b);
  }
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const Token> candidate, std::span<const Token> reference) {
  const auto l = lcs_length(candidate, reference);
  return RougeScore::from_counts(static_cast<double>(l), static_cast<double>(candidate.size()),
                                 static_cast<double>(reference.size()));
}

RougeScore rouge(std::span<const Token> candidate, std::span<const Token> reference, RougeMetric metric) {
  switch (metric) {
  case RougeMetric::Rouge1:
    return rouge_n(candidate, reference, 1);
  case RougeMetric::Rouge2:
    return rouge_n(candidate, reference, 2);
  case RougeMetric::RougeL:
    return rouge_l(candidate, reference);
  }
  throw Error("unknown ROUGE metric");
}

RougeScore limited_length_recall(std::span<const Token> candidate, std::span<const Token> reference,
                                 RougeMetric metric) {
  return rouge(candidate.first(std::min(candidate.size(), reference.size())), reference, metric);
}

} // namespace lotus
