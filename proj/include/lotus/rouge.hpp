#pragma once

#include "lotus/corpus.hpp"

#include <cstddef>
#include <span>

namespace lotus {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static RougeScore from_counts(double overlap, double candidate_total, double reference_total);
};

// Harmonic mean, 0 when p + r == 0.
double f1_score(double precision, double recall);

// Clipped n-gram overlap (ROUGE-N). Zero denominators give a zero score.
RougeScore rouge_n(std::span<const Token> candidate, std::span<const Token> reference, std::size_t n);

// Longest common subsequence length, O(|a| * |b|) time and O(min) memory.
std::size_t lcs_length(std::span<const Token> a, std::span<const Token> b);

RougeScore rouge_l(std::span<const Token> candidate, std::span<const Token> reference);

enum class RougeMetric { Rouge1, Rouge2, RougeL };

RougeScore rouge(std::span<const Token> candidate, std::span<const Token> reference, RougeMetric metric);

// Truncates the candidate to |reference| tokens before scoring; the recall
// field carries the reported value.
RougeScore limited_length_recall(std::span<const Token> candidate, std::span<const Token> reference,
                                 RougeMetric metric);

} // namespace lotus
