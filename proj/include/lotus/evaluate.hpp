#pragma once

#include "lotus/corpus.hpp"
#include "lotus/decode.hpp"
#include "lotus/prompts.hpp"
#include "lotus/rouge.hpp"
#include "lotus/seqmodel.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lotus {

enum class RougeMode { FullF1, LimitedLengthRecall };

RougeMode parse_rouge_mode(std::string_view name);

struct EvalReport {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;
  std::map<std::string, double> mad; // keyed by attribute name
  std::optional<double> control_recall;
  std::optional<double> bin_compliance;
  std::size_t n_examples = 0;
};

struct GenerationPair {
  TokenSeq generated;
  TokenSeq reference;
};

// Mean per-pair ROUGE-1/2/L. In limited-length mode the candidate is cut to
// the reference length and recall is the reported number.
EvalReport rouge_report(std::span<const GenerationPair> pairs, RougeMode mode = RougeMode::FullF1);

// Mean absolute deviation between requested and realized values.
double mad(std::span<const double> requested, std::span<const double> realized);

struct RealizedAttributes {
  std::size_t length = 0;
  double abstractiveness = 100.0; // raw, unbinned
  std::size_t n_sentences = 0;
};

RealizedAttributes realized_attributes(std::span<const Token> generated, const Document& source);

// Fraction of requested items (keywords or entity surfaces) whose tokens occur
// contiguously in the generation. Matching ignores ASCII case.
double control_recall(std::span<const std::string> requested, std::span<const Token> generated);

// Fraction of (requested, realized) pairs with |realized - requested| < tolerance.
double bin_compliance(std::span<const double> requested, std::span<const double> realized, double tolerance = 5.0);

struct DecodeOptions {
  std::size_t beam = 4; // 1 selects greedy decoding
  std::size_t max_steps = 64;
  double length_norm = 1.0;
};

// Summaries for each document under one control request, in input order.
std::vector<TokenSeq> generate_summaries(const Seq2SeqModel& model, const Vocab& vocab,
                                         std::span<const Document> documents, const Prompt& prompt,
                                         const DecodeOptions& options);

struct SweepRow {
  double value = 0.0;
  double mean_attribute = 0.0;
  double mean_rouge2 = 0.0;
  double bin_compliance = 0.0;
};

// For each requested value of a numeric control kind, generates for every
// example and reports the mean realized attribute and mean ROUGE-2 F1.
std::vector<SweepRow> control_sweep(const Seq2SeqModel& model, const Vocab& vocab, std::span<const Example> examples,
                                    ControlKind kind, std::span<const double> values, const DecodeOptions& options);

// The realized attribute matching a numeric control kind.
double attribute_for(ControlKind kind, const RealizedAttributes& attrs);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report);
std::string sweep_csv(std::span<const SweepRow> rows);
std::string sweep_table(std::span<const SweepRow> rows);

} // namespace lotus
