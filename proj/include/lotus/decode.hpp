#pragma once

#include "lotus/seqmodel.hpp"

#include <cstddef>
#include <span>

namespace lotus {

// Appends the argmax token (lowest id on ties) until EOS or max_steps.
// EOS is not part of the result.
IdSeq greedy_decode(const Seq2SeqModel& model, std::span<const TokenId> src, std::size_t max_steps);

struct BeamOptions {
  std::size_t beam = 4;
  std::size_t max_steps = 64;
  double length_norm = 1.0;
};

struct Hypothesis {
  IdSeq tokens;           // without EOS
  double log_prob = 0.0;  // sum including the EOS step when finished
  std::size_t length = 0; // scored steps (tokens, plus one for EOS)
  double score = 0.0;     // log_prob / length^length_norm
};

// Length-normalized score used to rank finished hypotheses.
double normalized_score(double log_prob, std::size_t length, double length_norm);

// Standard beam search over log-probabilities. Each step expands every live
// hypothesis by every token and keeps the `beam` best candidates, ordered by
// accumulated log-probability, then token id, then parent order. Candidates
// ending in EOS move to the finished pool; live hypotheses still open after
// max_steps are finished as they are. Search stops once `beam` hypotheses
// have finished. Returns the finished hypothesis with the best normalized
// score (earliest finished wins ties).
Hypothesis beam_search(const Seq2SeqModel& model, std::span<const TokenId> src, const BeamOptions& options);

IdSeq beam_decode(const Seq2SeqModel& model, std::span<const TokenId> src, const BeamOptions& options);

} // namespace lotus
