#include "lotus/decode.hpp"

#include "lotus/error.hpp"

#include <algorithm>
#include <cmath>

namespace lotus {

IdSeq greedy_decode(const Seq2SeqModel& model, std::span<const TokenId> src, std::size_t max_steps) {
  if (max_steps == 0) {
    throw Error("greedy_decode: max_steps must be >= 1");
  }
  max_steps = std::min(max_steps, model.config().max_tgt_len);
  const auto enc = model.encode(src);
  IdSeq out;
  for (std::size_t step = 0; step < max_steps; ++step) {
    const auto lp = model.next_log_probs(enc, out);
    const auto best = static_cast<TokenId>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == Vocab::kEos) {
      break;
    }
    out.push_back(best);
  }
  return out;
}

double normalized_score(double log_prob, std::size_t length, double length_norm) {
  if (length == 0) {
    return log_prob;
  }
  return log_prob / std::pow(static_cast<double>(length), length_norm);
}

Hypothesis beam_search(const Seq2SeqModel& model, std::span<const TokenId> src, const BeamOptions& options) {
  if (options.beam == 0) {
    throw Error("beam_decode: beam width must be >= 1");
  }
  if (options.max_steps == 0) {
    throw Error("beam_decode: max_steps must be >= 1");
  }
  const auto max_steps = std::min(options.max_steps, model.config().max_tgt_len);
  const auto enc = model.encode(src);

  struct Candidate {
    double log_prob;
    TokenId token;
    std::size_t parent;
  };

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  auto finish = [&](Hypothesis h) {
    h.score = normalized_score(h.log_prob, h.length, options.length_norm);
    finished.push_back(std::move(h));
  };

  for (std::size_t step = 0; step < max_steps && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t p = 0; p < live.size(); ++p) {
      const auto lp = model.next_log_probs(enc, live[p].tokens);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        cands.push_back({live[p].log_prob + lp[v], static_cast<TokenId>(v), p});
      }
    }
    const auto keep = std::min(options.beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) {
                          return a.log_prob > b.log_prob;
                        }
                        if (a.token != b.token) {
                          return a.token < b.token;
                        }
                        return a.parent < b.parent;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.log_prob = c.log_prob;
      h.length = live[c.parent].length + 1;
      if (c.token == Vocab::kEos) {
        finish(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (finished.size() >= options.beam) {
      live.clear();
    }
  }
  for (auto& h : live) {
    finish(std::move(h));
  }
  // Earliest-finished hypothesis wins exact ties.
  auto best = std::max_element(finished.begin(), finished.end(),
                               [](const Hypothesis& a, const Hypothesis& b) { return a.score < b.score; });
  return *best;
}

IdSeq beam_decode(const Seq2SeqModel& model, std::span<const TokenId> src, const BeamOptions& options) {
  return beam_search(model, src, options).tokens;
}

} // namespace lotus
