#pragma once

#include "lotus/objective.hpp"
#include "lotus/seqmodel.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace lotus {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t d_model = 8;
  std::size_t n_heads = 2;
  std::size_t n_layers = 1;
  std::size_t d_ff = 16;
  std::size_t vocab_size = 11;
  std::size_t src_len = 7;
  std::size_t tgt_len = 5;
  LossWeights weights{};
  double epsilon = 1e-4;
  double tolerance = 1e-3;
  // Scalars to check, drawn at random; 0 checks every scalar.
  std::size_t samples = 0;
};

struct GradcheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  std::string worst; // "name[index]" of the largest relative error
  // Largest |gradient| the contrastive terms send into their teacher branch.
  double teacher_leak = 0.0;

  bool passed() const { return failures == 0 && teacher_leak == 0.0; }
};

// |a - n| / max(|a|, |n|, 1e-6).
double gradcheck_relative_error(double analytic, double numeric);

// Builds a micro model and random control/latent sources, then compares the
// analytic gradient of the dual-prompt loss against central differences.
// Teacher distributions are frozen at the unperturbed parameters, matching the
// stop-gradient semantics of the contrastive terms.
GradcheckResult run_gradcheck(const GradcheckOptions& options);

} // namespace lotus
