#pragma once

// Training losses. Every gradient returned here is taken with respect to the
// logits that produced the corresponding DistributionSequence, which is what
// Seq2SeqModel::backward consumes.

#include "lotus/corpus.hpp"
#include "lotus/matrix.hpp"
#include "lotus/seqmodel.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace lotus {

inline constexpr double kProbabilityFloor = 1e-12;

struct LossWeights {
  double lambda1 = 1.0; // controlled branch teaches the latent branch
  double lambda2 = 1.0; // latent branch teaches the controlled branch

  void validate() const;

  // Named presets: "both" (1, 1), "c_teacher_only" (1, 0), "l_teacher_only" (0, 1),
  // "none" (0, 0).
  static LossWeights preset(std::string_view name);
};

struct LossBreakdown {
  double nll_c = 0.0;
  double nll_l = 0.0;
  double cl_c_to_l = 0.0;
  double cl_l_to_c = 0.0;
  double total = 0.0;
};

struct ScalarWithGrad {
  double value = 0.0;
  Matrix grad;
};

// -(1/T) sum_t log p_t(gold_t). Gradient (p - onehot) / T.
ScalarWithGrad nll(const DistributionSequence& dist, std::span<const TokenId> gold);

struct KlOptions {
  // Divide the position sum by T. Off by default: positions are summed.
  bool normalize_by_length = false;
};

// sum_t KL(teacher_t || student_t). The teacher is a constant (stop
// gradient): only the student receives a gradient, (p_student - p_teacher).
ScalarWithGrad kl_contrastive(const DistributionSequence& teacher, const DistributionSequence& student,
                              KlOptions options = {});

struct LotusLoss {
  LossBreakdown breakdown;
  Matrix grad_c;
  Matrix grad_l;
};

LotusLoss lotus_loss(const DistributionSequence& dist_c, const DistributionSequence& dist_l,
                     std::span<const TokenId> gold, const LossWeights& w, KlOptions options = {});

struct MultiControlLoss {
  LossBreakdown breakdown;        // nll_c and both CL fields summed over controls
  std::vector<Matrix> grads_c;    // one per control prompt
  Matrix grad_l;
};

MultiControlLoss multi_control_loss(std::span<const DistributionSequence> dists_c, const DistributionSequence& dist_l,
                                    std::span<const TokenId> gold, const LossWeights& w, KlOptions options = {});

double combine(const LossBreakdown& b, const LossWeights& w);

} // namespace lotus
