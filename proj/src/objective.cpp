#include "lotus/objective.hpp"

#include "lotus/error.hpp"

#include <algorithm>
#include <cmath>

namespace lotus {

namespace {

const double kLogFloor = std::log(kProbabilityFloor);

void check_pair(const DistributionSequence& a, const DistributionSequence& b, const char* what) {
  if (!a.probs.same_shape(b.probs)) {
    throw Error(std::string(what) + ": distribution shapes differ (" + std::to_string(a.length()) + "x" +
                std::to_string(a.vocab()) + " vs " + std::to_string(b.length()) + "x" + std::to_string(b.vocab()) +
                ")");
  }
}

void add_into(Matrix& dst, const Matrix& src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst.data[i] += scale * src.data[i];
  }
}

} // namespace

void LossWeights::validate() const {
  if (!std::isfinite(lambda1) || !std::isfinite(lambda2) || lambda1 < 0.0 || lambda2 < 0.0) {
    throw Error("loss weights must be finite and non-negative");
  }
}

LossWeights LossWeights::preset(std::string_view name) {
  if (name == "both") {
    return {1.0, 1.0};
  }
  if (name == "c_teacher_only") {
    return {1.0, 0.0};
  }
  if (name == "l_teacher_only") {
    return {0.0, 1.0};
  }
  if (name == "none") {
    return {0.0, 0.0};
  }
  throw Error("unknown loss-weight preset '" + std::string(name) +
              "' (expected both, c_teacher_only, l_teacher_only or none)");
}

double combine(const LossBreakdown& b, const LossWeights& w) {
  return b.nll_c + b.nll_l + w.lambda1 * b.cl_c_to_l + w.lambda2 * b.cl_l_to_c;
}

ScalarWithGrad nll(const DistributionSequence& dist, std::span<const TokenId> gold) {
  const auto t_len = dist.length();
  if (t_len == 0 || gold.empty()) {
    throw Error("nll: empty target sequence");
  }
  if (gold.size() != t_len) {
    throw Error("nll: gold length " + std::to_string(gold.size()) + " differs from distribution length " +
                std::to_string(t_len));
  }
  const double inv_t = 1.0 / static_cast<double>(t_len);
  ScalarWithGrad out;
  out.grad = Matrix(t_len, dist.vocab());
  double sum = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto g = gold[t];
    if (g < 0 || static_cast<std::size_t>(g) >= dist.vocab()) {
      throw Error("nll: gold token id out of range");
    }
    sum += std::max(dist.log_probs(t, static_cast<std::size_t>(g)), kLogFloor);
    const auto p = dist.probs.row(t);
    auto gr = out.grad.row(t);
    for (std::size_t v = 0; v < p.size(); ++v) {
      gr[v] = p[v] * inv_t;
    }
    gr[static_cast<std::size_t>(g)] -= inv_t;
  }
  out.value = -sum * inv_t;
  return out;
}

ScalarWithGrad kl_contrastive(const DistributionSequence& teacher, const DistributionSequence& student,
                              KlOptions options) {
  check_pair(teacher, student, "kl_contrastive");
  const auto t_len = student.length();
  const double scale = options.normalize_by_length && t_len > 0 ? 1.0 / static_cast<double>(t_len) : 1.0;
  ScalarWithGrad out;
  out.grad = Matrix(t_len, student.vocab());
  double sum = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    double row = 0.0;
    for (std::size_t v = 0; v < student.vocab(); ++v) {
      const double q = teacher.probs(t, v);
      if (q > 0.0) {
        const double log_q = std::max(teacher.log_probs(t, v), kLogFloor);
        const double log_p = std::max(student.log_probs(t, v), kLogFloor);
        row += q * (log_q - log_p);
      }
      out.grad(t, v) = scale * (student.probs(t, v) - q);
    }
    sum += row;
  }
  // Floating-point cancellation can leave a tiny negative residue.
  out.value = std::max(0.0, sum * scale);
  return out;
}

LotusLoss lotus_loss(const DistributionSequence& dist_c, const DistributionSequence& dist_l,
                     std::span<const TokenId> gold, const LossWeights& w, KlOptions options) {
  auto multi = multi_control_loss(std::span(&dist_c, 1), dist_l, gold, w, options);
  LotusLoss out;
  out.breakdown = multi.breakdown;
  out.grad_c = std::move(multi.grads_c.front());
  out.grad_l = std::move(multi.grad_l);
  return out;
}

MultiControlLoss multi_control_loss(std::span<const DistributionSequence> dists_c, const DistributionSequence& dist_l,
                                    std::span<const TokenId> gold, const LossWeights& w, KlOptions options) {
  if (dists_c.empty()) {
    throw Error("multi_control_loss: no control distributions");
  }
  w.validate();
  MultiControlLoss out;
  auto nll_l = nll(dist_l, gold);
  out.breakdown.nll_l = nll_l.value;
  out.grad_l = std::move(nll_l.grad);
  for (const auto& dist_c : dists_c) {
    check_pair(dist_c, dist_l, "multi_control_loss");
    auto nll_c = nll(dist_c, gold);
    out.breakdown.nll_c += nll_c.value;
    Matrix grad_c = std::move(nll_c.grad);
    // Controlled branch as teacher, latent as student, and the reverse.
    auto c_to_l = kl_contrastive(dist_c, dist_l, options);
    auto l_to_c = kl_contrastive(dist_l, dist_c, options);
    out.breakdown.cl_c_to_l += c_to_l.value;
    out.breakdown.cl_l_to_c += l_to_c.value;
    if (w.lambda1 != 0.0) {
      add_into(out.grad_l, c_to_l.grad, w.lambda1);
    }
    if (w.lambda2 != 0.0) {
      add_into(grad_c, l_to_c.grad, w.lambda2);
    }
    out.grads_c.push_back(std::move(grad_c));
  }
  out.breakdown.total = combine(out.breakdown, w);
  return out;
}

} // namespace lotus
