#include "lotus/gradcheck.hpp"

#include "lotus/error.hpp"
#include "lotus/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lotus {

namespace {

IdSeq random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  IdSeq out(n);
  for (auto& id : out) {
    id = static_cast<TokenId>(Vocab::kNumReserved + rng.below(vocab - Vocab::kNumReserved));
  }
  return out;
}

struct Branches {
  DistributionSequence c;
  DistributionSequence l;
};

// Loss with the teacher sides held at `frozen`.
double frozen_teacher_loss(const Seq2SeqModel& model, const IdSeq& src_c, const IdSeq& src_l, const IdSeq& target,
                           const Branches& frozen, const LossWeights& w) {
  const auto c = model.forward(src_c, target).dist;
  const auto l = model.forward(src_l, target).dist;
  return nll(c, target).value + nll(l, target).value + w.lambda1 * kl_contrastive(frozen.c, l).value +
         w.lambda2 * kl_contrastive(frozen.l, c).value;
}

} // namespace

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  if (options.vocab_size <= Vocab::kNumReserved) {
    throw Error("gradcheck: vocab_size must exceed the reserved ids");
  }
  ModelConfig cfg;
  cfg.d_model = options.d_model;
  cfg.n_heads = options.n_heads;
  cfg.n_layers_enc = options.n_layers;
  cfg.n_layers_dec = options.n_layers;
  cfg.d_ff = options.d_ff;
  cfg.vocab_size = options.vocab_size;
  cfg.max_src_len = options.src_len + 2;
  cfg.max_tgt_len = options.tgt_len;
  cfg.seed = options.seed;
  Seq2SeqModel model(cfg);

  Rng rng(options.seed + 17);
  // Perturb the initialization so LayerNorm gains and biases are not at
  // their symmetric defaults.
  for (auto& m : model.params().values) {
    for (auto& x : m.data) {
      x += rng.uniform(-0.1, 0.1);
    }
  }
  auto src_c = random_ids(rng, options.src_len, options.vocab_size);
  auto src_l = random_ids(rng, options.src_len, options.vocab_size);
  src_c.push_back(Vocab::kPad);
  auto target = random_ids(rng, options.tgt_len - 1, options.vocab_size);
  target.push_back(Vocab::kEos);

  auto pass_c = model.forward(src_c, target);
  auto pass_l = model.forward(src_l, target);
  const Branches frozen{pass_c.dist, pass_l.dist};
  const auto loss = lotus_loss(pass_c.dist, pass_l.dist, target, options.weights);

  GradcheckResult result;
  // Each contrastive term on its own must leave its teacher untouched.
  {
    const auto teacher_c = lotus_loss(pass_c.dist, pass_l.dist, target, LossWeights{1.0, 0.0});
    const auto teacher_l = lotus_loss(pass_c.dist, pass_l.dist, target, LossWeights{0.0, 1.0});
    const auto plain = lotus_loss(pass_c.dist, pass_l.dist, target, LossWeights{0.0, 0.0});
    for (std::size_t i = 0; i < plain.grad_c.data.size(); ++i) {
      result.teacher_leak = std::max(result.teacher_leak, std::abs(teacher_c.grad_c.data[i] - plain.grad_c.data[i]));
      result.teacher_leak = std::max(result.teacher_leak, std::abs(teacher_l.grad_l.data[i] - plain.grad_l.data[i]));
    }
  }

  auto grads = model.params().zeros_like();
  model.backward(pass_c, loss.grad_c, grads);
  model.backward(pass_l, loss.grad_l, grads);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < grads.count(); ++p) {
    for (std::size_t i = 0; i < grads.values[p].data.size(); ++i) {
      coords.emplace_back(p, i);
    }
  }
  if (options.samples > 0 && options.samples < coords.size()) {
    for (std::size_t i = 0; i < options.samples; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(options.samples);
  }

  for (const auto& [p, i] : coords) {
    double& x = model.params().values[p].data[i];
    const double saved = x;
    x = saved + options.epsilon;
    const double up = frozen_teacher_loss(model, src_c, src_l, target, frozen, options.weights);
    x = saved - options.epsilon;
    const double down = frozen_teacher_loss(model, src_c, src_l, target, frozen, options.weights);
    x = saved;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double err = gradcheck_relative_error(grads.values[p].data[i], numeric);
    ++result.checked;
    if (err >= options.tolerance) {
      ++result.failures;
    }
    if (err > result.max_rel_error || result.worst.empty()) {
      result.max_rel_error = std::max(err, result.max_rel_error);
      result.worst = grads.names[p] + "[" + std::to_string(i) + "]";
    }
  }
  return result;
}

} // namespace lotus
