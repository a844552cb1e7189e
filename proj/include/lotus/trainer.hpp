#pragma once

#include "lotus/corpus.hpp"
#include "lotus/objective.hpp"
#include "lotus/prompts.hpp"
#include "lotus/rng.hpp"
#include "lotus/seqmodel.hpp"
#include "lotus/signals.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lotus {

struct TrainConfig {
  std::vector<ControlKind> control_kinds{ControlKind::Length};
  LossWeights weights{};
  KlOptions kl{};
  double lr_peak = 3e-4;
  std::size_t warmup_steps = 500;
  std::size_t total_steps = 20000;
  std::size_t batch_size = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip = 1.0;
  std::size_t checkpoint_every = 0; // 0: only the final checkpoint
  std::size_t vocab_min_freq = 1;
  ModelConfig model{};

  void validate() const;
};

// Declarative `key = value` config; '#' starts a comment. Keys:
//   control_kinds (comma list), lambda1, lambda2, loss_preset, normalize_cl,
//   lr_peak, warmup_steps, total_steps, batch_size, adam_beta1, adam_beta2,
//   adam_eps, weight_decay, seed, grad_clip ("none" disables), checkpoint_every,
//   vocab_min_freq, d_model, n_heads, n_layers_enc, n_layers_dec, d_ff,
//   max_src_len, max_tgt_len
TrainConfig parse_train_config(std::string_view text);
TrainConfig load_train_config(const std::filesystem::path& path);
void apply_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string format_train_config(const TrainConfig& cfg);

// Linear warmup from 0 to lr_peak over warmup_steps, then linear decay to 0
// at total_steps.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

// Token-id form of one annotated example: one source per control prompt,
// the latent-prompt source, and the gold target (summary + EOS).
struct PreparedExample {
  std::string id;
  std::vector<IdSeq> control_sources;
  IdSeq latent_source;
  IdSeq target;
};

PreparedExample prepare_example(const AnnotatedExample& ex, std::span<const ControlKind> kinds, const Vocab& vocab,
                                const ModelConfig& model);
std::vector<PreparedExample> prepare_examples(std::span<const AnnotatedExample> data,
                                              std::span<const ControlKind> kinds, const Vocab& vocab,
                                              const ModelConfig& model);

// Vocabulary over documents, summaries and every rendered training prompt.
Vocab build_training_vocab(std::span<const AnnotatedExample> data, std::span<const ControlKind> kinds,
                           std::size_t min_freq);

struct TrainState {
  Vocab vocab;
  Seq2SeqModel model;
  Parameters adam_m;
  Parameters adam_v;
  std::size_t step = 0;
  Rng rng;
  // Current epoch's visiting order and position within it.
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
};

TrainState init_train_state(const TrainConfig& cfg, Vocab vocab);

// Next batch of example indices from the seeded per-epoch permutation.
std::vector<std::size_t> next_batch(TrainState& state, std::size_t n_examples, std::size_t batch_size);

struct StepResult {
  LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0; // before clipping
};

// One optimizer step: N+1 forward passes per example, the multi-control loss,
// backpropagation, batch-mean gradient, optional global-norm clipping and an
// AdamW update with the scheduled learning rate.
StepResult train_step(TrainState& state, std::span<const PreparedExample> batch, const TrainConfig& cfg);

// Same, but also returns the (clipped) batch gradient that was applied.
StepResult train_step(TrainState& state, std::span<const PreparedExample> batch, const TrainConfig& cfg,
                      Parameters* applied_grad);

// Per-example loss and gradient without updating anything.
struct ExampleGradient {
  LossBreakdown loss;
  Parameters grad;
};
ExampleGradient example_gradient(const Seq2SeqModel& model, const PreparedExample& ex, const TrainConfig& cfg);

std::string format_log_record(std::size_t step, double lr, const LossBreakdown& loss);

struct TrainHooks {
  std::function<void(std::size_t step, const StepResult&)> on_step;
  std::function<void(const TrainState&)> on_checkpoint;
};

// Runs train_step until state.step == cfg.total_steps.
void train(TrainState& state, std::span<const PreparedExample> data, const TrainConfig& cfg,
           const TrainHooks& hooks = {});

// Mean teacher-forced NLL of the given prompt branch over examples.
// kind_index < 0 selects the latent source.
double mean_nll(const Seq2SeqModel& model, std::span<const PreparedExample> data, int kind_index = -1);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

} // namespace lotus
