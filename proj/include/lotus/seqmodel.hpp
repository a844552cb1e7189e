#pragma once

#include "lotus/autograd.hpp"
#include "lotus/corpus.hpp"
#include "lotus/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lotus {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers_enc = 2;
  std::size_t n_layers_dec = 2;
  std::size_t d_ff = 128;
  std::size_t max_src_len = 256;
  std::size_t max_tgt_len = 128;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;

  // Throws on violated invariants (d_model % n_heads, zero dimensions).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter arrays in a fixed order. Gradients and optimizer moments
// use the same type with identical names and shapes.
struct Parameters {
  std::vector<std::string> names;
  std::vector<Matrix> values;

  std::size_t count() const { return values.size(); }
  std::size_t scalar_count() const;
  std::size_t index(std::string_view name) const;
  Matrix& operator[](std::string_view name) { return values[index(name)]; }
  const Matrix& operator[](std::string_view name) const { return values[index(name)]; }

  Parameters zeros_like() const;
  void set_zero();
  bool all_finite() const;
  void add_scaled(const Parameters& other, double scale);
  double squared_norm() const;

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

// One probability distribution over the vocabulary per target position.
struct DistributionSequence {
  Matrix probs;
  Matrix log_probs;

  std::size_t length() const { return probs.rows; }
  std::size_t vocab() const { return probs.cols; }

  // Row-wise stable (log-)softmax of the logits.
  static DistributionSequence from_logits(const Matrix& logits);
};

// Cached activations of a teacher-forced forward pass.
struct ForwardPass {
  ad::Tape tape{true};
  ad::Var logits;
  DistributionSequence dist;
};

// Encoder output for one source, reused across decoding steps.
struct EncodedSource {
  Matrix memory;
  std::size_t key_len = 0;
};

// Pre-LayerNorm Transformer encoder-decoder with sinusoidal positions and a
// token embedding shared by source and target.
class Seq2SeqModel {
public:
  explicit Seq2SeqModel(ModelConfig config);
  Seq2SeqModel(ModelConfig config, Parameters params);

  const ModelConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  // Teacher-forced pass: decoder input is BOS followed by target[0 .. T-2];
  // row t of the result predicts target[t]. Trailing PAD tokens of `src`
  // are masked out as attention keys.
  ForwardPass forward(std::span<const TokenId> src, std::span<const TokenId> target) const;

  // Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
  void backward(ForwardPass& pass, const Matrix& logit_grad, Parameters& grads) const;

  EncodedSource encode(std::span<const TokenId> src) const;

  // Log-probabilities of the token following `prefix` (which excludes BOS).
  std::vector<double> next_log_probs(const EncodedSource& enc, std::span<const TokenId> prefix) const;

private:
  struct AttentionIdx {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct FeedForwardIdx {
    std::size_t w1, b1, w2, b2;
  };
  struct NormIdx {
    std::size_t g, b;
  };
  struct EncoderLayerIdx {
    NormIdx ln1, ln2;
    AttentionIdx attn;
    FeedForwardIdx ff;
  };
  struct DecoderLayerIdx {
    NormIdx ln1, ln2, ln3;
    AttentionIdx self_attn, cross_attn;
    FeedForwardIdx ff;
  };

  void build_layout();
  void initialize();
  void check_ids(std::span<const TokenId> ids, const char* what) const;

  ad::Var param(ad::Tape& tape, std::size_t idx) const;
  ad::Var norm(ad::Tape& tape, ad::Var x, const NormIdx& idx) const;
  ad::Var linear(ad::Tape& tape, ad::Var x, std::size_t w, std::size_t b) const;
  ad::Var attention_block(ad::Tape& tape, ad::Var query_in, ad::Var kv_in, const AttentionIdx& idx,
                          ad::AttentionMask mask) const;
  ad::Var feed_forward(ad::Tape& tape, ad::Var x, const FeedForwardIdx& idx) const;
  ad::Var embed(ad::Tape& tape, std::span<const TokenId> ids) const;
  ad::Var encoder_stack(ad::Tape& tape, std::span<const TokenId> src, std::size_t key_len) const;
  ad::Var decoder_stack(ad::Tape& tape, ad::Var memory, std::size_t key_len,
                        std::span<const TokenId> dec_in) const;

  ModelConfig config_;
  Parameters params_;
  Matrix positions_;
  std::size_t embed_ = 0;
  std::vector<EncoderLayerIdx> enc_;
  std::vector<DecoderLayerIdx> dec_;
  NormIdx enc_norm_{}, dec_norm_{};
  std::size_t out_w_ = 0, out_b_ = 0;
};

// Source length with trailing PAD tokens removed.
std::size_t unpadded_length(std::span<const TokenId> src);

} // namespace lotus
