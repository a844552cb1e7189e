#include "lotus/seqmodel.hpp"

#include "lotus/error.hpp"
#include "lotus/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lotus {

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_ff == 0 || max_src_len == 0 || max_tgt_len == 0) {
    throw Error("model config: all dimensions must be >= 1");
  }
  if (n_layers_enc == 0 || n_layers_dec == 0) {
    throw Error("model config: need at least one encoder and one decoder layer");
  }
  if (d_model % n_heads != 0) {
    throw Error("model config: d_model (" + std::to_string(d_model) + ") is not divisible by n_heads (" +
                std::to_string(n_heads) + ")");
  }
  if (vocab_size <= Vocab::kNumReserved) {
    throw Error("model config: vocab_size must exceed the " + std::to_string(Vocab::kNumReserved) +
                " reserved ids");
  }
}

// --- Parameters -------------------------------------------------------------

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values) {
    n += v.size();
  }
  return n;
}

std::size_t Parameters::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      return i;
    }
  }
  throw Error("no parameter named '" + std::string(name) + "'");
}

Parameters Parameters::zeros_like() const {
  Parameters z;
  z.names = names;
  z.values.reserve(values.size());
  for (const auto& v : values) {
    z.values.emplace_back(v.rows, v.cols);
  }
  return z;
}

void Parameters::set_zero() {
  for (auto& v : values) {
    v.fill(0.0);
  }
}

bool Parameters::all_finite() const {
  for (const auto& v : values) {
    for (double x : v.data) {
      if (!std::isfinite(x)) {
        return false;
      }
    }
  }
  return true;
}

void Parameters::add_scaled(const Parameters& other, double scale) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& dst = values[i].data;
    const auto& src = other.values[i].data;
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] += scale * src[j];
    }
  }
}

double Parameters::squared_norm() const {
  double s = 0.0;
  for (const auto& v : values) {
    for (double x : v.data) {
      s += x * x;
    }
  }
  return s;
}

// --- DistributionSequence ---------------------------------------------------

DistributionSequence DistributionSequence::from_logits(const Matrix& logits) {
  DistributionSequence d;
  d.probs = Matrix(logits.rows, logits.cols);
  d.log_probs = Matrix(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double x : row) {
      sum += std::exp(x - mx);
    }
    const double log_z = mx + std::log(sum);
    for (std::size_t c = 0; c < logits.cols; ++c) {
      const double lp = row[c] - log_z;
      d.log_probs(r, c) = lp;
      d.probs(r, c) = std::exp(lp);
    }
  }
  return d;
}

std::size_t unpadded_length(std::span<const TokenId> src) {
  std::size_t n = src.size();
  while (n > 0 && src[n - 1] == Vocab::kPad) {
    --n;
  }
  return n;
}

// --- Seq2SeqModel -------------------------------------------------------------

Seq2SeqModel::Seq2SeqModel(ModelConfig config) : config_(config) {
  config_.validate();
  build_layout();
  initialize();
}

Seq2SeqModel::Seq2SeqModel(ModelConfig config, Parameters params) : config_(config) {
  config_.validate();
  build_layout();
  if (params.names != params_.names) {
    throw Error("parameter names do not match the model layout");
  }
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (!params.values[i].same_shape(params_.values[i])) {
      throw Error("parameter '" + params.names[i] + "' has the wrong shape");
    }
  }
  params_ = std::move(params);
}

void Seq2SeqModel::build_layout() {
  const auto d = config_.d_model;
  const auto f = config_.d_ff;
  const auto v = config_.vocab_size;
  auto add = [this](std::string name, std::size_t rows, std::size_t cols) {
    params_.names.push_back(std::move(name));
    params_.values.emplace_back(rows, cols);
    return params_.values.size() - 1;
  };
  auto norm = [&](const std::string& p) { return NormIdx{add(p + ".g", 1, d), add(p + ".b", 1, d)}; };
  auto attn = [&](const std::string& p) {
    AttentionIdx a{};
    a.wq = add(p + ".wq", d, d);
    a.bq = add(p + ".bq", 1, d);
    a.wk = add(p + ".wk", d, d);
    a.bk = add(p + ".bk", 1, d);
    a.wv = add(p + ".wv", d, d);
    a.bv = add(p + ".bv", 1, d);
    a.wo = add(p + ".wo", d, d);
    a.bo = add(p + ".bo", 1, d);
    return a;
  };
  auto ff = [&](const std::string& p) {
    return FeedForwardIdx{add(p + ".w1", d, f), add(p + ".b1", 1, f), add(p + ".w2", f, d), add(p + ".b2", 1, d)};
  };
  embed_ = add("embed", v, d);
  for (std::size_t l = 0; l < config_.n_layers_enc; ++l) {
    const auto p = "enc." + std::to_string(l);
    EncoderLayerIdx e{};
    e.ln1 = norm(p + ".ln1");
    e.attn = attn(p + ".attn");
    e.ln2 = norm(p + ".ln2");
    e.ff = ff(p + ".ff");
    enc_.push_back(e);
  }
  enc_norm_ = norm("enc.ln");
  for (std::size_t l = 0; l < config_.n_layers_dec; ++l) {
    const auto p = "dec." + std::to_string(l);
    DecoderLayerIdx e{};
    e.ln1 = norm(p + ".ln1");
    e.self_attn = attn(p + ".self");
    e.ln2 = norm(p + ".ln2");
    e.cross_attn = attn(p + ".cross");
    e.ln3 = norm(p + ".ln3");
    e.ff = ff(p + ".ff");
    dec_.push_back(e);
  }
  dec_norm_ = norm("dec.ln");
  out_w_ = add("out.w", d, v);
  out_b_ = add("out.b", 1, v);

  const auto max_len = std::max(config_.max_src_len, config_.max_tgt_len + 1);
  positions_ = Matrix(max_len, d);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      positions_(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d) {
        positions_(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
      }
    }
  }
}

void Seq2SeqModel::initialize() {
  Rng rng(config_.seed);
  for (std::size_t i = 0; i < params_.count(); ++i) {
    const auto& name = params_.names[i];
    auto& m = params_.values[i];
    const bool is_gain = name.ends_with(".g");
    if (m.rows == 1) {
      m.fill(is_gain ? 1.0 : 0.0);
      continue;
    }
    // Xavier-uniform bound.
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (auto& x : m.data) {
      x = rng.uniform(-bound, bound);
    }
  }
}

void Seq2SeqModel::check_ids(std::span<const TokenId> ids, const char* what) const {
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw Error(std::string(what) + ": token id " + std::to_string(id) + " outside vocabulary of size " +
                  std::to_string(config_.vocab_size));
    }
  }
}

ad::Var Seq2SeqModel::param(ad::Tape& tape, std::size_t idx) const {
  return tape.parameter(params_.values[idx], idx);
}

ad::Var Seq2SeqModel::norm(ad::Tape& tape, ad::Var x, const NormIdx& idx) const {
  return tape.layer_norm(x, param(tape, idx.g), param(tape, idx.b));
}

ad::Var Seq2SeqModel::linear(ad::Tape& tape, ad::Var x, std::size_t w, std::size_t b) const {
  return tape.add_row(tape.matmul(x, param(tape, w)), param(tape, b));
}

ad::Var Seq2SeqModel::attention_block(ad::Tape& tape, ad::Var query_in, ad::Var kv_in, const AttentionIdx& idx,
                                      ad::AttentionMask mask) const {
  auto q = linear(tape, query_in, idx.wq, idx.bq);
  auto k = linear(tape, kv_in, idx.wk, idx.bk);
  auto v = linear(tape, kv_in, idx.wv, idx.bv);
  auto a = tape.attention(q, k, v, config_.n_heads, mask);
  return linear(tape, a, idx.wo, idx.bo);
}

ad::Var Seq2SeqModel::feed_forward(ad::Tape& tape, ad::Var x, const FeedForwardIdx& idx) const {
  auto h = tape.gelu(linear(tape, x, idx.w1, idx.b1));
  return linear(tape, h, idx.w2, idx.b2);
}

ad::Var Seq2SeqModel::embed(ad::Tape& tape, std::span<const TokenId> ids) const {
  const double scale = std::sqrt(static_cast<double>(config_.d_model));
  auto x = tape.embedding(param(tape, embed_), ids, scale);
  Matrix pos(ids.size(), config_.d_model);
  std::copy_n(positions_.data.begin(), pos.size(), pos.data.begin());
  return tape.add(x, tape.constant(std::move(pos)));
}

ad::Var Seq2SeqModel::encoder_stack(ad::Tape& tape, std::span<const TokenId> src, std::size_t key_len) const {
  auto x = embed(tape, src);
  const ad::AttentionMask mask{key_len, false};
  for (const auto& layer : enc_) {
    auto h = norm(tape, x, layer.ln1);
    x = tape.add(x, attention_block(tape, h, h, layer.attn, mask));
    h = norm(tape, x, layer.ln2);
    x = tape.add(x, feed_forward(tape, h, layer.ff));
  }
  return norm(tape, x, enc_norm_);
}

ad::Var Seq2SeqModel::decoder_stack(ad::Tape& tape, ad::Var memory, std::size_t key_len,
                                    std::span<const TokenId> dec_in) const {
  auto y = embed(tape, dec_in);
  const ad::AttentionMask self_mask{dec_in.size(), true};
  const ad::AttentionMask cross_mask{key_len, false};
  for (const auto& layer : dec_) {
    auto h = norm(tape, y, layer.ln1);
    y = tape.add(y, attention_block(tape, h, h, layer.self_attn, self_mask));
    h = norm(tape, y, layer.ln2);
    y = tape.add(y, attention_block(tape, h, memory, layer.cross_attn, cross_mask));
    h = norm(tape, y, layer.ln3);
    y = tape.add(y, feed_forward(tape, h, layer.ff));
  }
  y = norm(tape, y, dec_norm_);
  return linear(tape, y, out_w_, out_b_);
}

ForwardPass Seq2SeqModel::forward(std::span<const TokenId> src, std::span<const TokenId> target) const {
  if (src.empty() || src.size() > config_.max_src_len) {
    throw Error("forward: source length " + std::to_string(src.size()) + " outside [1, " +
                std::to_string(config_.max_src_len) + "]");
  }
  if (target.empty() || target.size() > config_.max_tgt_len) {
    throw Error("forward: target length " + std::to_string(target.size()) + " outside [1, " +
                std::to_string(config_.max_tgt_len) + "]");
  }
  check_ids(src, "forward source");
  check_ids(target, "forward target");
  ForwardPass pass;
  const auto key_len = unpadded_length(src);
  auto memory = encoder_stack(pass.tape, src, key_len);
  std::vector<TokenId> dec_in;
  dec_in.reserve(target.size());
  dec_in.push_back(Vocab::kBos);
  dec_in.insert(dec_in.end(), target.begin(), target.end() - 1);
  pass.logits = decoder_stack(pass.tape, memory, key_len, dec_in);
  pass.dist = DistributionSequence::from_logits(pass.tape.value(pass.logits));
  return pass;
}

void Seq2SeqModel::backward(ForwardPass& pass, const Matrix& logit_grad, Parameters& grads) const {
  const auto& logits = pass.tape.value(pass.logits);
  if (!logit_grad.same_shape(logits)) {
    throw Error("backward: loss gradient is " + std::to_string(logit_grad.rows) + "x" +
                std::to_string(logit_grad.cols) + " but the forward pass produced " + std::to_string(logits.rows) +
                "x" + std::to_string(logits.cols));
  }
  if (grads.names != params_.names) {
    throw Error("backward: gradient buffer does not match the parameter layout");
  }
  pass.tape.backward(pass.logits, logit_grad, grads.values);
}

EncodedSource Seq2SeqModel::encode(std::span<const TokenId> src) const {
  if (src.empty() || src.size() > config_.max_src_len) {
    throw Error("encode: source length " + std::to_string(src.size()) + " outside [1, " +
                std::to_string(config_.max_src_len) + "]");
  }
  check_ids(src, "encode");
  ad::Tape tape(false);
  EncodedSource out;
  out.key_len = unpadded_length(src);
  out.memory = tape.value(encoder_stack(tape, src, out.key_len));
  return out;
}

std::vector<double> Seq2SeqModel::next_log_probs(const EncodedSource& enc, std::span<const TokenId> prefix) const {
  if (prefix.size() + 1 > config_.max_tgt_len + 1) {
    throw Error("next_log_probs: prefix exceeds the target budget");
  }
  check_ids(prefix, "decode prefix");
  ad::Tape tape(false);
  std::vector<TokenId> dec_in;
  dec_in.reserve(prefix.size() + 1);
  dec_in.push_back(Vocab::kBos);
  dec_in.insert(dec_in.end(), prefix.begin(), prefix.end());
  auto memory = tape.constant(enc.memory);
  const auto& logits = tape.value(decoder_stack(tape, memory, enc.key_len, dec_in));
  Matrix last(1, logits.cols);
  const auto row = logits.row(logits.rows - 1);
  std::copy(row.begin(), row.end(), last.data.begin());
  auto dist = DistributionSequence::from_logits(last);
  return dist.log_probs.data;
}

} // namespace lotus
