#include "lotus/trainer.hpp"

#include "lotus/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace lotus {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(std::string_view key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw Error("config key '" + std::string(key) + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_real(std::string_view key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) {
      throw std::invalid_argument(v);
    }
    return d;
  } catch (const std::exception&) {
    throw Error("config key '" + std::string(key) + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") {
    return true;
  }
  if (v == "false" || v == "0" || v == "no") {
    return false;
  }
  throw Error("config key '" + std::string(key) + "': expected true/false, got '" + v + "'");
}

bool decays(const std::string& name, const Matrix& m) {
  // Matrices decay; biases and LayerNorm gains do not.
  (void)name;
  return m.rows > 1;
}

} // namespace

void TrainConfig::validate() const {
  if (control_kinds.empty()) {
    throw Error("train config: control_kinds must list at least one kind");
  }
  for (auto k : control_kinds) {
    if (k == ControlKind::Latent) {
      throw Error("train config: 'latent' is implied and cannot be a control kind");
    }
  }
  weights.validate();
  if (!(lr_peak > 0.0)) {
    throw Error("train config: lr_peak must be positive");
  }
  if (warmup_steps > total_steps) {
    throw Error("train config: warmup_steps exceeds total_steps");
  }
  if (batch_size == 0) {
    throw Error("train config: batch_size must be >= 1");
  }
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw Error("train config: adam betas must lie in (0, 1)");
  }
  if (weight_decay < 0.0) {
    throw Error("train config: weight_decay must be non-negative");
  }
  if (grad_clip && !(*grad_clip > 0.0)) {
    throw Error("train config: grad_clip must be positive");
  }
  if (vocab_min_freq == 0) {
    throw Error("train config: vocab_min_freq must be >= 1");
  }
}

void apply_config_value(TrainConfig& cfg, std::string_view key_in, std::string_view value_in) {
  const auto key = trim(key_in);
  const auto v = trim(value_in);
  if (key == "control_kinds") {
    cfg.control_kinds.clear();
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const auto part = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!part.empty()) {
        cfg.control_kinds.push_back(parse_kind(part));
      }
      if (comma == std::string::npos) {
        break;
      }
      start = comma + 1;
    }
  } else if (key == "lambda1") {
    cfg.weights.lambda1 = to_real(key, v);
  } else if (key == "lambda2") {
    cfg.weights.lambda2 = to_real(key, v);
  } else if (key == "loss_preset") {
    cfg.weights = LossWeights::preset(v);
  } else if (key == "normalize_cl") {
    cfg.kl.normalize_by_length = to_bool(key, v);
  } else if (key == "lr_peak") {
    cfg.lr_peak = to_real(key, v);
  } else if (key == "warmup_steps") {
    cfg.warmup_steps = to_count(key, v);
  } else if (key == "total_steps") {
    cfg.total_steps = to_count(key, v);
  } else if (key == "batch_size") {
    cfg.batch_size = to_count(key, v);
  } else if (key == "adam_beta1") {
    cfg.adam_beta1 = to_real(key, v);
  } else if (key == "adam_beta2") {
    cfg.adam_beta2 = to_real(key, v);
  } else if (key == "adam_eps") {
    cfg.adam_eps = to_real(key, v);
  } else if (key == "weight_decay") {
    cfg.weight_decay = to_real(key, v);
  } else if (key == "seed") {
    cfg.seed = to_count(key, v);
  } else if (key == "grad_clip") {
    if (v == "none") {
      cfg.grad_clip.reset();
    } else {
      cfg.grad_clip = to_real(key, v);
    }
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = to_count(key, v);
  } else if (key == "vocab_min_freq") {
    cfg.vocab_min_freq = to_count(key, v);
  } else if (key == "d_model") {
    cfg.model.d_model = to_count(key, v);
  } else if (key == "n_heads") {
    cfg.model.n_heads = to_count(key, v);
  } else if (key == "n_layers_enc") {
    cfg.model.n_layers_enc = to_count(key, v);
  } else if (key == "n_layers_dec") {
    cfg.model.n_layers_dec = to_count(key, v);
  } else if (key == "d_ff") {
    cfg.model.d_ff = to_count(key, v);
  } else if (key == "max_src_len") {
    cfg.model.max_src_len = to_count(key, v);
  } else if (key == "max_tgt_len") {
    cfg.model.max_tgt_len = to_count(key, v);
  } else {
    throw Error("unknown config key '" + key + "'");
  }
}

TrainConfig parse_train_config(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (trim(line).empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      apply_config_value(cfg, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
    } catch (const Error& e) {
      throw Error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open config file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "control_kinds = ";
  for (std::size_t i = 0; i < cfg.control_kinds.size(); ++i) {
    out << (i ? "," : "") << kind_name(cfg.control_kinds[i]);
  }
  out << "\nlambda1 = " << cfg.weights.lambda1 << "\nlambda2 = " << cfg.weights.lambda2
      << "\nnormalize_cl = " << (cfg.kl.normalize_by_length ? "true" : "false") << "\nlr_peak = " << cfg.lr_peak
      << "\nwarmup_steps = " << cfg.warmup_steps << "\ntotal_steps = " << cfg.total_steps
      << "\nbatch_size = " << cfg.batch_size << "\nadam_beta1 = " << cfg.adam_beta1
      << "\nadam_beta2 = " << cfg.adam_beta2 << "\nadam_eps = " << cfg.adam_eps
      << "\nweight_decay = " << cfg.weight_decay << "\nseed = " << cfg.seed << "\ngrad_clip = ";
  if (cfg.grad_clip) {
    out << *cfg.grad_clip;
  } else {
    out << "none";
  }
  out << "\ncheckpoint_every = " << cfg.checkpoint_every << "\nvocab_min_freq = " << cfg.vocab_min_freq
      << "\nd_model = " << cfg.model.d_model << "\nn_heads = " << cfg.model.n_heads
      << "\nn_layers_enc = " << cfg.model.n_layers_enc << "\nn_layers_dec = " << cfg.model.n_layers_dec
      << "\nd_ff = " << cfg.model.d_ff << "\nmax_src_len = " << cfg.model.max_src_len
      << "\nmax_tgt_len = " << cfg.model.max_tgt_len << "\n";
  return out.str();
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw Error("lr_schedule: step " + std::to_string(step) + " beyond total_steps");
  }
  if (step < cfg.warmup_steps) {
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const auto decay = cfg.total_steps - cfg.warmup_steps;
  if (decay == 0) {
    return step == cfg.warmup_steps ? cfg.lr_peak : 0.0;
  }
  return cfg.lr_peak * static_cast<double>(cfg.total_steps - step) / static_cast<double>(decay);
}

// --- data preparation --------------------------------------------------------

PreparedExample prepare_example(const AnnotatedExample& ex, std::span<const ControlKind> kinds, const Vocab& vocab,
                                const ModelConfig& model) {
  PreparedExample out;
  out.id = ex.example.id();
  for (auto kind : kinds) {
    Prompt p;
    try {
      p = render_prompt(kind, ex.signals);
    } catch (const Error& e) {
      throw Error("example '" + out.id + "': " + e.what());
    }
    out.control_sources.push_back(vocab.encode(build_input(p, ex.example.document, model.max_src_len)));
  }
  out.latent_source = vocab.encode(build_input(latent_prompt(), ex.example.document, model.max_src_len));
  const auto keep = std::min(ex.example.summary.size(), model.max_tgt_len - 1);
  out.target = vocab.encode(std::span(ex.example.summary).first(keep));
  out.target.push_back(Vocab::kEos);
  return out;
}

std::vector<PreparedExample> prepare_examples(std::span<const AnnotatedExample> data,
                                              std::span<const ControlKind> kinds, const Vocab& vocab,
                                              const ModelConfig& model) {
  std::vector<PreparedExample> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    out.push_back(prepare_example(ex, kinds, vocab, model));
  }
  return out;
}

Vocab build_training_vocab(std::span<const AnnotatedExample> data, std::span<const ControlKind> kinds,
                           std::size_t min_freq) {
  std::vector<Example> examples;
  std::vector<TokenSeq> prompts{latent_prompt().tokens};
  examples.reserve(data.size());
  for (const auto& ex : data) {
    examples.push_back(ex.example);
    for (auto kind : kinds) {
      try {
        prompts.push_back(render_prompt(kind, ex.signals).tokens);
      } catch (const Error& e) {
        throw Error("example '" + ex.example.id() + "': " + e.what());
      }
    }
  }
  // Prompt tokens must survive the frequency cut: repeat them min_freq times.
  std::vector<TokenSeq> extra;
  for (std::size_t i = 0; i < min_freq; ++i) {
    extra.insert(extra.end(), prompts.begin(), prompts.end());
  }
  return build_vocab(examples, min_freq, extra);
}

// --- optimization -------------------------------------------------------------

TrainState init_train_state(const TrainConfig& cfg, Vocab vocab) {
  cfg.validate();
  auto model_cfg = cfg.model;
  model_cfg.vocab_size = vocab.size();
  model_cfg.seed = cfg.seed;
  Seq2SeqModel model(model_cfg);
  auto zeros = model.params().zeros_like();
  return TrainState{std::move(vocab), std::move(model), zeros, zeros, 0, Rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL), {}, 0};
}

std::vector<std::size_t> next_batch(TrainState& state, std::size_t n_examples, std::size_t batch_size) {
  if (n_examples == 0) {
    throw Error("cannot draw a batch from an empty training set");
  }
  std::vector<std::size_t> batch;
  batch.reserve(batch_size);
  while (batch.size() < batch_size) {
    if (state.order.size() != n_examples || state.cursor >= state.order.size()) {
      state.order.resize(n_examples);
      std::iota(state.order.begin(), state.order.end(), 0);
      for (std::size_t i = n_examples; i-- > 1;) {
        std::swap(state.order[i], state.order[static_cast<std::size_t>(state.rng.below(i + 1))]);
      }
      state.cursor = 0;
    }
    batch.push_back(state.order[state.cursor++]);
  }
  return batch;
}

ExampleGradient example_gradient(const Seq2SeqModel& model, const PreparedExample& ex, const TrainConfig& cfg) {
  std::vector<ForwardPass> control_passes;
  std::vector<DistributionSequence> dists_c;
  control_passes.reserve(ex.control_sources.size());
  for (const auto& src : ex.control_sources) {
    control_passes.push_back(model.forward(src, ex.target));
    dists_c.push_back(control_passes.back().dist);
  }
  auto latent_pass = model.forward(ex.latent_source, ex.target);
  auto loss = multi_control_loss(dists_c, latent_pass.dist, ex.target, cfg.weights, cfg.kl);
  ExampleGradient out{loss.breakdown, model.params().zeros_like()};
  for (std::size_t k = 0; k < control_passes.size(); ++k) {
    model.backward(control_passes[k], loss.grads_c[k], out.grad);
  }
  model.backward(latent_pass, loss.grad_l, out.grad);
  return out;
}

StepResult train_step(TrainState& state, std::span<const PreparedExample> batch, const TrainConfig& cfg) {
  return train_step(state, batch, cfg, nullptr);
}

StepResult train_step(TrainState& state, std::span<const PreparedExample> batch, const TrainConfig& cfg,
                      Parameters* applied_grad) {
  if (batch.empty()) {
    throw Error("train_step: empty batch");
  }
  if (state.step >= cfg.total_steps) {
    throw Error("train_step: already at total_steps");
  }
  for (const auto& ex : batch) {
    if (ex.control_sources.size() != cfg.control_kinds.size()) {
      throw Error("train_step: example '" + ex.id + "' was prepared for a different set of control kinds");
    }
  }
  const auto& model = state.model;
  std::vector<ExampleGradient> per_example(batch.size());
  std::vector<std::string> errors(batch.size());
  const auto n = static_cast<long>(batch.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      per_example[k] = example_gradient(model, batch[k], cfg);
    } catch (const std::exception& e) {
      errors[k] = "example '" + batch[k].id + "': " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) {
      throw Error(e);
    }
  }

  // Fixed-order reduction keeps updates independent of the thread count.
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Parameters grad = model.params().zeros_like();
  StepResult result;
  for (const auto& ex : per_example) {
    grad.add_scaled(ex.grad, inv_b);
    result.loss.nll_c += ex.loss.nll_c * inv_b;
    result.loss.nll_l += ex.loss.nll_l * inv_b;
    result.loss.cl_c_to_l += ex.loss.cl_c_to_l * inv_b;
    result.loss.cl_l_to_c += ex.loss.cl_l_to_c * inv_b;
  }
  result.loss.total = combine(result.loss, cfg.weights);

  result.grad_norm = std::sqrt(grad.squared_norm());
  if (cfg.grad_clip && result.grad_norm > *cfg.grad_clip) {
    const double s = *cfg.grad_clip / result.grad_norm;
    for (auto& m : grad.values) {
      for (auto& x : m.data) {
        x *= s;
      }
    }
  }

  result.lr = lr_schedule(state.step, cfg);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  auto& params = state.model.params();
  for (std::size_t p = 0; p < params.count(); ++p) {
    auto& theta = params.values[p].data;
    auto& m = state.adam_m.values[p].data;
    auto& v = state.adam_v.values[p].data;
    const auto& g = grad.values[p].data;
    const double wd = decays(params.names[p], params.values[p]) ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      theta[i] -= result.lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + wd * theta[i]);
    }
  }
  if (!params.all_finite()) {
    throw Error("train_step: non-finite parameter after update at step " + std::to_string(state.step));
  }
  ++state.step;
  if (applied_grad) {
    *applied_grad = std::move(grad);
  }
  return result;
}

std::string format_log_record(std::size_t step, double lr, const LossBreakdown& loss) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["lr"] = lr;
  j["nll_c"] = loss.nll_c;
  j["nll_l"] = loss.nll_l;
  j["cl_c_to_l"] = loss.cl_c_to_l;
  j["cl_l_to_c"] = loss.cl_l_to_c;
  j["total"] = loss.total;
  return j.dump();
}

void train(TrainState& state, std::span<const PreparedExample> data, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  while (state.step < cfg.total_steps) {
    const auto idx = next_batch(state, data.size(), cfg.batch_size);
    std::vector<PreparedExample> batch;
    batch.reserve(idx.size());
    for (auto i : idx) {
      batch.push_back(data[i]);
    }
    const auto result = train_step(state, batch, cfg);
    if (hooks.on_step) {
      hooks.on_step(state.step, result);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step < cfg.total_steps) {
      hooks.on_checkpoint(state);
    }
  }
}

double mean_nll(const Seq2SeqModel& model, std::span<const PreparedExample> data, int kind_index) {
  if (data.empty()) {
    throw Error("mean_nll: no examples");
  }
  std::vector<double> values(data.size());
  const auto n = static_cast<long>(data.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < n; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    const auto& src = kind_index < 0 ? ex.latent_source : ex.control_sources.at(static_cast<std::size_t>(kind_index));
    auto pass = model.forward(src, ex.target);
    values[static_cast<std::size_t>(i)] = nll(pass.dist, ex.target).value;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

} // namespace lotus
