#include "lotus/error.hpp"
#include "lotus/signals.hpp"
#include "lotus/synthetic.hpp"
#include "lotus/trainer.hpp"

#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace lotus;
namespace fs = std::filesystem;

namespace {

std::vector<AnnotatedExample> toy_data(std::size_t n, std::uint64_t seed = 1) {
  synthetic::LengthTaskOptions o;
  o.n_examples = n;
  o.seed = seed;
  o.vocab_words = 12;
  o.min_doc_tokens = 12;
  o.max_doc_tokens = 20;
  o.summary_lengths = {3, 5, 8};
  const auto examples = synthetic::length_task(o);
  const auto anns = annotate_corpus(examples, {});
  std::vector<AnnotatedExample> out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back({examples[i], anns[i].signals});
  }
  return out;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.total_steps = 100;
  cfg.warmup_steps = 10;
  cfg.batch_size = 4;
  cfg.lr_peak = 3e-3;
  cfg.seed = 5;
  cfg.model.d_model = 8;
  cfg.model.n_heads = 2;
  cfg.model.n_layers_enc = 1;
  cfg.model.n_layers_dec = 1;
  cfg.model.d_ff = 16;
  cfg.model.max_src_len = 32;
  cfg.model.max_tgt_len = 12;
  return cfg;
}

struct Setup {
  TrainConfig cfg = toy_config();
  std::vector<AnnotatedExample> data = toy_data(20);
  TrainState state = init_train_state(cfg, build_training_vocab(data, cfg.control_kinds, 1));
  std::vector<PreparedExample> prepared = prepare_examples(data, cfg.control_kinds, state.vocab, cfg.model);
};

void run_steps(TrainState& state, const std::vector<PreparedExample>& data, const TrainConfig& cfg, std::size_t until) {
  while (state.step < until) {
    const auto idx = next_batch(state, data.size(), cfg.batch_size);
    std::vector<PreparedExample> batch;
    for (auto i : idx) {
      batch.push_back(data[i]);
    }
    train_step(state, batch, cfg);
  }
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("lotus_test_" + name); }

} // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.lr_peak = 1e-3;
  cfg.warmup_steps = 500;
  cfg.total_steps = 20000;
  CHECK(lr_schedule(0, cfg) == 0.0);
  CHECK(lr_schedule(500, cfg) == 1e-3);
  CHECK(lr_schedule(250, cfg) == doctest::Approx(5e-4));
  CHECK(lr_schedule((500 + 20000) / 2, cfg) == doctest::Approx(5e-4).epsilon(1e-3));
  CHECK(lr_schedule(20000, cfg) == 0.0);
  CHECK_THROWS_AS(lr_schedule(20001, cfg), Error);
  cfg.warmup_steps = 0;
  CHECK(lr_schedule(0, cfg) == 1e-3);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_train_config(R"(# toy
control_kinds = length, keywords
loss_preset = c_teacher_only
lr_peak = 0.001
total_steps = 10
warmup_steps = 2
grad_clip = none
d_model = 16
)");
  CHECK(cfg.control_kinds == std::vector<ControlKind>{ControlKind::Length, ControlKind::Keywords});
  CHECK(cfg.weights.lambda1 == 1.0);
  CHECK(cfg.weights.lambda2 == 0.0);
  CHECK_FALSE(cfg.grad_clip.has_value());
  CHECK(cfg.model.d_model == 16);
  CHECK(parse_train_config(format_train_config(cfg)).model == cfg.model);
  CHECK(format_train_config(parse_train_config(format_train_config(cfg))) == format_train_config(cfg));

  CHECK_THROWS_WITH_AS(parse_train_config("colour = red\n"), doctest::Contains("line 1"), Error);
  CHECK_THROWS_AS(parse_train_config("warmup_steps = 10\ntotal_steps = 5\n"), Error);
  CHECK_THROWS_AS(parse_train_config("batch_size = 0\n"), Error);
  CHECK_THROWS_AS(parse_train_config("control_kinds = latent\n"), Error);
  CHECK_THROWS_AS(parse_train_config("adam_beta1 = 1.0\n"), Error);
}

TEST_CASE("prepare_example reports missing signals") {
  auto data = toy_data(2);
  const std::vector<ControlKind> kinds{ControlKind::Keywords};
  data[1].signals.keywords.clear();
  const auto vocab = build_vocab(std::vector<Example>{data[0].example}, 1);
  try {
    prepare_example(data[1], kinds, vocab, toy_config().model);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(data[1].example.id()) != std::string::npos);
    CHECK(msg.find("keywords") != std::string::npos);
  }
}

TEST_CASE("prepared example layout") {
  Setup s;
  const auto& ex = s.prepared[0];
  REQUIRE(ex.control_sources.size() == 1);
  CHECK(ex.target.back() == Vocab::kEos);
  CHECK(ex.target.size() == s.data[0].example.summary.size() + 1);
  CHECK(s.state.vocab.decode(ex.latent_source)[0] == "summarize");
  CHECK(s.state.vocab.decode(ex.control_sources[0])[2] == "length");
}

TEST_CASE("epoch shuffling visits every example once") {
  Setup s;
  std::vector<std::size_t> visited;
  for (int b = 0; b < 5; ++b) {
    const auto idx = next_batch(s.state, 20, 4);
    visited.insert(visited.end(), idx.begin(), idx.end());
  }
  std::sort(visited.begin(), visited.end());
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(visited[i] == i);
  }
}

TEST_CASE("train_step basics") {
  Setup s;
  std::vector<PreparedExample> batch(s.prepared.begin(), s.prepared.begin() + 4);
  const auto before = s.state.model.params();
  const auto r0 = train_step(s.state, batch, s.cfg);
  CHECK(r0.lr == 0.0);
  CHECK(s.state.step == 1);
  // lr 0 leaves parameters unchanged even with weight decay.
  CHECK(s.state.model.params() == before);
  CHECK(r0.loss.total == doctest::Approx(combine(r0.loss, s.cfg.weights)));

  s.cfg.grad_clip = 0.05;
  Parameters applied;
  const auto r1 = train_step(s.state, batch, s.cfg, &applied);
  CHECK(r1.grad_norm > 0.05);
  CHECK(std::sqrt(applied.squared_norm()) <= 0.05 * (1 + 1e-12));
  CHECK(s.state.model.params().all_finite());
  CHECK_FALSE(s.state.model.params() == before);

  CHECK_THROWS_AS(train_step(s.state, std::vector<PreparedExample>{}, s.cfg), Error);
}

TEST_CASE("zero contrastive weights reduce to plain two-branch NLL training") {
  Setup s;
  s.cfg.weights = {0, 0};
  s.cfg.weight_decay = 0.01;
  auto reference = s.state;
  std::vector<PreparedExample> batch(s.prepared.begin(), s.prepared.begin() + 4);

  for (int step = 0; step < 5; ++step) {
    train_step(s.state, batch, s.cfg);

    // Independent NLL-only AdamW step.
    auto grad = reference.model.params().zeros_like();
    for (const auto& ex : batch) {
      auto pc = reference.model.forward(ex.control_sources[0], ex.target);
      auto pl = reference.model.forward(ex.latent_source, ex.target);
      auto g = reference.model.params().zeros_like();
      reference.model.backward(pc, nll(pc.dist, ex.target).grad, g);
      reference.model.backward(pl, nll(pl.dist, ex.target).grad, g);
      grad.add_scaled(g, 1.0 / batch.size());
    }
    const double norm = std::sqrt(grad.squared_norm());
    const double clip = norm > 1.0 ? 1.0 / norm : 1.0;
    const double lr = lr_schedule(reference.step, s.cfg);
    const double t = reference.step + 1.0;
    auto& params = reference.model.params();
    for (std::size_t p = 0; p < params.count(); ++p) {
      const bool decay = params.values[p].rows > 1;
      for (std::size_t i = 0; i < params.values[p].data.size(); ++i) {
        const double g = grad.values[p].data[i] * clip;
        double& m = reference.adam_m.values[p].data[i];
        double& v = reference.adam_v.values[p].data[i];
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double update = (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        double& x = params.values[p].data[i];
        x -= lr * (update + (decay ? 0.01 * x : 0.0));
      }
    }
    ++reference.step;
  }
  const auto& a = s.state.model.params();
  const auto& b = reference.model.params();
  for (std::size_t p = 0; p < a.count(); ++p) {
    for (std::size_t i = 0; i < a.values[p].data.size(); ++i) {
      CHECK(a.values[p].data[i] == doctest::Approx(b.values[p].data[i]).epsilon(1e-10));
    }
  }
}

TEST_CASE("training is deterministic and resumable") {
  Setup a;
  Setup b;
  run_steps(a.state, a.prepared, a.cfg, 100);
  run_steps(b.state, b.prepared, b.cfg, 50);

  const auto path = temp_path("resume.ckpt");
  save_checkpoint(b.state, path);
  auto resumed = load_checkpoint(path);
  CHECK(resumed.model.params() == b.state.model.params());
  CHECK(resumed.adam_m == b.state.adam_m);
  CHECK(resumed.adam_v == b.state.adam_v);
  CHECK(resumed.rng == b.state.rng);
  CHECK(resumed.order == b.state.order);
  CHECK(resumed.cursor == b.state.cursor);
  CHECK(resumed.vocab == b.state.vocab);
  CHECK(resumed.model.config() == b.state.model.config());

  run_steps(resumed, b.prepared, b.cfg, 100);
  CHECK(resumed.model.params() == a.state.model.params());

  Setup c;
  run_steps(c.state, c.prepared, c.cfg, 100);
  const auto path_a = temp_path("a.ckpt");
  const auto path_c = temp_path("c.ckpt");
  save_checkpoint(a.state, path_a);
  save_checkpoint(c.state, path_c);
  std::ifstream fa(path_a, std::ios::binary), fc(path_c, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  const std::string bytes_c((std::istreambuf_iterator<char>(fc)), {});
  CHECK(bytes_a == bytes_c);
  fs::remove(path);
  fs::remove(path_a);
  fs::remove(path_c);
}

TEST_CASE("checkpoint corruption is detected") {
  Setup s;
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(s.state, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << data;
  };

  write(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), Error);

  auto flipped = bytes;
  flipped[bytes.size() - 100] ^= 0x5a;
  write(flipped);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), Error);

  auto versioned = bytes;
  versioned[8] = 9;
  write(versioned);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("version"), Error);

  write("not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  fs::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("log records") {
  LossBreakdown b{1.0, 2.0, 0.5, 0.25, 3.75};
  const auto j = nlohmann::json::parse(format_log_record(3, 1e-4, b));
  CHECK(j["step"] == 3);
  CHECK(j["total"].get<double>() == 3.75);
  CHECK(j.size() == 7);
}

TEST_CASE("train loop drives to total_steps and reports each step") {
  Setup s;
  s.cfg.total_steps = 12;
  s.cfg.checkpoint_every = 5;
  std::vector<std::size_t> steps;
  std::vector<std::size_t> checkpoints;
  TrainHooks hooks;
  hooks.on_step = [&](std::size_t step, const StepResult& r) {
    steps.push_back(step);
    CHECK(r.loss.total == doctest::Approx(r.loss.nll_c + r.loss.nll_l + r.loss.cl_c_to_l + r.loss.cl_l_to_c));
  };
  hooks.on_checkpoint = [&](const TrainState& st) { checkpoints.push_back(st.step); };
  train(s.state, s.prepared, s.cfg, hooks);
  CHECK(steps.size() == 12);
  CHECK(steps.back() == 12);
  CHECK(checkpoints == std::vector<std::size_t>{5, 10});
  CHECK(std::isfinite(mean_nll(s.state.model, s.prepared)));
}
