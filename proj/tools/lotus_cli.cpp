// lotus: command-line front end for annotation, training, generation and
// evaluation of dual-prompt controllable summarizers.

#include "lotus/corpus.hpp"
#include "lotus/error.hpp"
#include "lotus/evaluate.hpp"
#include "lotus/gradcheck.hpp"
#include "lotus/prompts.hpp"
#include "lotus/signals.hpp"
#include "lotus/synthetic.hpp"
#include "lotus/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace lotus;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write '" + path + "'");
  }
  out << text;
  if (!out) {
    throw Error("failed writing '" + path + "'");
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<Example> read_corpus(const std::string& path) {
  auto loaded = load_corpus(path);
  for (const auto& w : loaded.warnings) {
    std::cerr << "warning: " << w << "\n";
  }
  if (loaded.examples.empty()) {
    throw Error("'" + path + "' contains no usable records");
  }
  return std::move(loaded.examples);
}

Prompt prompt_for(const ControlRequest& req) {
  return req.kind == ControlKind::Latent ? latent_prompt() : render_prompt(req.kind, req.signals);
}

std::vector<double> parse_values(const std::string& spec) {
  std::vector<double> out;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    const auto second = spec.find(':', colon + 1);
    if (second == std::string::npos) {
      throw Error("value range must look like start:stop:step, got '" + spec + "'");
    }
    const double start = std::stod(spec.substr(0, colon));
    const double stop = std::stod(spec.substr(colon + 1, second - colon - 1));
    const double step = std::stod(spec.substr(second + 1));
    if (!(step > 0.0)) {
      throw Error("value range step must be positive");
    }
    for (double v = start; v <= stop + 1e-9; v += step) {
      out.push_back(v);
    }
  } else {
    std::stringstream in(spec);
    std::string part;
    while (std::getline(in, part, ',')) {
      if (!part.empty()) {
        out.push_back(std::stod(part));
      }
    }
  }
  if (out.empty()) {
    throw Error("no sweep values in '" + spec + "'");
  }
  return out;
}

// --- annotate ---------------------------------------------------------------

struct AnnotateArgs {
  std::string input;
  std::string lexicon;
  std::string output;
  std::string stats;
};

int cmd_annotate(const AnnotateArgs& args) {
  const auto examples = read_corpus(args.input);
  std::optional<DictionaryTagger> tagger;
  if (!args.lexicon.empty()) {
    tagger = DictionaryTagger::load(args.lexicon);
  }
  AnnotatorOptions options;
  options.tagger = tagger ? &*tagger : nullptr;
  const auto annotations = annotate_corpus(examples, options);
  write_text(args.output, serialize_annotated(examples, annotations));
  const auto table = format_statistics(signal_statistics(annotations));
  if (args.stats.empty()) {
    std::cerr << table;
  } else {
    write_text(args.stats, table);
  }
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out_dir;
  std::string resume;
  std::vector<std::string> overrides;
  bool quiet = false;
};

int cmd_train(const TrainArgs& args) {
  TrainConfig cfg = args.config.empty() ? TrainConfig{} : load_train_config(args.config);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw Error("--set expects key=value, got '" + kv + "'");
    }
    apply_config_value(cfg, std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
  }
  cfg.validate();
  const auto data = load_annotated(args.data);
  if (data.empty()) {
    throw Error("'" + args.data + "' contains no annotated records");
  }

  std::optional<TrainState> state;
  if (!args.resume.empty()) {
    state.emplace(load_checkpoint(args.resume));
    if (state->step > cfg.total_steps) {
      throw Error("checkpoint step exceeds total_steps");
    }
  } else {
    state.emplace(init_train_state(cfg, build_training_vocab(data, cfg.control_kinds, cfg.vocab_min_freq)));
  }
  // Rendering every prompt up front surfaces missing signals before step 0.
  const auto prepared = prepare_examples(data, cfg.control_kinds, state->vocab, state->model.config());

  fs::create_directories(args.out_dir);
  write_text((fs::path(args.out_dir) / "config.txt").string(), format_train_config(cfg));
  const auto log_path = fs::path(args.out_dir) / "train_log.jsonl";
  std::ofstream log(log_path, args.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) {
    throw Error("cannot write '" + log_path.string() + "'");
  }
  TrainHooks hooks;
  hooks.on_step = [&](std::size_t step, const StepResult& r) {
    log << format_log_record(step, r.lr, r.loss) << '\n';
    if (!args.quiet && (step % 50 == 0 || step == cfg.total_steps)) {
      std::cerr << "step " << step << "/" << cfg.total_steps << " loss " << r.loss.total << "\n";
    }
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(s, fs::path(args.out_dir) / ("checkpoint-" + std::to_string(s.step) + ".ckpt"));
  };
  train(*state, prepared, cfg, hooks);
  log.flush();
  save_checkpoint(*state, fs::path(args.out_dir) / "final.ckpt");
  return 0;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string control;
  bool dump_prompts = false;
  DecodeOptions decode;
};

int cmd_generate(const GenerateArgs& args) {
  const auto request = parse_control_flag(args.control);
  const auto prompt = prompt_for(request);
  const auto examples = read_corpus(args.input);
  if (args.dump_prompts) {
    std::string text;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      text += prompt.text + "\n";
    }
    write_text(args.output, text);
    return 0;
  }
  if (args.checkpoint.empty()) {
    throw Error("generate needs --checkpoint unless --dump-prompts is given");
  }
  const auto state = load_checkpoint(args.checkpoint);
  std::vector<std::string> unseen;
  for (const auto& tok : prompt.tokens) {
    if (!state.vocab.contains(tok)) {
      unseen.push_back(tok);
    }
  }
  if (!unseen.empty()) {
    std::cerr << "warning: prompt tokens never seen in training:";
    for (const auto& tok : unseen) {
      std::cerr << ' ' << tok;
    }
    std::cerr << "\n";
  }
  std::vector<Document> docs;
  for (const auto& ex : examples) {
    docs.push_back(ex.document);
  }
  const auto outputs = generate_summaries(state.model, state.vocab, docs, prompt, args.decode);
  std::string text;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    nlohmann::ordered_json j;
    j["id"] = examples[i].id();
    j["control"] = args.control;
    j["prompt"] = prompt.text;
    j["summary"] = detokenize(outputs[i]);
    text += j.dump() + "\n";
  }
  write_text(args.output, text);
  return 0;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string generations;
  std::string references;
  std::string mode = "f1";
  std::string json_out;
};

int cmd_evaluate(const EvaluateArgs& args) {
  const auto refs = read_corpus(args.references);
  std::map<std::string, const Example*> by_id;
  for (const auto& ex : refs) {
    by_id[ex.id()] = &ex;
  }

  std::vector<GenerationPair> pairs;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> numeric;
  std::vector<double> requested_bins;
  std::vector<double> realized_bins;
  double recall_sum = 0.0;
  std::size_t recall_n = 0;

  std::istringstream in(read_text(args.generations));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(args.generations + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    const auto id = j.value("id", std::string{});
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(args.generations + ":" + std::to_string(line_no) + ": no reference summary for id '" + id + "'");
    }
    const auto& ref = *it->second;
    const auto generated = tokenize(j.value("summary", std::string{}));
    pairs.push_back({generated, ref.summary});

    const auto req = parse_control_flag(j.value("control", std::string{}));
    if (req.kind == ControlKind::Latent) {
      continue;
    }
    const auto attrs = realized_attributes(generated, ref.document);
    auto record = [&](const std::string& name, double want, double got, bool binned) {
      numeric[name].first.push_back(want);
      numeric[name].second.push_back(got);
      if (binned) {
        requested_bins.push_back(want);
        realized_bins.push_back(got);
      }
    };
    switch (req.kind) {
    case ControlKind::Length:
      record("length", static_cast<double>(req.values.at(0)), static_cast<double>(attrs.length), true);
      break;
    case ControlKind::Abstractiveness:
      record("abstractiveness", static_cast<double>(req.values.at(0)), attrs.abstractiveness, true);
      break;
    case ControlKind::NumSentences:
      record("sentences", static_cast<double>(req.values.at(0)), static_cast<double>(attrs.n_sentences), false);
      break;
    case ControlKind::LengthPlusAbstractiveness:
      record("length", static_cast<double>(req.values.at(0)), static_cast<double>(attrs.length), true);
      record("abstractiveness", static_cast<double>(req.values.at(1)), attrs.abstractiveness, true);
      break;
    case ControlKind::Keywords:
      recall_sum += control_recall(req.signals.keywords, generated);
      ++recall_n;
      break;
    case ControlKind::Entities: {
      std::vector<std::string> surfaces;
      for (const auto& e : req.signals.entities) {
        surfaces.push_back(detokenize(e.surface));
      }
      recall_sum += control_recall(surfaces, generated);
      ++recall_n;
      break;
    }
    case ControlKind::Latent:
      break;
    }
  }

  auto report = rouge_report(pairs, parse_rouge_mode(args.mode));
  for (const auto& [name, values] : numeric) {
    report.mad[name] = mad(values.first, values.second);
  }
  if (recall_n > 0) {
    report.control_recall = recall_sum / static_cast<double>(recall_n);
  }
  if (!requested_bins.empty()) {
    report.bin_compliance = bin_compliance(requested_bins, realized_bins);
  }
  std::cout << report_table(report);
  if (!args.json_out.empty()) {
    write_text(args.json_out, report_json(report));
  }
  return 0;
}

// --- sweep ------------------------------------------------------------------

struct SweepArgs {
  std::string checkpoint;
  std::string input;
  std::string kind = "length";
  std::string values;
  std::string csv;
  DecodeOptions decode;
};

int cmd_sweep(const SweepArgs& args) {
  const auto state = load_checkpoint(args.checkpoint);
  const auto examples = read_corpus(args.input);
  const auto values = parse_values(args.values);
  const auto rows = control_sweep(state.model, state.vocab, examples, parse_kind(args.kind), values, args.decode);
  std::cerr << sweep_table(rows);
  write_text(args.csv, sweep_csv(rows));
  return 0;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(const GradcheckOptions& options) {
  const auto result = run_gradcheck(options);
  std::cout << "checked " << result.checked << " scalars, " << result.failures << " above tolerance "
            << options.tolerance << "\n"
            << "max relative error " << result.max_rel_error << " at " << result.worst << "\n"
            << "teacher-branch leak " << result.teacher_leak << "\n"
            << (result.passed() ? "PASS" : "FAIL") << "\n";
  return result.passed() ? 0 : 1;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string task = "length";
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t mean_length = 60;
  std::string output;
  std::string lexicon;
};

int cmd_synth(const SynthArgs& args) {
  if (args.task == "length") {
    synthetic::LengthTaskOptions o;
    o.n_examples = args.n;
    o.seed = args.seed;
    write_text(args.output, serialize_corpus(synthetic::length_task(o)));
  } else if (args.task == "news") {
    synthetic::NewsCorpusOptions o;
    o.n_examples = args.n;
    o.seed = args.seed;
    o.mean_summary_length = args.mean_length;
    o.length_spread = std::min<std::size_t>(o.length_spread, args.mean_length / 2);
    const auto corpus = synthetic::news_corpus(o);
    write_text(args.output, serialize_corpus(corpus.examples));
    if (!args.lexicon.empty()) {
      write_text(args.lexicon, corpus.lexicon);
    }
  } else {
    throw Error("unknown synthetic task '" + args.task + "' (expected length or news)");
  }
  return 0;
}

void add_decode_flags(CLI::App* cmd, DecodeOptions& d) {
  cmd->add_option("--beam", d.beam, "Beam width; 1 decodes greedily")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-steps", d.max_steps, "Maximum generated tokens")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--length-norm", d.length_norm, "Beam score is logprob / length^exponent")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-prompt controllable summarization toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (0 keeps the OpenMP default)")->check(CLI::NonNegativeNumber);

  AnnotateArgs annotate_args;
  auto* annotate = app.add_subcommand("annotate", "Extract control signals from a JSON Lines corpus");
  annotate->add_option("-i,--input", annotate_args.input, "Corpus: {id, document, summary} per line")->required();
  annotate->add_option("-l,--lexicon", annotate_args.lexicon, "Entity lexicon, surface<TAB>TYPE per line");
  annotate->add_option("-o,--output", annotate_args.output, "Annotated JSON Lines output (- for stdout)")->required();
  annotate->add_option("--stats", annotate_args.stats, "Write the statistics table here instead of stderr");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model with the dual-prompt objective");
  train_cmd->add_option("-d,--data", train_args.data, "Annotated JSON Lines")->required();
  train_cmd->add_option("-c,--config", train_args.config, "key = value config file");
  train_cmd->add_option("-o,--out", train_args.out_dir, "Output directory for log and checkpoints")->required();
  train_cmd->add_option("--resume", train_args.resume, "Continue from this checkpoint");
  train_cmd->add_option("--set", train_args.overrides, "Override a config key: --set key=value (repeatable)");
  train_cmd->add_flag("-q,--quiet", train_args.quiet, "No progress lines");

  GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Generate summaries, optionally under a control flag");
  generate->add_option("-m,--checkpoint", gen_args.checkpoint, "Model checkpoint");
  generate->add_option("-i,--input", gen_args.input, "Corpus JSON Lines")->required();
  generate->add_option("-o,--output", gen_args.output, "Output JSON Lines (- for stdout)");
  generate->add_option("--control", gen_args.control, std::string(control_flag_grammar()));
  generate->add_flag("--dump-prompts", gen_args.dump_prompts, "Print the rendered prompt per record and exit");
  add_decode_flags(generate, gen_args.decode);

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score generations against reference summaries");
  evaluate->add_option("-g,--generations", eval_args.generations, "Output of generate")->required();
  evaluate->add_option("-r,--references", eval_args.references, "Corpus with reference summaries")->required();
  evaluate->add_option("--mode", eval_args.mode, "f1 or limited-length-recall")->capture_default_str();
  evaluate->add_option("--json", eval_args.json_out, "Also write the report as JSON here");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Realized attribute and ROUGE-2 across control values");
  sweep->add_option("-m,--checkpoint", sweep_args.checkpoint, "Model checkpoint")->required();
  sweep->add_option("-i,--input", sweep_args.input, "Test corpus JSON Lines")->required();
  sweep->add_option("--kind", sweep_args.kind, "length, abstractiveness or sentences")->capture_default_str();
  sweep->add_option("--values", sweep_args.values, "Comma list or start:stop:step")->required();
  sweep->add_option("--csv", sweep_args.csv, "CSV output (- for stdout)");
  add_decode_flags(sweep, sweep_args.decode);

  GradcheckOptions grad_opts;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the training gradient");
  gradcheck->add_option("--seed", grad_opts.seed, "Model seed")->capture_default_str();
  gradcheck->add_option("--d-model", grad_opts.d_model, "Model width")->capture_default_str();
  gradcheck->add_option("--vocab", grad_opts.vocab_size, "Vocabulary size")->capture_default_str();
  gradcheck->add_option("--samples", grad_opts.samples, "Random scalars to check; 0 checks all")->capture_default_str();
  gradcheck->add_option("--tolerance", grad_opts.tolerance, "Relative error bound")->capture_default_str();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  synth->add_option("--task", synth_args.task, "length or news")->capture_default_str();
  synth->add_option("-n", synth_args.n, "Number of examples")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
  synth->add_option("--mean-length", synth_args.mean_length, "Mean summary length (news)")->capture_default_str();
  synth->add_option("-o,--output", synth_args.output, "Corpus output (- for stdout)")->required();
  synth->add_option("--lexicon", synth_args.lexicon, "Entity lexicon output (news)");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) {
    omp_set_num_threads(threads);
  }
  try {
    if (*annotate) {
      return cmd_annotate(annotate_args);
    }
    if (*train_cmd) {
      return cmd_train(train_args);
    }
    if (*generate) {
      return cmd_generate(gen_args);
    }
    if (*evaluate) {
      return cmd_evaluate(eval_args);
    }
    if (*sweep) {
      return cmd_sweep(sweep_args);
    }
    if (*gradcheck) {
      return cmd_gradcheck(grad_opts);
    }
    if (*synth) {
      return cmd_synth(synth_args);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
