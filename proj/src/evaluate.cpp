#include "lotus/evaluate.hpp"

#include "lotus/error.hpp"
#include "lotus/signals.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace lotus {

namespace {

std::string lower_ascii(std::string s) {
  for (auto& c : s) {
    if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return s;
}

bool contains_run(std::span<const Token> haystack, std::span<const Token> needle) {
  if (needle.empty() || needle.size() > haystack.size()) {
    return false;
  }
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

} // namespace

RougeMode parse_rouge_mode(std::string_view name) {
  if (name == "f1" || name == "full-f1") {
    return RougeMode::FullF1;
  }
  if (name == "recall" || name == "limited-length-recall") {
    return RougeMode::LimitedLengthRecall;
  }
  throw Error("unknown ROUGE mode '" + std::string(name) + "' (expected f1 or limited-length-recall)");
}

EvalReport rouge_report(std::span<const GenerationPair> pairs, RougeMode mode) {
  if (pairs.empty()) {
    throw Error("rouge_report: no generation/reference pairs");
  }
  EvalReport report;
  report.n_examples = pairs.size();
  const double inv = 1.0 / static_cast<double>(pairs.size());
  auto accumulate = [inv](RougeScore& acc, const RougeScore& s) {
    acc.precision += s.precision * inv;
    acc.recall += s.recall * inv;
    acc.f1 += s.f1 * inv;
  };
  for (const auto& p : pairs) {
    const auto score = [&](RougeMetric m) {
      return mode == RougeMode::FullF1 ? rouge(p.generated, p.reference, m)
                                       : limited_length_recall(p.generated, p.reference, m);
    };
    accumulate(report.rouge1, score(RougeMetric::Rouge1));
    accumulate(report.rouge2, score(RougeMetric::Rouge2));
    accumulate(report.rougeL, score(RougeMetric::RougeL));
  }
  return report;
}

double mad(std::span<const double> requested, std::span<const double> realized) {
  if (requested.size() != realized.size()) {
    throw Error("mad: " + std::to_string(requested.size()) + " requested values but " +
                std::to_string(realized.size()) + " realized values");
  }
  if (requested.empty()) {
    throw Error("mad: no values");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < requested.size(); ++i) {
    sum += std::abs(requested[i] - realized[i]);
  }
  return sum / static_cast<double>(requested.size());
}

RealizedAttributes realized_attributes(std::span<const Token> generated, const Document& source) {
  RealizedAttributes out;
  if (generated.empty()) {
    return out;
  }
  out.length = generated.size();
  out.n_sentences = count_sentences(segment_sentences(generated));
  out.abstractiveness = source.sentences.empty() ? 100.0 : abstractiveness_raw(source, generated);
  return out;
}

double control_recall(std::span<const std::string> requested, std::span<const Token> generated) {
  if (requested.empty()) {
    throw Error("control_recall: no requested items");
  }
  TokenSeq lowered;
  lowered.reserve(generated.size());
  for (const auto& t : generated) {
    lowered.push_back(lower_ascii(t));
  }
  std::size_t hits = 0;
  for (const auto& item : requested) {
    const auto needle = tokenize(item);
    if (needle.empty()) {
      throw Error("control_recall: requested item '" + item + "' has no tokens");
    }
    hits += contains_run(lowered, needle) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(requested.size());
}

double bin_compliance(std::span<const double> requested, std::span<const double> realized, double tolerance) {
  if (requested.size() != realized.size()) {
    throw Error("bin_compliance: length mismatch");
  }
  if (requested.empty()) {
    throw Error("bin_compliance: no values");
  }
  std::size_t inside = 0;
  for (std::size_t i = 0; i < requested.size(); ++i) {
    inside += std::abs(realized[i] - requested[i]) < tolerance ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(requested.size());
}

std::vector<TokenSeq> generate_summaries(const Seq2SeqModel& model, const Vocab& vocab,
                                         std::span<const Document> documents, const Prompt& prompt,
                                         const DecodeOptions& options) {
  if (options.beam == 0) {
    throw Error("beam width must be >= 1");
  }
  std::vector<TokenSeq> out(documents.size());
  std::vector<std::string> errors(documents.size());
  const auto n = static_cast<long>(documents.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const auto src = vocab.encode(build_input(prompt, documents[k], model.config().max_src_len));
      const auto ids = options.beam == 1
                           ? greedy_decode(model, src, options.max_steps)
                           : beam_decode(model, src, BeamOptions{options.beam, options.max_steps, options.length_norm});
      out[k] = vocab.decode(ids);
    } catch (const std::exception& e) {
      errors[k] = "document '" + documents[k].id + "': " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) {
      throw Error(e);
    }
  }
  return out;
}

double attribute_for(ControlKind kind, const RealizedAttributes& attrs) {
  switch (kind) {
  case ControlKind::Length:
    return static_cast<double>(attrs.length);
  case ControlKind::Abstractiveness:
    return attrs.abstractiveness;
  case ControlKind::NumSentences:
    return static_cast<double>(attrs.n_sentences);
  default:
    throw Error("control kind '" + std::string(kind_name(kind)) + "' has no scalar attribute");
  }
}

std::vector<SweepRow> control_sweep(const Seq2SeqModel& model, const Vocab& vocab, std::span<const Example> examples,
                                    ControlKind kind, std::span<const double> values, const DecodeOptions& options) {
  if (values.empty()) {
    throw Error("control_sweep: no values");
  }
  if (examples.empty()) {
    throw Error("control_sweep: no examples");
  }
  if (kind != ControlKind::Length && kind != ControlKind::Abstractiveness && kind != ControlKind::NumSentences) {
    throw Error("control_sweep: kind '" + std::string(kind_name(kind)) + "' is not a single numeric control");
  }
  std::vector<Document> documents;
  documents.reserve(examples.size());
  for (const auto& ex : examples) {
    documents.push_back(ex.document);
  }

  std::vector<SweepRow> rows;
  for (double value : values) {
    if (!(value >= 0.0) || value != std::floor(value)) {
      throw Error("control_sweep: value " + fixed(value, 3) + " is not a non-negative integer");
    }
    ControlSignals signals;
    const auto v = static_cast<std::size_t>(value);
    signals.length_bin = v;
    signals.abstractiveness_bin = v;
    signals.n_sentences = v;
    const auto prompt = render_prompt(kind, signals);
    const auto generated = generate_summaries(model, vocab, documents, prompt, options);

    std::vector<double> realized(examples.size());
    std::vector<double> r2(examples.size());
    const auto n = static_cast<long>(examples.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      realized[k] = attribute_for(kind, realized_attributes(generated[k], examples[k].document));
      r2[k] = rouge_n(generated[k], examples[k].summary, 2).f1;
    }
    SweepRow row;
    row.value = value;
    for (std::size_t k = 0; k < examples.size(); ++k) {
      row.mean_attribute += realized[k];
      row.mean_rouge2 += r2[k];
    }
    row.mean_attribute /= static_cast<double>(examples.size());
    row.mean_rouge2 /= static_cast<double>(examples.size());
    const std::vector<double> requested(examples.size(), value);
    row.bin_compliance = bin_compliance(requested, realized);
    rows.push_back(row);
  }
  return rows;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto score = [](const RougeScore& s) {
    return nlohmann::ordered_json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  j["n_examples"] = report.n_examples;
  j["rouge1"] = score(report.rouge1);
  j["rouge2"] = score(report.rouge2);
  j["rougeL"] = score(report.rougeL);
  j["mad"] = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.mad) {
    j["mad"][name] = value;
  }
  j["control_recall"] = report.control_recall ? nlohmann::ordered_json(*report.control_recall) : nullptr;
  j["bin_compliance"] = report.bin_compliance ? nlohmann::ordered_json(*report.bin_compliance) : nullptr;
  return j.dump(2) + "\n";
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s\n", "metric", "precision", "recall", "f1");
  out << line;
  auto row = [&](const char* name, const RougeScore& s) {
    std::snprintf(line, sizeof line, "%-16s %10.4f %10.4f %10.4f\n", name, s.precision, s.recall, s.f1);
    out << line;
  };
  row("ROUGE-1", report.rouge1);
  row("ROUGE-2", report.rouge2);
  row("ROUGE-L", report.rougeL);
  for (const auto& [name, value] : report.mad) {
    std::snprintf(line, sizeof line, "%-16s %10.4f\n", ("MAD " + name).c_str(), value);
    out << line;
  }
  if (report.control_recall) {
    std::snprintf(line, sizeof line, "%-16s %10.4f\n", "control recall", *report.control_recall);
    out << line;
  }
  if (report.bin_compliance) {
    std::snprintf(line, sizeof line, "%-16s %10.4f\n", "bin compliance", *report.bin_compliance);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-16s %10zu\n", "examples", report.n_examples);
  out << line;
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "value,mean_attribute,mean_rouge2\n";
  for (const auto& r : rows) {
    out << fixed(r.value, 0) << ',' << fixed(r.mean_attribute, 6) << ',' << fixed(r.mean_rouge2, 6) << '\n';
  }
  return out.str();
}

std::string sweep_table(std::span<const SweepRow> rows) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%8s %16s %12s %12s\n", "value", "mean attribute", "ROUGE-2", "compliance");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%8.0f %16.3f %12.4f %12.3f\n", r.value, r.mean_attribute, r.mean_rouge2,
                  r.bin_compliance);
    out << line;
  }
  return out.str();
}

} // namespace lotus
