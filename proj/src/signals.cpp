#include "lotus/signals.hpp"

#include "lotus/error.hpp"
#include "lotus/rouge.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

namespace lotus {

namespace {

// Interned view of a document and summary so the greedy search can score
// candidate subsets with integer n-gram tables instead of string maps.
class OracleScorer {
public:
  OracleScorer(const Document& doc, std::span<const Token> summary) {
    sentences_.reserve(doc.sentences.size());
    for (const auto& s : doc.sentences) {
      sentences_.push_back(intern(s));
    }
    const auto ref = intern(summary);
    ref_len_ = ref.size();
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ++ref_uni_[ref[i]];
      if (i + 1 < ref.size()) {
        ++ref_bi_[pack(ref[i], ref[i + 1])];
      }
    }
  }

  double score(std::span<const std::size_t> sorted_indices) const {
    std::vector<std::uint32_t> cand;
    for (auto i : sorted_indices) {
      cand.insert(cand.end(), sentences_[i].begin(), sentences_[i].end());
    }
    std::unordered_map<std::uint32_t, std::size_t> uni;
    std::unordered_map<std::uint64_t, std::size_t> bi;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      ++uni[cand[i]];
      if (i + 1 < cand.size()) {
        ++bi[pack(cand[i], cand[i + 1])];
      }
    }
    std::size_t o1 = 0;
    for (auto& [k, c] : uni) {
      if (auto it = ref_uni_.find(k); it != ref_uni_.end()) {
        o1 += std::min(c, it->second);
      }
    }
    std::size_t o2 = 0;
    for (auto& [k, c] : bi) {
      if (auto it = ref_bi_.find(k); it != ref_bi_.end()) {
        o2 += std::min(c, it->second);
      }
    }
    const auto n = static_cast<double>(cand.size());
    const auto m = static_cast<double>(ref_len_);
    const auto r1 = RougeScore::from_counts(static_cast<double>(o1), n, m);
    const auto r2 = RougeScore::from_counts(static_cast<double>(o2), cand.size() >= 2 ? n - 1 : 0.0,
                                            ref_len_ >= 2 ? m - 1 : 0.0);
    return 0.5 * (r1.f1 + r2.f1);
  }

  std::size_t sentence_count() const { return sentences_.size(); }

private:
  static std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::vector<std::uint32_t> intern(std::span<const Token> seq) {
    std::vector<std::uint32_t> ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) {
      auto [it, inserted] = ids_.try_emplace(t, static_cast<std::uint32_t>(ids_.size()));
      ids.push_back(it->second);
    }
    return ids;
  }

  std::unordered_map<Token, std::uint32_t> ids_;
  std::vector<std::vector<std::uint32_t>> sentences_;
  std::unordered_map<std::uint32_t, std::size_t> ref_uni_;
  std::unordered_map<std::uint64_t, std::size_t> ref_bi_;
  std::size_t ref_len_ = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

} // namespace

// --- entity tagging --------------------------------------------------------

void DictionaryTagger::add(std::string_view surface, std::string type) {
  auto tokens = tokenize(surface);
  if (tokens.empty()) {
    throw Error("lexicon entry has an empty surface");
  }
  if (type.empty()) {
    throw Error("lexicon entry '" + std::string(surface) + "' has an empty type");
  }
  std::size_t node = 0;
  for (const auto& t : tokens) {
    auto it = nodes_[node].next.find(t);
    if (it == nodes_[node].next.end()) {
      nodes_.emplace_back();
      it = nodes_[node].next.emplace(t, nodes_.size() - 1).first;
    }
    node = it->second;
  }
  // First definition of a surface wins.
  if (!nodes_[node].type) {
    nodes_[node].type = type;
    entries_.emplace_back(std::move(tokens), std::move(type));
  }
}

std::vector<EntitySpan> DictionaryTagger::tag(std::span<const Token> tokens) const {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t node = 0;
    std::size_t best_end = 0;
    const std::string* best_type = nullptr;
    for (std::size_t j = i; j < tokens.size(); ++j) {
      auto it = nodes_[node].next.find(tokens[j]);
      if (it == nodes_[node].next.end()) {
        break;
      }
      node = it->second;
      if (nodes_[node].type) {
        best_end = j + 1;
        best_type = &*nodes_[node].type;
      }
    }
    if (best_type) {
      spans.push_back({i, best_end, *best_type});
      i = best_end;
    } else {
      ++i;
    }
  }
  return spans;
}

DictionaryTagger DictionaryTagger::parse(std::string_view text) {
  DictionaryTagger tagger;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error("lexicon line " + std::to_string(line_no) + ": expected 'surface<TAB>TYPE'");
    }
    const auto surface = trim(std::string_view(line).substr(0, tab));
    const auto type = trim(std::string_view(line).substr(tab + 1));
    if (surface.empty() || type.empty() || tokenize(surface).empty()) {
      throw Error("lexicon line " + std::to_string(line_no) + ": empty surface or type");
    }
    tagger.add(surface, type);
  }
  return tagger;
}

DictionaryTagger DictionaryTagger::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open lexicon file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

// --- oracle and numeric signals -------------------------------------------

double oracle_score(const Document& doc, std::span<const std::size_t> indices,
                    std::span<const Token> summary) {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  return OracleScorer(doc, summary).score(sorted);
}

OracleSelection extractive_oracle(const Document& doc, std::span<const Token> summary) {
  if (summary.empty()) {
    throw Error("extractive_oracle: empty summary");
  }
  if (doc.sentences.empty()) {
    throw Error("extractive_oracle: document '" + doc.id + "' has no sentences");
  }
  const OracleScorer scorer(doc, summary);
  OracleSelection sel;
  std::vector<bool> used(scorer.sentence_count(), false);
  while (true) {
    double best = sel.score;
    std::optional<std::size_t> best_idx;
    for (std::size_t s = 0; s < scorer.sentence_count(); ++s) {
      if (used[s]) {
        continue;
      }
      auto trial = sel.indices;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), s), s);
      const double score = scorer.score(trial);
      if (score > best) {
        best = score;
        best_idx = s;
      }
    }
    if (!best_idx) {
      break;
    }
    used[*best_idx] = true;
    sel.indices.insert(std::upper_bound(sel.indices.begin(), sel.indices.end(), *best_idx), *best_idx);
    sel.score = best;
  }
  return sel;
}

std::size_t bin5(double value) {
  if (!(value > 0.0)) {
    return 0;
  }
  return 5 * static_cast<std::size_t>(std::floor(value / 5.0 + 1e-9));
}

double abstractiveness_raw(const Document& doc, std::span<const Token> summary) {
  return 100.0 * (1.0 - extractive_oracle(doc, summary).score);
}

std::size_t abstractiveness(const Document& doc, std::span<const Token> summary) {
  return std::min<std::size_t>(100, bin5(abstractiveness_raw(doc, summary)));
}

std::size_t length_bin(std::span<const Token> summary) {
  if (summary.empty()) {
    throw Error("length_bin: empty summary");
  }
  return 5 * (summary.size() / 5);
}

std::size_t count_sentences(std::span<const TokenSeq> summary_sentences) {
  return summary_sentences.size();
}

// --- keywords and entities -------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> lcs_alignment(std::span<const Token> a,
                                                               std::span<const Token> b) {
  const auto n = a.size();
  const auto m = b.size();
  // suffix[i][j] = LCS length of a[i..] and b[j..]
  std::vector<std::vector<std::size_t>> suffix(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      suffix[i][j] = a[i] == b[j] ? suffix[i + 1][j + 1] + 1 : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < n && j < m && suffix[i][j] > 0) {
    const auto need = suffix[i][j];
    bool found = false;
    for (std::size_t ii = i; ii < n && !found; ++ii) {
      for (std::size_t jj = j; jj < m; ++jj) {
        if (a[ii] == b[jj] && suffix[ii + 1][jj + 1] + 1 == need) {
          matches.emplace_back(ii, jj);
          i = ii + 1;
          j = jj + 1;
          found = true;
          break;
        }
      }
    }
  }
  return matches;
}

TokenSeq extract_keywords(std::span<const Token> summary, std::span<const TokenSeq> oracle_sentences,
                          const std::unordered_set<Token>& stopwords) {
  TokenSeq keywords;
  std::unordered_set<Token> seen;
  for (const auto& sentence : oracle_sentences) {
    for (auto [i, j] : lcs_alignment(sentence, summary)) {
      const auto& tok = sentence[i];
      if (stopwords.contains(tok) || seen.contains(tok)) {
        continue;
      }
      seen.insert(tok);
      keywords.push_back(tok);
    }
  }
  return keywords;
}

std::vector<Entity> extract_entities(std::span<const Token> summary, const EntityTagger& tagger) {
  std::vector<Entity> out;
  std::set<std::pair<std::string, TokenSeq>> seen;
  for (const auto& span : tagger.tag(summary)) {
    TokenSeq surface(summary.begin() + static_cast<std::ptrdiff_t>(span.begin),
                     summary.begin() + static_cast<std::ptrdiff_t>(span.end));
    if (seen.emplace(span.type, surface).second) {
      out.push_back({span.type, std::move(surface)});
    }
  }
  return out;
}

std::vector<std::size_t> sample_subset_indices(std::size_t count, Rng& rng) {
  if (count == 0) {
    throw Error("sample_control_subset: no items to sample from");
  }
  const auto max_n = std::min<std::size_t>(5, count);
  const auto n = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(max_n)));
  std::vector<std::size_t> pool(count);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first n slots become a uniform n-subset.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(count - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// --- annotation pipeline ---------------------------------------------------

Annotation annotate(const Example& example, const AnnotatorOptions& options) {
  const auto& stopwords = options.stopwords ? *options.stopwords : default_stopwords();
  Annotation a;
  a.oracle = extractive_oracle(example.document, example.summary);
  a.length = example.summary.size();
  a.abstractiveness_raw = 100.0 * (1.0 - a.oracle.score);
  a.signals.length_bin = length_bin(example.summary);
  a.signals.abstractiveness_bin = std::min<std::size_t>(100, bin5(a.abstractiveness_raw));
  a.signals.n_sentences = count_sentences(example.summary_sentences);
  std::vector<TokenSeq> oracle_sentences;
  for (auto i : a.oracle.indices) {
    oracle_sentences.push_back(example.document.sentences[i]);
  }
  a.signals.keywords = extract_keywords(example.summary, oracle_sentences, stopwords);
  if (options.tagger) {
    a.signals.entities = extract_entities(example.summary, *options.tagger);
  }
  return a;
}

std::vector<Annotation> annotate_corpus(std::span<const Example> examples, const AnnotatorOptions& options) {
  std::vector<Annotation> out(examples.size());
  std::vector<std::string> errors(examples.size());
  const auto n = static_cast<long>(examples.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = annotate(examples[k], options);
    } catch (const std::exception& e) {
      errors[k] = "example '" + examples[k].id() + "': " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) {
      throw Error(e);
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json signals_to_json(const ControlSignals& s) {
  nlohmann::ordered_json j;
  j["length_bin"] = s.length_bin;
  j["abstractiveness"] = s.abstractiveness_bin;
  j["n_sentences"] = s.n_sentences;
  j["keywords"] = s.keywords;
  auto ents = nlohmann::ordered_json::array();
  for (const auto& e : s.entities) {
    ents.push_back({e.type, detokenize(e.surface)});
  }
  j["entities"] = ents;
  return j;
}

ControlSignals signals_from_json(const nlohmann::json& j) {
  ControlSignals s;
  s.length_bin = j.at("length_bin").get<std::size_t>();
  s.abstractiveness_bin = j.at("abstractiveness").get<std::size_t>();
  s.n_sentences = j.at("n_sentences").get<std::size_t>();
  s.keywords = j.at("keywords").get<TokenSeq>();
  for (const auto& e : j.at("entities")) {
    if (!e.is_array() || e.size() != 2) {
      throw Error("entity entries must be [type, surface] pairs");
    }
    s.entities.push_back({e[0].get<std::string>(), tokenize(e[1].get<std::string>())});
  }
  return s;
}

} // namespace

std::string serialize_annotated(std::span<const Example> examples, std::span<const Annotation> annotations) {
  if (examples.size() != annotations.size()) {
    throw Error("serialize_annotated: examples and annotations differ in length");
  }
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    nlohmann::ordered_json record;
    record["id"] = examples[i].id();
    record["document"] = examples[i].document.raw_text;
    record["summary"] = examples[i].summary_text;
    record["signals"] = signals_to_json(annotations[i].signals);
    out += record.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<AnnotatedExample> parse_annotated(std::string_view jsonl, std::string_view source_name) {
  auto corpus = parse_corpus(jsonl, source_name);
  if (corpus.skipped > 0) {
    throw Error(std::string(source_name) + ": annotated corpus contains " + std::to_string(corpus.skipped) +
                " invalid record(s); first: " + corpus.warnings.front());
  }
  // Second pass for the signals objects; ids identify records.
  std::vector<AnnotatedExample> out;
  out.reserve(corpus.examples.size());
  std::size_t line_no = 0;
  std::size_t next = 0;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const auto record = nlohmann::json::parse(line);
    auto it = record.find("signals");
    if (it == record.end()) {
      throw Error(std::string(source_name) + ":" + std::to_string(line_no) + ": record has no 'signals' object");
    }
    AnnotatedExample a;
    a.example = std::move(corpus.examples.at(next++));
    try {
      a.signals = signals_from_json(*it);
    } catch (const std::exception& e) {
      throw Error(std::string(source_name) + ":" + std::to_string(line_no) + ": bad signals: " + e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<AnnotatedExample> load_annotated(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open annotated corpus '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_annotated(buf.str(), path.string());
}

SignalStatistics signal_statistics(std::span<const Annotation> annotations) {
  SignalStatistics st;
  st.n_examples = annotations.size();
  if (annotations.empty()) {
    return st;
  }
  for (const auto& a : annotations) {
    st.keywords += static_cast<double>(a.signals.keywords.size());
    st.entities += static_cast<double>(a.signals.entities.size());
    st.length += static_cast<double>(a.length);
    st.abstractiveness += a.abstractiveness_raw;
    st.sentences += static_cast<double>(a.signals.n_sentences);
  }
  const auto n = static_cast<double>(annotations.size());
  st.keywords /= n;
  st.entities /= n;
  st.length /= n;
  st.abstractiveness /= n;
  st.sentences /= n;
  return st;
}

std::string format_statistics(const SignalStatistics& stats) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(18) << "Control signals" << std::right << std::setw(10) << "average" << '\n';
  auto row = [&](const char* name, double v) {
    out << std::left << std::setw(18) << name << std::right << std::setw(10) << v << '\n';
  };
  row("# of keywords", stats.keywords);
  row("# of entities", stats.entities);
  row("Length", stats.length);
  row("Abstractiveness", stats.abstractiveness);
  row("# of sentences", stats.sentences);
  out << std::left << std::setw(18) << "examples" << std::right << std::setw(10) << stats.n_examples << '\n';
  return out.str();
}

} // namespace lotus
