#include "lotus/corpus.hpp"

#include "lotus/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

namespace lotus {

namespace {

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

bool is_punct(unsigned char c) {
  return c < 0x80 && ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
                      (c >= 123 && c <= 126));
}

char lower(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < text.size()) {
        lines.push_back(text.substr(start));
      }
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return is_space(static_cast<unsigned char>(c)); });
}

struct ParsedLine {
  std::optional<Example> example;
  std::string warning;
  std::string error;
};

ParsedLine parse_line(std::string_view line, std::size_t line_no, std::string_view source) {
  ParsedLine out;
  nlohmann::json record;
  try {
    record = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    out.error = std::string(source) + ":" + std::to_string(line_no) + ": malformed JSON record (" +
                e.what() + ")";
    return out;
  }
  if (!record.is_object()) {
    out.error = std::string(source) + ":" + std::to_string(line_no) + ": record is not a JSON object";
    return out;
  }
  const auto where = std::string(source) + ":" + std::to_string(line_no);
  std::string id = "line-" + std::to_string(line_no);
  if (auto it = record.find("id"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) {
      out.error = where + ": field 'id' must be a string";
      return out;
    }
    id = it->get<std::string>();
  }
  auto text_field = [&](const char* name) -> std::optional<std::string> {
    auto it = record.find(name);
    if (it == record.end() || !it->is_string()) {
      return std::nullopt;
    }
    return it->get<std::string>();
  };
  auto document = text_field("document");
  auto summary = text_field("summary");
  if (!document || tokenize(*document).empty()) {
    out.warning = where + ": skipped record '" + id + "': missing or empty 'document'";
    return out;
  }
  if (!summary || tokenize(*summary).empty()) {
    out.warning = where + ": skipped record '" + id + "': missing or empty 'summary'";
    return out;
  }
  out.example = Example::from_text(std::move(id), std::move(*document), std::move(*summary));
  return out;
}

} // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(lower(c));
    }
  }
  flush();
  return tokens;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      out.push_back(' ');
    }
    out += tokens[i];
  }
  return out;
}

bool is_sentence_terminator(std::string_view token) {
  return token == "." || token == "!" || token == "?";
}

std::vector<TokenSeq> segment_sentences(std::span<const Token> tokens) {
  std::vector<TokenSeq> sentences;
  TokenSeq current;
  for (const auto& tok : tokens) {
    current.push_back(tok);
    if (is_sentence_terminator(tok)) {
      sentences.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    sentences.push_back(std::move(current));
  }
  return sentences;
}

Document Document::from_text(std::string id, std::string raw_text) {
  Document doc;
  doc.id = std::move(id);
  doc.tokens = tokenize(raw_text);
  doc.sentences = segment_sentences(doc.tokens);
  doc.raw_text = std::move(raw_text);
  return doc;
}

Example Example::from_text(std::string id, std::string document, std::string summary) {
  Example ex;
  ex.document = Document::from_text(std::move(id), std::move(document));
  ex.summary = tokenize(summary);
  ex.summary_sentences = segment_sentences(ex.summary);
  ex.summary_text = std::move(summary);
  return ex;
}

LoadResult parse_corpus(std::string_view jsonl, std::string_view source_name) {
  const auto lines = split_lines(jsonl);
  std::vector<ParsedLine> parsed(lines.size());
  const auto count = static_cast<long>(lines.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (long i = 0; i < count; ++i) {
    const auto line = lines[static_cast<std::size_t>(i)];
    if (!blank(line)) {
      parsed[static_cast<std::size_t>(i)] = parse_line(line, static_cast<std::size_t>(i) + 1, source_name);
    }
  }
  LoadResult result;
  for (auto& p : parsed) {
    if (!p.error.empty()) {
      throw Error(p.error);
    }
    if (p.example) {
      result.examples.push_back(std::move(*p.example));
    } else if (!p.warning.empty()) {
      ++result.skipped;
      result.warnings.push_back(std::move(p.warning));
    }
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open corpus file '" + path.string() + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus(buffer.str(), path.string());
}

std::string serialize_corpus(std::span<const Example> examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::ordered_json record;
    record["id"] = ex.id();
    record["document"] = ex.document.raw_text;
    record["summary"] = ex.summary_text;
    out += record.dump();
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error("cannot write corpus file '" + path.string() + "'");
  }
  out << serialize_corpus(examples);
}

Vocab::Vocab() : id_to_token_{"<pad>", "<bos>", "<eos>", "<unk>"} {
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
  }
}

Vocab Vocab::from_tokens(std::span<const Token> tokens) {
  Vocab v;
  for (const auto& tok : tokens) {
    if (v.token_to_id_.contains(tok)) {
      throw Error("duplicate vocabulary entry '" + tok + "'");
    }
    v.token_to_id_.emplace(tok, static_cast<TokenId>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(Token(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return token_to_id_.contains(Token(token)); }

const Token& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw Error("token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

IdSeq Vocab::encode(std::span<const Token> tokens) const {
  IdSeq ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    ids.push_back(id(t));
  }
  return ids;
}

TokenSeq Vocab::decode(std::span<const TokenId> ids) const {
  TokenSeq out;
  for (auto i : ids) {
    if (i >= static_cast<TokenId>(kNumReserved)) {
      out.push_back(token(i));
    }
  }
  return out;
}

std::vector<Token> Vocab::regular_tokens() const {
  return {id_to_token_.begin() + kNumReserved, id_to_token_.end()};
}

Vocab build_vocab(std::span<const Example> examples, std::size_t min_freq,
                  std::span<const TokenSeq> extra) {
  if (min_freq < 1) {
    throw Error("build_vocab: min_freq must be >= 1");
  }
  if (examples.empty()) {
    throw Error("build_vocab: empty corpus");
  }
  std::map<Token, std::size_t> counts;
  auto count = [&](std::span<const Token> seq) {
    for (const auto& t : seq) {
      ++counts[t];
    }
  };
  for (const auto& ex : examples) {
    count(ex.document.tokens);
    count(ex.summary);
  }
  for (const auto& seq : extra) {
    count(seq);
  }
  const Vocab reserved;
  std::vector<std::pair<Token, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && !reserved.contains(tok)) {
      kept.emplace_back(tok, n);
    }
  }
  // std::map iteration is already lexicographic; a stable sort by count keeps that as the tie-break.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<Token> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) {
    tokens.push_back(tok);
  }
  return Vocab::from_tokens(tokens);
}

} // namespace lotus
