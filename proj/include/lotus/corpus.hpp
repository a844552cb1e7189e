#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lotus {

using Token = std::string;
using TokenSeq = std::vector<Token>;
using TokenId = std::int32_t;
using IdSeq = std::vector<TokenId>;

// Lowercases ASCII letters, splits on whitespace and emits every ASCII
// punctuation character as its own token. Bytes >= 0x80 are word characters.
TokenSeq tokenize(std::string_view text);

// Joins tokens with single spaces.
std::string detokenize(std::span<const Token> tokens);

bool is_sentence_terminator(std::string_view token);

// Splits after ".", "!" and "?" tokens. A trailing fragment without a
// terminator forms the last sentence. Never yields an empty sentence.
std::vector<TokenSeq> segment_sentences(std::span<const Token> tokens);

struct Document {
  std::string id;
  std::string raw_text;
  std::vector<TokenSeq> sentences;
  TokenSeq tokens;

  static Document from_text(std::string id, std::string raw_text);
};

struct Example {
  Document document;
  std::string summary_text;
  TokenSeq summary;
  std::vector<TokenSeq> summary_sentences;

  const std::string& id() const { return document.id; }

  static Example from_text(std::string id, std::string document, std::string summary);
};

struct LoadResult {
  std::vector<Example> examples;
  std::size_t skipped = 0;
  // One human-readable line per skipped record.
  std::vector<std::string> warnings;
};

// Reads JSON Lines records {"id"?: str, "document": str, "summary": str}.
// Malformed JSON throws an Error naming the line; records with a missing or
// empty document/summary are skipped and counted. Blank lines are ignored.
// Records without an id are assigned "line-<n>" (1-based line number).
LoadResult load_corpus(const std::filesystem::path& path);
LoadResult parse_corpus(std::string_view jsonl, std::string_view source_name = "<memory>");

void write_corpus(const std::filesystem::path& path, std::span<const Example> examples);
std::string serialize_corpus(std::span<const Example> examples);

class Vocab {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumReserved = 4;

  Vocab();

  // Reserved entries are implicit; `tokens` lists ids 4, 5, ... in order.
  static Vocab from_tokens(std::span<const Token> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const Token& token(TokenId id) const;

  IdSeq encode(std::span<const Token> tokens) const;
  // Drops reserved ids.
  TokenSeq decode(std::span<const TokenId> ids) const;

  // Non-reserved tokens in id order.
  std::vector<Token> regular_tokens() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.id_to_token_ == b.id_to_token_; }

private:
  std::vector<Token> id_to_token_;
  std::unordered_map<Token, TokenId> token_to_id_;
};

// Counts tokens over documents and summaries (plus any `extra` sequences),
// keeps those with count >= min_freq and assigns ids by descending count,
// ties broken lexicographically.
Vocab build_vocab(std::span<const Example> examples, std::size_t min_freq,
                  std::span<const TokenSeq> extra = {});

} // namespace lotus
