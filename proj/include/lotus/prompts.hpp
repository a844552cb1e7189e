#pragma once

#include "lotus/corpus.hpp"
#include "lotus/signals.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lotus {

enum class ControlKind {
  Length,
  Abstractiveness,
  NumSentences,
  Keywords,
  Entities,
  LengthPlusAbstractiveness,
  Latent,
};

// Stable names used in config files, CLI flags and logs:
// length, abstractiveness, sentences, keywords, entities,
// length+abstractiveness, latent.
std::string_view kind_name(ControlKind kind);
ControlKind parse_kind(std::string_view name);
bool is_numeric_kind(ControlKind kind);

struct Prompt {
  ControlKind kind = ControlKind::Latent;
  std::string text;
  TokenSeq tokens;
};

// Renders the textual prompt for `kind` from the signal values it needs.
// Throws if a required signal is empty (keywords, entities) for the kind.
Prompt render_prompt(ControlKind kind, const ControlSignals& signals);

Prompt latent_prompt();

// prompt ++ document, with the document tail truncated so the result holds
// at most max_len tokens. The prompt is never truncated.
TokenSeq build_input(const Prompt& prompt, const Document& doc, std::size_t max_len);

// Parsed `kind=value[,value...]` control flag.
struct ControlRequest {
  ControlKind kind = ControlKind::Latent;
  ControlSignals signals;
  // The numeric value(s) requested, for numeric kinds (length, abstractiveness
  // or sentences; length then abstractiveness for the composite kind).
  std::vector<std::size_t> values;
};

// Grammar of the control flag accepted by the CLI.
std::string_view control_flag_grammar();

// Parses e.g. "length=25", "keywords=a,b", "entities=PERSON:bob barker,ORG:acme",
// "sentences=2", "abstractiveness=40", "length+abstractiveness=30,40".
// An empty/absent flag means the latent prompt.
ControlRequest parse_control_flag(std::string_view flag);

} // namespace lotus
