#include "lotus/prompts.hpp"

#include "lotus/error.hpp"

#include <algorithm>
#include <charconv>

namespace lotus {

namespace {

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += items[i];
  }
  return out;
}

[[noreturn]] void missing(ControlKind kind, std::string_view field) {
  throw Error("cannot render '" + std::string(kind_name(kind)) + "' prompt: signal '" + std::string(field) +
              "' is empty");
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) {
      break;
    }
    start = pos + 1;
  }
  return parts;
}

[[noreturn]] void bad_flag(std::string_view flag, std::string_view why) {
  throw Error("malformed control flag '" + std::string(flag) + "': " + std::string(why) + "\n" +
              std::string(control_flag_grammar()));
}

std::size_t parse_count(std::string_view flag, const std::string& s) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    bad_flag(flag, "expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

} // namespace

std::string_view kind_name(ControlKind kind) {
  switch (kind) {
  case ControlKind::Length:
    return "length";
  case ControlKind::Abstractiveness:
    return "abstractiveness";
  case ControlKind::NumSentences:
    return "sentences";
  case ControlKind::Keywords:
    return "keywords";
  case ControlKind::Entities:
    return "entities";
  case ControlKind::LengthPlusAbstractiveness:
    return "length+abstractiveness";
  case ControlKind::Latent:
    return "latent";
  }
  return "unknown";
}

ControlKind parse_kind(std::string_view name) {
  for (auto k : {ControlKind::Length, ControlKind::Abstractiveness, ControlKind::NumSentences,
                 ControlKind::Keywords, ControlKind::Entities, ControlKind::LengthPlusAbstractiveness,
                 ControlKind::Latent}) {
    if (kind_name(k) == name) {
      return k;
    }
  }
  throw Error("unknown control kind '" + std::string(name) +
              "' (expected length, abstractiveness, sentences, keywords, entities, "
              "length+abstractiveness or latent)");
}

bool is_numeric_kind(ControlKind kind) {
  return kind == ControlKind::Length || kind == ControlKind::Abstractiveness ||
         kind == ControlKind::NumSentences || kind == ControlKind::LengthPlusAbstractiveness;
}

Prompt latent_prompt() { return render_prompt(ControlKind::Latent, {}); }

Prompt render_prompt(ControlKind kind, const ControlSignals& signals) {
  Prompt p;
  p.kind = kind;
  switch (kind) {
  case ControlKind::Latent:
    p.text = "summarize:";
    break;
  case ControlKind::Length:
    p.text = "summarize with length " + std::to_string(signals.length_bin) + ":";
    break;
  case ControlKind::Abstractiveness:
    p.text = "summarize with abstractiveness " + std::to_string(signals.abstractiveness_bin) + ":";
    break;
  case ControlKind::NumSentences:
    if (signals.n_sentences == 0) {
      missing(kind, "n_sentences");
    }
    p.text = "summarize with " + std::to_string(signals.n_sentences) + " sentences:";
    break;
  case ControlKind::LengthPlusAbstractiveness:
    p.text = "summarize with length " + std::to_string(signals.length_bin) + " and abstractiveness " +
             std::to_string(signals.abstractiveness_bin) + ":";
    break;
  case ControlKind::Keywords:
    if (signals.keywords.empty()) {
      missing(kind, "keywords");
    }
    p.text = "keywords (" + join(signals.keywords, ", ") + ") summarize:";
    break;
  case ControlKind::Entities: {
    if (signals.entities.empty()) {
      missing(kind, "entities");
    }
    // Group surfaces by type, types in order of first appearance.
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;
    for (const auto& e : signals.entities) {
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == e.type; });
      if (it == groups.end()) {
        groups.push_back({e.type, {}});
        it = std::prev(groups.end());
      }
      it->second.push_back(detokenize(e.surface));
    }
    p.text = "summarize with entities";
    for (const auto& [type, surfaces] : groups) {
      p.text += " " + type + "(" + join(surfaces, ", ") + ")";
    }
    p.text += ":";
    break;
  }
  }
  p.tokens = tokenize(p.text);
  return p;
}

TokenSeq build_input(const Prompt& prompt, const Document& doc, std::size_t max_len) {
  if (max_len <= prompt.tokens.size() + 1) {
    throw Error("source budget of " + std::to_string(max_len) + " tokens cannot hold the " +
                std::to_string(prompt.tokens.size()) + "-token '" + std::string(kind_name(prompt.kind)) +
                "' prompt plus document text");
  }
  TokenSeq out = prompt.tokens;
  const auto room = max_len - prompt.tokens.size();
  const auto take = std::min(room, doc.tokens.size());
  out.insert(out.end(), doc.tokens.begin(), doc.tokens.begin() + static_cast<std::ptrdiff_t>(take));
  return out;
}

std::string_view control_flag_grammar() {
  return "control flag grammar: kind=value[,value...]\n"
         "  length=<int>                          -> summarize with length <int>:\n"
         "  abstractiveness=<int>                 -> summarize with abstractiveness <int>:\n"
         "  sentences=<int>                       -> summarize with <int> sentences:\n"
         "  length+abstractiveness=<int>,<int>    -> summarize with length <int> and abstractiveness <int>:\n"
         "  keywords=<kw>[,<kw>...]               -> keywords (<kw>, ...) summarize:\n"
         "  entities=<TYPE>:<surface>[,...]       -> summarize with entities <TYPE>(<surface>, ...) ...:\n"
         "  (no flag)                             -> summarize:";
}

ControlRequest parse_control_flag(std::string_view flag) {
  ControlRequest req;
  if (trim(flag).empty()) {
    return req;
  }
  const auto eq = flag.find('=');
  if (eq == std::string_view::npos) {
    bad_flag(flag, "missing '='");
  }
  const auto name = trim(flag.substr(0, eq));
  const auto value = trim(flag.substr(eq + 1));
  try {
    req.kind = parse_kind(name);
  } catch (const Error&) {
    bad_flag(flag, "unknown kind '" + name + "'");
  }
  if (req.kind == ControlKind::Latent) {
    bad_flag(flag, "the latent prompt takes no value; omit the flag instead");
  }
  if (value.empty()) {
    bad_flag(flag, "empty value");
  }
  const auto parts = split(value, ',');
  if (std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) {
    bad_flag(flag, "empty list element");
  }
  auto single = [&]() -> std::size_t {
    if (parts.size() != 1) {
      bad_flag(flag, "expected exactly one value");
    }
    return parse_count(flag, parts[0]);
  };
  switch (req.kind) {
  case ControlKind::Length:
    req.signals.length_bin = single();
    req.values = {req.signals.length_bin};
    break;
  case ControlKind::Abstractiveness:
    req.signals.abstractiveness_bin = single();
    if (req.signals.abstractiveness_bin > 100) {
      bad_flag(flag, "abstractiveness must be in [0, 100]");
    }
    req.values = {req.signals.abstractiveness_bin};
    break;
  case ControlKind::NumSentences:
    req.signals.n_sentences = single();
    if (req.signals.n_sentences == 0) {
      bad_flag(flag, "sentence count must be positive");
    }
    req.values = {req.signals.n_sentences};
    break;
  case ControlKind::LengthPlusAbstractiveness:
    if (parts.size() != 2) {
      bad_flag(flag, "expected <length>,<abstractiveness>");
    }
    req.signals.length_bin = parse_count(flag, parts[0]);
    req.signals.abstractiveness_bin = parse_count(flag, parts[1]);
    if (req.signals.abstractiveness_bin > 100) {
      bad_flag(flag, "abstractiveness must be in [0, 100]");
    }
    req.values = {req.signals.length_bin, req.signals.abstractiveness_bin};
    break;
  case ControlKind::Keywords:
    for (const auto& p : parts) {
      const auto toks = tokenize(p);
      if (!toks.empty()) {
        req.signals.keywords.push_back(detokenize(toks));
      }
    }
    if (req.signals.keywords.empty()) {
      bad_flag(flag, "no keywords");
    }
    break;
  case ControlKind::Entities:
    for (const auto& p : parts) {
      const auto colon = p.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == p.size()) {
        bad_flag(flag, "entities must be TYPE:surface");
      }
      auto surface = tokenize(p.substr(colon + 1));
      if (surface.empty()) {
        bad_flag(flag, "empty entity surface");
      }
      req.signals.entities.push_back({trim(p.substr(0, colon)), std::move(surface)});
    }
    break;
  case ControlKind::Latent:
    break;
  }
  return req;
}

} // namespace lotus
