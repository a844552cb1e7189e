#include "lotus/error.hpp"
#include "lotus/trainer.hpp"

#include <json.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lotus {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'O', 'T', 'U', 'S', 'C', 'K', 'P'};

class Fnv1a {
public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return hash_; }

private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class Writer {
public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    hash_.update(data, n);
  }
  template <typename T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  std::uint64_t checksum() const { return hash_.value(); }

private:
  std::ostream& out_;
  Fnv1a hash_;
};

class Reader {
public:
  Reader(const std::string& buf, std::string path) : buf_(buf), path_(std::move(path)) {}
  void bytes(void* dst, std::size_t n) {
    if (n > buf_.size() - pos_) {
      throw Error("checkpoint '" + path_ + "' is truncated");
    }
    std::memcpy(dst, buf_.data() + pos_, n);
    hash_.update(buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  std::uint64_t checksum() const { return hash_.value(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

private:
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
  Fnv1a hash_;
};

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},       {"n_heads", c.n_heads},         {"n_layers_enc", c.n_layers_enc},
          {"n_layers_dec", c.n_layers_dec}, {"d_ff", c.d_ff},             {"max_src_len", c.max_src_len},
          {"max_tgt_len", c.max_tgt_len}, {"vocab_size", c.vocab_size}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.n_layers_enc = j.at("n_layers_enc").get<std::size_t>();
  c.n_layers_dec = j.at("n_layers_dec").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.max_src_len = j.at("max_src_len").get<std::size_t>();
  c.max_tgt_len = j.at("max_tgt_len").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_blobs(Writer& w, const Parameters& p) {
  for (const auto& m : p.values) {
    w.bytes(m.data.data(), m.data.size() * sizeof(double));
  }
}

void read_blobs(Reader& r, Parameters& p) {
  for (auto& m : p.values) {
    r.bytes(m.data.data(), m.data.size() * sizeof(double));
  }
}

} // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto& params = state.model.params();
  nlohmann::ordered_json header;
  header["model"] = model_config_json(state.model.config());
  header["vocab"] = state.vocab.regular_tokens();
  auto shapes = nlohmann::json::array();
  for (std::size_t i = 0; i < params.count(); ++i) {
    shapes.push_back({params.names[i], params.values[i].rows, params.values[i].cols});
  }
  header["params"] = shapes;
  header["step"] = state.step;
  header["rng"] = state.rng.serialize();
  header["order"] = state.order;
  header["cursor"] = state.cursor;
  const auto header_text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write checkpoint '" + tmp.string() + "'");
    }
    Writer w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.pod(kCheckpointVersion);
    w.pod(static_cast<std::uint64_t>(header_text.size()));
    w.bytes(header_text.data(), header_text.size());
    write_blobs(w, params);
    write_blobs(w, state.adam_m);
    write_blobs(w, state.adam_v);
    const auto sum = w.checksum();
    out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    out.flush();
    if (!out) {
      throw Error("failed writing checkpoint '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open checkpoint '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  const auto data = buf.str();
  Reader r(data, path.string());

  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) {
    throw Error("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error("checkpoint '" + path.string() + "' has format version " + std::to_string(version) +
                ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = r.pod<std::uint64_t>();
  if (header_len > r.remaining()) {
    throw Error("checkpoint '" + path.string() + "' is truncated");
  }
  std::string header_text(header_len, '\0');
  r.bytes(header_text.data(), header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint '" + path.string() + "' has a corrupt header: " + e.what());
  }

  try {
    const auto config = model_config_from_json(header.at("model"));
    auto tokens = header.at("vocab").get<std::vector<Token>>();
    auto vocab = Vocab::from_tokens(tokens);
    if (vocab.size() != config.vocab_size) {
      throw Error("vocabulary size does not match the model config");
    }
    Seq2SeqModel model(config);
    auto& params = model.params();
    const auto& shapes = header.at("params");
    if (shapes.size() != params.count()) {
      throw Error("parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.count(); ++i) {
      const auto& s = shapes[i];
      if (s.at(0).get<std::string>() != params.names[i] || s.at(1).get<std::size_t>() != params.values[i].rows ||
          s.at(2).get<std::size_t>() != params.values[i].cols) {
        throw Error("parameter '" + params.names[i] + "' has a different name or shape");
      }
    }
    auto m = params.zeros_like();
    auto v = params.zeros_like();
    read_blobs(r, params);
    read_blobs(r, m);
    read_blobs(r, v);
    const auto expected = r.checksum();
    std::uint64_t stored = 0;
    if (r.remaining() != sizeof(stored)) {
      throw Error(r.remaining() < sizeof(stored) ? "file is truncated" : "trailing bytes after checksum");
    }
    std::memcpy(&stored, data.data() + data.size() - sizeof(stored), sizeof(stored));
    if (stored != expected) {
      throw Error("checksum mismatch (file is corrupt)");
    }
    Rng rng;
    rng.deserialize(header.at("rng").get<std::string>());
    TrainState state{std::move(vocab), std::move(model), std::move(m), std::move(v),
                     header.at("step").get<std::size_t>(), std::move(rng),
                     header.at("order").get<std::vector<std::size_t>>(), header.at("cursor").get<std::size_t>()};
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint '" + path.string() + "' has a malformed header: " + e.what());
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind("checkpoint", 0) == 0) {
      throw;
    }
    throw Error("checkpoint '" + path.string() + "': " + what);
  }
}

} // namespace lotus
