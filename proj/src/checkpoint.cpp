#include "cats/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace cats {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'T', 'S'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

void put_tensor(std::string& out, const std::string& name, std::size_t rows, std::size_t cols,
                std::span<const float> data) {
  put_string(out, name);
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n, "string");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n, "magic");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct Tensor {
  std::vector<std::uint32_t> extents;
  std::vector<float> data;
};

std::string bool_str(bool b) { return b ? "1" : "0"; }

std::string config_block(const CatsModel<float>& model, const ContextProvider<float>& provider,
                         const Metadata& metadata) {
  const auto& c = model.config();
  std::ostringstream o;
  o << "model.d_char=" << c.d_char << '\n'
    << "model.d_enc=" << c.d_enc << '\n'
    << "model.d_dec=" << c.d_dec << '\n'
    << "model.d_att=" << c.d_att << '\n'
    << "model.d_ctx=" << c.d_ctx << '\n'
    << "model.d_sent=" << c.d_sent << '\n'
    << "model.joint=" << bool_str(c.joint) << '\n'
    << "model.use_sentence_vector=" << bool_str(c.use_sentence_vector) << '\n'
    << "model.char_encoder_enabled=" << bool_str(c.char_encoder_enabled) << '\n'
    << "model.max_decode_factor=" << c.max_decode_factor << '\n'
    << "model.max_decode_slack=" << c.max_decode_slack << '\n'
    << "model.dropout=" << c.dropout << '\n'
    << "provider.mode=" << to_string(provider.mode()) << '\n'
    << "provider.dim=" << provider.dim() << '\n'
    << "provider.hidden=" << provider.hidden() << '\n';
  if (provider.table()) o << "provider.static_dim=" << provider.table()->dim() << '\n';
  for (char32_t ch : model.chars().symbols()) o << "char=" << static_cast<std::uint32_t>(ch) << '\n';
  for (const auto& l : model.labels().labels()) o << "label=" << l << '\n';
  if (provider.table())
    for (const auto& k : provider.table()->keys()) o << "static.key=" << k << '\n';
  for (const auto& [k, v] : metadata) o << "meta." << k << '=' << v << '\n';
  return o.str();
}

std::size_t to_size(const std::string& v, const std::string& key) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw CheckpointError("checkpoint: bad value for " + key + ": " + v);
  return out;
}

}  // namespace

std::string serialize_checkpoint(const CatsModel<float>& model, const ContextProvider<float>& provider,
                                 const Metadata& metadata) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_string(out, config_block(model, provider, metadata));

  auto params = model.parameters();
  auto& mutable_provider = const_cast<ContextProvider<float>&>(provider);
  auto ctx_params = mutable_provider.trainable();
  const bool has_table = provider.table().has_value() && provider.table()->size() > 0;
  put_u32(out, static_cast<std::uint32_t>(params.size() + ctx_params.size() + (has_table ? 1 : 0)));
  for (const auto* p : params) put_tensor(out, p->name, p->rows, p->cols, p->value);
  for (const auto* p : ctx_params) put_tensor(out, p->name, p->rows, p->cols, p->value);
  if (has_table) {
    const auto& t = *provider.table();
    put_tensor(out, "ctx.static", t.size(), t.dim(), t.data());
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(4) != std::string(kMagic, 4)) throw CheckpointError("checkpoint: bad magic (not a CATS file)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::string block = r.str();

  std::map<std::string, std::string> kv;
  CharVocab chars;
  LabelVocab labels;
  std::vector<std::string> static_keys;
  Metadata metadata;
  std::istringstream in(block);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint: malformed config line '" + line + "'");
    std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "char") {
      chars.add(static_cast<char32_t>(to_size(v, k)));
    } else if (k == "label") {
      labels.add(v);
    } else if (k == "static.key") {
      static_keys.push_back(v);
    } else if (k.rfind("meta.", 0) == 0) {
      metadata.emplace_back(k.substr(5), v);
    } else {
      kv[k] = v;
    }
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw CheckpointError("checkpoint: missing config key " + k);
    return it->second;
  };
  auto num = [&](const std::string& k) { return to_size(get(k), k); };

  ModelConfig cfg;
  cfg.d_char = num("model.d_char");
  cfg.d_enc = num("model.d_enc");
  cfg.d_dec = num("model.d_dec");
  cfg.d_att = num("model.d_att");
  cfg.d_ctx = num("model.d_ctx");
  cfg.d_sent = num("model.d_sent");
  cfg.joint = get("model.joint") == "1";
  cfg.use_sentence_vector = get("model.use_sentence_vector") == "1";
  cfg.char_encoder_enabled = get("model.char_encoder_enabled") == "1";
  cfg.max_decode_factor = num("model.max_decode_factor");
  cfg.max_decode_slack = num("model.max_decode_slack");
  cfg.dropout = std::stod(get("model.dropout"));

  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Tensor t;
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.extents.push_back(r.u32());
      n *= t.extents.back();
    }
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = std::bit_cast<float>(r.u32());
    tensors[name] = std::move(t);
  }
  if (!r.at_end()) {
    throw CheckpointError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes after the declared " +
                          std::to_string(count) + " tensors");
  }

  auto take = [&](nn::Parameter<float>& p) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw CheckpointError("checkpoint: missing tensor " + p.name);
    const auto& t = it->second;
    if (t.extents.size() != 2 || t.extents[0] != p.rows || t.extents[1] != p.cols) {
      throw CheckpointError("checkpoint: tensor " + p.name + " has the wrong shape");
    }
    p.value = t.data;
    tensors.erase(it);
  };

  const ContextMode mode = parse_context_mode(get("provider.mode"));
  const std::size_t dim = num("provider.dim");
  std::optional<StaticTable> table;
  if (kv.count("provider.static_dim")) {
    const std::size_t sd = num("provider.static_dim");
    StaticTable t(sd);
    if (!static_keys.empty()) {
      auto it = tensors.find("ctx.static");
      if (it == tensors.end() || it->second.data.size() != static_keys.size() * sd) {
        throw CheckpointError("checkpoint: static table tensor missing or mis-sized");
      }
      for (std::size_t i = 0; i < static_keys.size(); ++i) {
        t.set(static_keys[i], std::span<const float>(it->second.data).subspan(i * sd, sd));
      }
      tensors.erase(it);
    }
    t.finalize();
    table = std::move(t);
  }

  ContextProvider<float> provider = [&] {
    switch (mode) {
      case ContextMode::zeros: return ContextProvider<float>::zeros(dim);
      case ContextMode::static_table: return ContextProvider<float>::static_vectors(*table);
      case ContextMode::rnn: {
        auto p = ContextProvider<float>::rnn(*table, num("provider.hidden"), 0);
        for (auto* param : p.trainable()) take(*param);
        return p;
      }
      case ContextMode::external: return ContextProvider<float>::external(VectorStore(dim));
    }
    throw CheckpointError("checkpoint: unknown provider mode");
  }();

  CatsModel<float> model(cfg, std::move(chars), std::move(labels), 0);
  for (auto* p : model.parameters()) take(*p);
  if (!tensors.empty()) throw CheckpointError("checkpoint: unexpected tensor " + tensors.begin()->first);
  return Checkpoint{std::move(model), std::move(provider), std::move(metadata)};
}

void save_checkpoint(const std::string& path, const CatsModel<float>& model, const ContextProvider<float>& provider,
                     const Metadata& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  const std::string bytes = serialize_checkpoint(model, provider, metadata);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::uint64_t h = 14695981039346656037ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

}  // namespace cats
