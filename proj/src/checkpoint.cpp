#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "skimread/models.hpp"

namespace skimread::models {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'R', 'D'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint32_t crc32(const unsigned char* bytes, std::size_t n) {
  static std::uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ bytes[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw IntegrityError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

struct RawCheckpoint {
  ModelKind kind;
  std::uint64_t vocab_hash = 0;
  nlohmann::json config;
  std::map<std::string, Tensor> blobs;
};

void write_raw(const std::string& path, ModelKind kind, std::uint64_t vocab_hash,
               const nlohmann::json& config,
               const std::vector<std::pair<std::string, const Tensor*>>& blobs) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(kind));
  put_u64(buf, vocab_hash);
  const std::string cfg = config.dump();
  put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  put_u32(buf, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, tensor] : blobs) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(tensor->shape.size()));
    for (std::size_t d : tensor->shape) put_u64(buf, d);
    for (double v : tensor->data) put_f64(buf, v);
  }
  put_u32(buf, crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw IntegrityError("not a checkpoint file: " + path);

  Reader r{buf, 4};
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion)
    throw VersionError("unsupported checkpoint version " + std::to_string(version));

  // Checksum covers everything before the trailing CRC word.
  if (buf.size() < 20) throw IntegrityError("checkpoint truncated");
  Reader tail{buf, buf.size() - 4};
  const std::uint32_t stored = tail.u32();
  const std::uint32_t actual =
      crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
  if (stored != actual)
    throw IntegrityError("checkpoint checksum mismatch: " + path);

  RawCheckpoint ckpt;
  ckpt.kind = static_cast<ModelKind>(r.u32());
  ckpt.vocab_hash = r.u64();
  const std::uint32_t cfg_len = r.u32();
  ckpt.config = nlohmann::json::parse(r.str(cfg_len));
  const std::uint32_t n_blobs = r.u32();
  for (std::uint32_t b = 0; b < n_blobs; ++b) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = r.u64();
    Tensor t(shape);
    for (double& v : t.data) v = r.f64();
    ckpt.blobs.emplace(name, std::move(t));
  }
  return ckpt;
}

Tensor take_blob(RawCheckpoint& ckpt, const std::string& name) {
  auto it = ckpt.blobs.find(name);
  if (it == ckpt.blobs.end())
    throw IntegrityError("checkpoint missing tensor '" + name + "'");
  Tensor t = std::move(it->second);
  ckpt.blobs.erase(it);
  return t;
}

nn::Dense make_dense(nn::Parameter weight, nn::Parameter bias, nn::Activation act) {
  nn::Dense layer;
  layer.weight = std::move(weight);
  layer.bias = std::move(bias);
  layer.activation = act;
  return layer;
}

void expect_kind(const RawCheckpoint& ckpt, ModelKind kind, const std::string& path) {
  if (ckpt.kind != kind)
    throw FormatError("checkpoint " + path + " holds a different model kind");
}

}  // namespace

void save_checkpoint(const std::string& path, const BoWClassifier& model,
                     std::uint64_t vocab_hash) {
  nlohmann::json cfg{{"embed_dim", model.embed_dim()},
                     {"hidden", model.hidden_dim()},
                     {"dropout_p", model.dropout_p},
                     {"vocab_size", model.embeddings.value.rows()}};
  write_raw(path, ModelKind::bow, vocab_hash, cfg, model.named_tensors());
}

void save_checkpoint(const std::string& path, const LSTMClassifier& model,
                     std::uint64_t vocab_hash) {
  nlohmann::json cfg{{"embed_dim", model.embed_dim()},
                     {"projection", model.projection.out_dim()},
                     {"hidden", model.bilstm.hidden},
                     {"mlp_hidden", model.mlp_hidden.out_dim()},
                     {"dropout_p", model.dropout_p},
                     {"vocab_size", model.embeddings.value.rows()}};
  write_raw(path, ModelKind::lstm, vocab_hash, cfg, model.named_tensors());
}

void save_checkpoint(const std::string& path, const DecisionNet& model,
                     std::uint64_t vocab_hash) {
  nlohmann::json cfg{{"embed_dim", model.trunk_embeddings.value.cols()},
                     {"trunk_hidden", model.trunk_hidden.out_dim()},
                     {"head_hidden", model.head_hidden.out_dim()},
                     {"dropout_p", model.dropout_p},
                     {"vocab_size", model.trunk_embeddings.value.rows()}};
  write_raw(path, ModelKind::decision, vocab_hash, cfg, model.named_tensors());
}

CheckpointInfo checkpoint_info(const std::string& path) {
  const RawCheckpoint ckpt = read_raw(path);
  return {ckpt.kind, ckpt.vocab_hash};
}

BoWClassifier load_bow(const std::string& path) {
  RawCheckpoint ckpt = read_raw(path);
  expect_kind(ckpt, ModelKind::bow, path);
  BoWClassifier model;
  model.dropout_p = ckpt.config.at("dropout_p").get<double>();
  model.embeddings = nn::Parameter("bow.embeddings", take_blob(ckpt, "embeddings"));
  model.hidden = make_dense(
      nn::Parameter("bow.hidden.weight", take_blob(ckpt, "hidden.weight")),
      nn::Parameter("bow.hidden.bias", take_blob(ckpt, "hidden.bias")),
      nn::Activation::relu);
  model.output = make_dense(
      nn::Parameter("bow.output.weight", take_blob(ckpt, "output.weight")),
      nn::Parameter("bow.output.bias", take_blob(ckpt, "output.bias")),
      nn::Activation::identity);
  return model;
}

LSTMClassifier load_lstm(const std::string& path) {
  RawCheckpoint ckpt = read_raw(path);
  expect_kind(ckpt, ModelKind::lstm, path);
  LSTMClassifier model;
  model.dropout_p = ckpt.config.at("dropout_p").get<double>();
  model.embeddings = nn::Parameter("lstm.embeddings", take_blob(ckpt, "embeddings"));
  model.projection = make_dense(
      nn::Parameter("lstm.projection.weight", take_blob(ckpt, "projection.weight")),
      nn::Parameter("lstm.projection.bias", take_blob(ckpt, "projection.bias")),
      nn::Activation::identity);
  model.bilstm.input_dim = ckpt.config.at("projection").get<std::size_t>();
  model.bilstm.hidden = ckpt.config.at("hidden").get<std::size_t>();
  model.bilstm.fwd.wx = nn::Parameter("lstm.bilstm.fwd.wx", take_blob(ckpt, "bilstm.fwd.wx"));
  model.bilstm.fwd.wh = nn::Parameter("lstm.bilstm.fwd.wh", take_blob(ckpt, "bilstm.fwd.wh"));
  model.bilstm.fwd.b = nn::Parameter("lstm.bilstm.fwd.b", take_blob(ckpt, "bilstm.fwd.b"));
  model.bilstm.bwd.wx = nn::Parameter("lstm.bilstm.bwd.wx", take_blob(ckpt, "bilstm.bwd.wx"));
  model.bilstm.bwd.wh = nn::Parameter("lstm.bilstm.bwd.wh", take_blob(ckpt, "bilstm.bwd.wh"));
  model.bilstm.bwd.b = nn::Parameter("lstm.bilstm.bwd.b", take_blob(ckpt, "bilstm.bwd.b"));
  model.mlp_hidden = make_dense(
      nn::Parameter("lstm.mlp_hidden.weight", take_blob(ckpt, "mlp_hidden.weight")),
      nn::Parameter("lstm.mlp_hidden.bias", take_blob(ckpt, "mlp_hidden.bias")),
      nn::Activation::relu);
  model.output = make_dense(
      nn::Parameter("lstm.output.weight", take_blob(ckpt, "output.weight")),
      nn::Parameter("lstm.output.bias", take_blob(ckpt, "output.bias")),
      nn::Activation::identity);
  return model;
}

DecisionNet load_decision(const std::string& path) {
  RawCheckpoint ckpt = read_raw(path);
  expect_kind(ckpt, ModelKind::decision, path);
  DecisionNet net;
  net.dropout_p = ckpt.config.at("dropout_p").get<double>();
  net.trunk_embeddings =
      nn::Parameter("decision.trunk.embeddings", take_blob(ckpt, "trunk.embeddings"));
  net.trunk_hidden = make_dense(
      nn::Parameter("decision.trunk.hidden.weight", take_blob(ckpt, "trunk.hidden.weight")),
      nn::Parameter("decision.trunk.hidden.bias", take_blob(ckpt, "trunk.hidden.bias")),
      nn::Activation::relu);
  net.head_hidden = make_dense(
      nn::Parameter("decision.head_hidden.weight", take_blob(ckpt, "head_hidden.weight")),
      nn::Parameter("decision.head_hidden.bias", take_blob(ckpt, "head_hidden.bias")),
      nn::Activation::relu);
  net.head_output = make_dense(
      nn::Parameter("decision.head_output.weight", take_blob(ckpt, "head_output.weight")),
      nn::Parameter("decision.head_output.bias", take_blob(ckpt, "head_output.bias")),
      nn::Activation::identity);
  return net;
}

}  // namespace skimread::models
