#include "forge/mlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "forge/util/digest.hpp"
#include "forge/util/io.hpp"

namespace forge::mlm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {
constexpr std::string_view kMagic = "FORGECK1";
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

void put_blob(std::string& out, std::string_view s) {
  put_u64(out, s.size());
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8).data(), 8);
    return v;
  }
  std::string_view blob() { return take(u64()); }
  void doubles(std::span<double> out) {
    auto raw = take(out.size() * sizeof(double));
    std::memcpy(out.data(), raw.data(), raw.size());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};
}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& cfg = ckpt.model.config();
  if (ckpt.model.vocab_size() != ckpt.vocab.size()) {
    throw std::invalid_argument("checkpoint model and vocab sizes differ");
  }
  nlohmann::ordered_json header;
  header["format_version"] = kFormatVersion;
  header["vocab_size"] = ckpt.vocab.size();
  header["vocab_digest"] = ckpt.vocab.digest();
  header["dim"] = cfg.dim;
  header["max_segments"] = cfg.max_segments;
  header["activation"] = to_string(cfg.activation);
  header["init_scale"] = cfg.init_scale;
  header["seed"] = cfg.seed;
  header["meta"] = ckpt.meta;

  std::string out(kMagic);
  put_blob(out, header.dump());
  put_blob(out, ckpt.vocab.serialize());
  for (auto blk : kAllBlocks) {
    auto data = ckpt.model.block(blk);
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw std::runtime_error("not a checkpoint file");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.blob());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint header: ") + e.what());
  }
  if (header.value("format_version", 0) != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version");
  }
  dke::Vocab vocab = dke::Vocab::parse(r.blob());
  if (vocab.digest() != header.at("vocab_digest").get<std::string>() ||
      vocab.size() != header.at("vocab_size").get<std::size_t>()) {
    throw std::runtime_error("checkpoint vocab does not match its header");
  }
  ModelConfig cfg;
  cfg.dim = header.at("dim").get<std::size_t>();
  cfg.max_segments = header.at("max_segments").get<std::size_t>();
  cfg.activation = activation_from_string(header.at("activation").get<std::string>());
  cfg.init_scale = header.at("init_scale").get<double>();
  cfg.seed = header.at("seed").get<std::uint64_t>();
  TrainableMlm model(vocab.size(), cfg);
  for (auto blk : kAllBlocks) r.doubles(model.block(blk));
  if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
  if (!model.all_finite()) throw std::runtime_error("checkpoint holds non-finite parameters");
  return {std::move(vocab), std::move(model), header.value("meta", nlohmann::json::object())};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  require_file(path, "checkpoint");
  return parse_checkpoint(read_file(path));
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  return sha256_hex(serialize_checkpoint(ckpt));
}

}  // namespace forge::mlm
