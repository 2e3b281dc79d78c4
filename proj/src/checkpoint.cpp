#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "msgcf/harness.hpp"

namespace msgcf::harness {

namespace {

constexpr std::string_view kMagic = "MSGCF";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw DataError(DataErrorKind::malformed_manifest, "checkpoint: truncated file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_values(std::string& out, const Tensor& t) {
  for (double v : t.data()) put_f64(out, v);
}

void read_values(Reader& r, Tensor& t) {
  for (double& v : t.data()) v = r.f64();
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kMagic);
  put_u32(out, c.version);
  TrainConfig config = c.config;
  config.model = c.params.config;
  const std::string cfg = to_json(config).dump();
  put_u64(out, cfg.size());
  out += cfg;
  put_u64(out, c.episodes_seen);
  put_u64(out, c.optimizer.step);
  const auto tensors = c.params.tensors();
  put_u64(out, tensors.size());
  for (const Tensor* t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t e : t->shape()) put_u64(out, e);
    put_values(out, *t);
  }
  const bool has_moments = c.optimizer.m.size() == tensors.size() && c.optimizer.v.size() == tensors.size();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (has_moments) {
      put_values(out, c.optimizer.m[i]);
    } else {
      for (std::size_t j = 0; j < tensors[i]->size(); ++j) put_f64(out, 0.0);
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (has_moments) {
      put_values(out, c.optimizer.v[i]);
    } else {
      for (std::size_t j = 0; j < tensors[i]->size(); ++j) put_f64(out, 0.0);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw DataError(DataErrorKind::malformed_manifest, "checkpoint: bad magic");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw DataError(DataErrorKind::malformed_manifest,
                    "checkpoint: unsupported format version " + std::to_string(c.version));
  }
  const std::uint64_t cfg_len = r.u64();
  const std::string_view cfg = r.take(cfg_len);
  try {
    c.config = config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorKind::malformed_manifest, std::string("checkpoint: config: ") + e.what());
  }
  c.episodes_seen = r.u64();
  c.optimizer.step = r.u64();
  c.params = model::init_msgcf(c.config.model, 0);
  auto tensors = c.params.tensors();
  if (r.u64() != tensors.size()) throw DataError(DataErrorKind::malformed_manifest, "checkpoint: tensor count mismatch");
  for (Tensor* t : tensors) {
    Shape shape(r.u32());
    for (auto& e : shape) e = r.u64();
    if (shape != t->shape()) {
      throw DataError(DataErrorKind::malformed_manifest, "checkpoint: tensor shape " + to_string(shape) +
                                                             " does not match configuration " + to_string(t->shape()));
    }
    read_values(r, *t);
  }
  for (Tensor* t : tensors) {
    c.optimizer.m.emplace_back(t->shape());
    read_values(r, c.optimizer.m.back());
  }
  for (Tensor* t : tensors) {
    c.optimizer.v.emplace_back(t->shape());
    read_values(r, c.optimizer.v.back());
  }
  if (!r.done()) throw DataError(DataErrorKind::malformed_manifest, "checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(DataErrorKind::missing_file, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorKind::missing_file, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::missing_file, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t parameter_hash(const model::MsgcfParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* t : params.tensors()) {
    for (double v : t->data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace msgcf::harness
