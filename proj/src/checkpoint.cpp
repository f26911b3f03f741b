#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ucds/errors.hpp"
#include "ucds/models.hpp"

namespace ucds {

namespace {

constexpr char kMagic[8] = {'U', 'C', 'D', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<unsigned char>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf_.push_back(static_cast<unsigned char>(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensors(const ParamSet& set) {
    u32(static_cast<std::uint32_t>(set.size()));
    for (const auto& t : set) {
      str(t.name);
      u64(t.rows);
      u64(t.cols);
      for (double v : t.values) f64(v);
    }
  }
  std::vector<unsigned char>& buffer() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (size_ - pos_ < n)
      throw DataError(DataErrc::checkpoint_format, "checkpoint payload truncated");
  }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(data_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(data_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  // Reads into tensors whose names and shapes are already fixed.
  void tensors_into(ParamSet& set) {
    const auto n = u32();
    if (n != set.size())
      throw DataError(DataErrc::checkpoint_format,
                      "checkpoint tensor count does not match the model");
    for (auto& t : set) {
      const auto name = str();
      const auto rows = u64();
      const auto cols = u64();
      if (name != t.name || rows != t.rows || cols != t.cols)
        throw DataError(DataErrc::checkpoint_format,
                        "checkpoint tensor '" + name + "' does not match '" +
                            t.name + "'");
      need(rows * cols * 8);
      for (auto& v : t.values) v = f64();
    }
  }
  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Backbone& model,
                     const AdamState& state, const CheckpointMeta& meta) {
  kv::Entries header = {{"model_kind", to_string(model.kind())},
                        {"n_users", std::to_string(model.n_users())},
                        {"n_items", std::to_string(model.n_items())},
                        {"id_digest", meta.id_digest}};
  for (auto& entry : train_config_entries(model.config()))
    header.emplace_back("config." + entry.first, entry.second);
  for (const auto& [k, v] : meta.fields) header.emplace_back("meta." + k, v);

  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(checkpoint_format_version);
  w.str(kv::render(header));
  w.tensors(model.params());
  w.u64(state.t);
  w.tensors(state.m);
  w.tensors(state.v);
  auto& buf = w.buffer();
  const auto crc = crc32(crc32(0L, Z_NULL, 0), buf.data(),
                         static_cast<uInt>(buf.size()));
  w.u32(static_cast<std::uint32_t>(crc));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic + 8 ||
      std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
    throw DataError(DataErrc::checkpoint_format,
                    path.string() + " is not a checkpoint");

  Reader r(buf.data(), buf.size());
  char magic[8];
  r.bytes(magic, sizeof magic);
  const auto version = r.u32();
  if (version != checkpoint_format_version)
    throw DataError(DataErrc::checkpoint_version,
                    "checkpoint format version " + std::to_string(version) +
                        ", expected " +
                        std::to_string(checkpoint_format_version));

  const std::size_t body = buf.size() - 4;
  Reader tail(buf.data() + body, 4);
  const auto stored = tail.u32();
  const auto actual = crc32(crc32(0L, Z_NULL, 0), buf.data(),
                            static_cast<uInt>(body));
  if (stored != static_cast<std::uint32_t>(actual))
    throw DataError(DataErrc::checkpoint_checksum,
                    "checkpoint checksum mismatch in " + path.string());

  Reader payload(buf.data() + sizeof kMagic + 4, body - sizeof kMagic - 4);
  const auto header = kv::parse(payload.str());
  ModelKind kind = ModelKind::pmf;
  TrainConfig config;
  std::size_t n_users = 0, n_items = 0;
  Checkpoint ckpt;
  for (const auto& [key, value] : header) {
    if (key == "model_kind") kind = parse_model_kind(value);
    else if (key == "n_users") n_users = kv::to_uint(key, value);
    else if (key == "n_items") n_items = kv::to_uint(key, value);
    else if (key == "id_digest") ckpt.meta.id_digest = value;
    else if (key.rfind("config.", 0) == 0) {
      if (!set_train_config_field(config, key.substr(7), value))
        throw DataError(DataErrc::checkpoint_format, "unknown header key " + key);
    } else if (key.rfind("meta.", 0) == 0) {
      ckpt.meta.fields[key.substr(5)] = value;
    } else {
      throw DataError(DataErrc::checkpoint_format, "unknown header key " + key);
    }
  }
  ckpt.model = make_zero_model(kind, config, n_users, n_items);
  payload.tensors_into(ckpt.model->params());
  ckpt.state = AdamState::for_params(ckpt.model->params());
  ckpt.state.t = payload.u64();
  payload.tensors_into(ckpt.state.m);
  payload.tensors_into(ckpt.state.v);
  if (!payload.done())
    throw DataError(DataErrc::checkpoint_format, "trailing bytes in checkpoint");
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           ModelKind expected) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.model->kind() != expected)
    throw DataError(DataErrc::checkpoint_kind,
                    "checkpoint holds a " + to_string(ckpt.model->kind()) +
                        " model, expected " + to_string(expected));
  return ckpt;
}

}  // namespace ucds
