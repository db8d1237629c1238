#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "../error.hpp"

namespace shaftpose {

namespace {

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void i64(std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 8);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void blob(const std::string& name, const nn::Shape& shape, const float* data, std::size_t n) {
    str(name);
    u32(static_cast<std::uint32_t>(shape.n));
    u32(static_cast<std::uint32_t>(shape.h));
    u32(static_cast<std::uint32_t>(shape.w));
    u32(static_cast<std::uint32_t>(shape.c));
    for (std::size_t i = 0; i < n; ++i) u32(std::bit_cast<std::uint32_t>(data[i]));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}
  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) fail(ErrorCode::kSchema, "truncated checkpoint '" + path_.string() + "'");
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<std::int64_t>(v);
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (n > (1u << 24)) fail(ErrorCode::kSchema, "corrupt string length in checkpoint '" + path_.string() + "'");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, DetectorModel<float>& model,
                      const nn::AdamState<float>* adam, std::int64_t step) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write checkpoint '" + path.string() + "'");
  Writer w(out);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.str(model.config().descriptor());
  w.i64(step);

  auto params = model.parameters();
  auto buffers = model.buffers();
  const bool with_adam = adam != nullptr && adam->m.size() == params.size();
  const std::size_t count = params.size() + buffers.size() + (with_adam ? 2 * params.size() : 0);
  w.u32(static_cast<std::uint32_t>(count));
  for (auto& p : params) w.blob(p.name, p.tensor->shape(), p.tensor->data(), p.tensor->size());
  for (auto& b : buffers) w.blob(b.name, b.tensor->shape(), b.tensor->data(), b.tensor->size());
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.blob("adam.m/" + params[i].name, params[i].tensor->shape(), adam->m[i].data(), adam->m[i].size());
      w.blob("adam.v/" + params[i].name, params[i].tensor->shape(), adam->v[i].data(), adam->v[i].size());
    }
  }
  if (!out) fail(ErrorCode::kIo, "failed writing checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint '" + path.string() + "'");
  Reader r(in, path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    fail(ErrorCode::kSchema, "'" + path.string() + "' is not a shaftpose checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorCode::kSchema, "unsupported checkpoint version " + std::to_string(version) + " in '" + path.string() + "'");
  }
  Checkpoint ck;
  ck.descriptor = r.str();
  ck.step = r.i64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    Blob b;
    b.shape = {static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    if (b.shape.size() > (1u << 28)) fail(ErrorCode::kSchema, "corrupt blob shape in '" + path.string() + "'");
    b.values.resize(b.shape.size());
    for (auto& v : b.values) v = std::bit_cast<float>(r.u32());
    ck.blobs.emplace(name, std::move(b));
  }
  return ck;
}

void load_weights(DetectorModel<float>& model, const Checkpoint& ckpt) {
  const std::string expected = model.config().descriptor();
  if (ckpt.descriptor != expected) {
    fail(ErrorCode::kArchitectureMismatch,
         "checkpoint architecture " + ckpt.descriptor + " does not match configured architecture " + expected);
  }
  auto tensors = model.parameters();
  auto buffers = model.buffers();
  tensors.insert(tensors.end(), buffers.begin(), buffers.end());
  for (auto& t : tensors) {
    const auto it = ckpt.blobs.find(t.name);
    if (it == ckpt.blobs.end()) fail(ErrorCode::kSchema, "checkpoint lacks tensor '" + t.name + "'");
    if (!(it->second.shape == t.tensor->shape())) {
      fail(ErrorCode::kSchema, "checkpoint tensor '" + t.name + "' has shape " + it->second.shape.str() +
                                   ", expected " + t.tensor->shape().str());
    }
    std::copy(it->second.values.begin(), it->second.values.end(), t.tensor->values().begin());
  }
}

bool load_adam(DetectorModel<float>& model, const Checkpoint& ckpt, nn::AdamState<float>& adam) {
  auto params = model.parameters();
  adam.m.clear();
  adam.v.clear();
  for (auto& p : params) {
    const auto m = ckpt.blobs.find("adam.m/" + p.name);
    const auto v = ckpt.blobs.find("adam.v/" + p.name);
    if (m == ckpt.blobs.end() || v == ckpt.blobs.end()) {
      adam.m.clear();
      adam.v.clear();
      adam.step = 0;
      return false;
    }
    adam.m.push_back(m->second.values);
    adam.v.push_back(v->second.values);
  }
  adam.step = ckpt.step;
  return true;
}

}  // namespace shaftpose
