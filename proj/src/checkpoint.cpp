#include "lava/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace lava {

namespace {

using json = nlohmann::json;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 8);
}

void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  const uint8_t* need(size_t n, const char* field) {
    if (pos_ + n > bytes_.size())
      throw ValidationError(origin_ + ": truncated checkpoint while reading " +
                            field);
    const uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  uint32_t u32(const char* field) {
    uint32_t v;
    std::memcpy(&v, need(4, field), 4);
    return v;
  }

  uint64_t u64(const char* field) {
    uint64_t v;
    std::memcpy(&v, need(8, field), 8);
    return v;
  }

  int64_t i64(const char* field) {
    int64_t v;
    std::memcpy(&v, need(8, field), 8);
    return v;
  }

  std::string str(size_t n, const char* field) {
    const uint8_t* p = need(n, field);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<uint8_t>& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

void validate_required(const Checkpoint& ckpt, const std::string& origin) {
  for (const auto& name : required_tensor_names(ckpt.arch, ckpt.meta))
    if (!ckpt.has(name))
      throw ValidationError(origin + ": checkpoint for arch '" + ckpt.arch +
                            "' is missing required tensor '" + name + "'");
}

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw ValidationError("checkpoint: no tensor named '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

std::vector<std::string> required_tensor_names(const std::string& arch,
                                               const nlohmann::json& meta) {
  std::vector<std::string> names;
  auto bn = [&names](const std::string& prefix) {
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
    names.push_back(prefix + ".running_mean");
    names.push_back(prefix + ".running_var");
  };
  auto wb = [&names](const std::string& prefix) {
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  };
  if (arch == kArchAutoencoder) {
    for (int i = 1; i <= 4; ++i) {
      wb("enc.conv" + std::to_string(i));
      bn("enc.bn" + std::to_string(i));
    }
    for (int i = 1; i <= 4; ++i) {
      wb("dec.tconv" + std::to_string(i));
      if (i < 4) bn("dec.bn" + std::to_string(i));
    }
    return names;
  }
  if (arch == kArchHead) {
    for (int i = 1; i <= 3; ++i) {
      wb("enc.conv" + std::to_string(i));
      bn("enc.bn" + std::to_string(i));
    }
    wb("head.conv");
    bn("head.bn");
    if (meta.value("attention", true)) wb("head.attn");
    wb("head.fc1");
    wb("head.fc2");
    return names;
  }
  throw ValidationError("checkpoint: unknown architecture id '" + arch + "'");
}

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  validate_required(ckpt, "serialize");

  std::vector<size_t> order(ckpt.tensors.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return ckpt.tensors[a].name < ckpt.tensors[b].name;
  });

  std::vector<uint8_t> out;
  put_bytes(out, kCheckpointMagic, 5);
  put_u32(out, kCheckpointVersion);
  put_u32(out, uint32_t(ckpt.arch.size()));
  put_bytes(out, ckpt.arch.data(), ckpt.arch.size());
  std::string meta = ckpt.meta.dump();
  put_u64(out, meta.size());
  put_bytes(out, meta.data(), meta.size());
  put_u32(out, uint32_t(ckpt.tensors.size()));
  for (size_t i : order) {
    const auto& t = ckpt.tensors[i];
    put_u32(out, uint32_t(t.name.size()));
    put_bytes(out, t.name.data(), t.name.size());
    put_u32(out, uint32_t(t.value.rank()));
    for (int d = 0; d < t.value.rank(); ++d) put_u64(out, uint64_t(t.value.dim(d)));
    put_bytes(out, t.value.data(), size_t(t.value.numel()) * sizeof(float));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes,
                                  const std::string& origin) {
  Reader r(bytes, origin);
  std::string magic = r.str(5, "magic");
  if (magic.substr(0, 4) != "LAVA")
    throw ValidationError(origin + ": bad checkpoint magic");
  if (magic[4] != kCheckpointMagic[4])
    throw ValidationError(origin + ": unsupported checkpoint version marker '" +
                          magic.substr(4) + "'");
  uint32_t version = r.u32("format version");
  if (version != kCheckpointVersion)
    throw ValidationError(origin + ": unsupported checkpoint format version " +
                          std::to_string(version));

  Checkpoint ckpt;
  uint32_t arch_len = r.u32("arch id length");
  ckpt.arch = r.str(arch_len, "arch id");

  uint64_t meta_len = r.u64("metadata length");
  std::string meta = r.str(size_t(meta_len), "metadata");
  try {
    ckpt.meta = json::parse(meta);
  } catch (const json::parse_error& e) {
    throw ValidationError(origin + ": metadata is not valid JSON: " + e.what());
  }

  uint32_t count = r.u32("tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = r.u32("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    uint32_t rank = r.u32("tensor rank");
    if (rank < 1 || rank > 3)
      throw ValidationError(origin + ": tensor '" + name + "' has rank " +
                            std::to_string(rank));
    std::vector<int64_t> dims(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      dims[d] = r.i64("tensor dim");
      if (dims[d] < 1 || dims[d] > (int64_t(1) << 32) || numel > (int64_t(1) << 32))
        throw ValidationError(origin + ": tensor '" + name +
                              "' has invalid dimension " + std::to_string(dims[d]));
      numel *= dims[d];
    }
    Tensor t(dims);
    std::memcpy(t.data(), r.need(size_t(numel) * sizeof(float), "tensor values"),
                size_t(numel) * sizeof(float));
    ckpt.tensors.push_back({std::move(name), std::move(t)});
  }
  if (!r.done())
    throw ValidationError(origin + ": trailing bytes after tensor table");

  validate_required(ckpt, origin);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::vector<uint8_t> bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          std::streamsize(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<uint8_t> bytes(size_t(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("failed reading checkpoint '" + path + "'");
  return deserialize_checkpoint(bytes, path);
}

void pack_params(nn::Sequential& net, Checkpoint& ckpt) {
  for (auto* p : net.params()) ckpt.add(p->name, p->value);
}

void unpack_params(const Checkpoint& ckpt, nn::Sequential& net) {
  for (auto* p : net.params()) {
    const Tensor& t = ckpt.get(p->name);
    if (!t.same_shape(p->value))
      throw ValidationError("checkpoint tensor '" + p->name + "' has shape " +
                            t.shape_str() + ", model expects " +
                            p->value.shape_str());
    p->value = t;
  }
}

std::string format_exact(float v) {
  char buf[64];
  for (int prec = 6; prec <= 9; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, double(v));
    if (std::strtof(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.9g", double(v));
  return buf;
}

float parse_exact_f32(const std::string& s) {
  char* end = nullptr;
  float v = std::strtof(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty())
    throw ValidationError("cannot parse decimal value '" + s + "'");
  return v;
}

}  // namespace lava
