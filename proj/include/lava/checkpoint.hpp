#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "lava/layers.hpp"
#include "lava/tensor.hpp"

namespace lava {

// Binary model container. Layout (all integers little-endian):
//   magic "LAVA" + one version digit
//   u32 format version
//   u32 arch id length, arch id bytes
//   u64 metadata length, metadata JSON bytes (sorted keys)
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes
//     u32 rank, rank x i64 dims
//     numel x f32 values
// Tensors are stored sorted by name so identical contents produce identical
// bytes. Loading validates magic, version, and arch-specific required tensor
// names; any malformed field raises an error naming it.

inline constexpr char kCheckpointMagic[5] = {'L', 'A', 'V', 'A', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline constexpr const char* kArchAutoencoder = "autoencoder/v1";
inline constexpr const char* kArchHead = "head/v1";

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::string arch;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  void add(const std::string& name, const Tensor& t) {
    tensors.push_back({name, t});
  }
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

// Tensor names each architecture must carry. For heads the set depends on
// the metadata's attention flag.
std::vector<std::string> required_tensor_names(const std::string& arch,
                                               const nlohmann::json& meta);

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes,
                                  const std::string& origin);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies every parameter of the network into / out of the checkpoint by
// name. Unpacking shape-checks each tensor and fails on missing names.
void pack_params(nn::Sequential& net, Checkpoint& ckpt);
void unpack_params(const Checkpoint& ckpt, nn::Sequential& net);

// Shortest decimal strings that parse back to the exact same value; used
// for thresholds stored in metadata.
std::string format_exact(float v);
float parse_exact_f32(const std::string& s);

}  // namespace lava
