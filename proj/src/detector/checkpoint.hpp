#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "../nn/optim.hpp"
#include "model.hpp"

namespace shaftpose {

// Binary checkpoint, all integers and floats little-endian:
//   char[8]  magic "SHFTPOSE"
//   u32      format version (1)
//   u32      descriptor length, then the architecture descriptor (JSON text)
//   i64      completed training steps
//   u32      blob count, then per blob:
//              u32 name length, name bytes, u32 n, u32 h, u32 w, u32 c, f32[n*h*w*c]
// Blob names: model parameters and batchnorm buffers by their model names; optimizer moments
// as "adam.m/<param>" and "adam.v/<param>". See docs/checkpoint_format.md.
inline constexpr char kCheckpointMagic[8] = {'S', 'H', 'F', 'T', 'P', 'O', 'S', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
  nn::Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string descriptor;
  std::int64_t step = 0;
  std::map<std::string, Blob> blobs;
};

void write_checkpoint(const std::filesystem::path& path, DetectorModel<float>& model,
                      const nn::AdamState<float>* adam, std::int64_t step);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Loads parameters and buffers; throws Error(kArchitectureMismatch) naming both descriptors when
// the checkpoint was written for a different architecture.
void load_weights(DetectorModel<float>& model, const Checkpoint& ckpt);
// Restores Adam moments; returns false if the checkpoint holds none.
bool load_adam(DetectorModel<float>& model, const Checkpoint& ckpt, nn::AdamState<float>& adam);

}  // namespace shaftpose
