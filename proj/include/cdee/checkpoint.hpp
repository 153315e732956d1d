#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cdee/layer_stack.hpp"

namespace cdee {

// Binary layout, all integers and floats little-endian:
//
//   "CDEE"  u16 version
//   u8 input_rank, u32 dims[input_rank]
//   u32 layer_count, then per layer:
//     u8 kind, u8 n_config, u32 config[n_config]
//     u8 n_tensors, per tensor: u8 rank, u32 dims[rank], f32 values[]
//   u8 has_adam; if 1:
//     u32 n_states, per state (params() order):
//       u64 t, f64 alpha, f64 beta1, f64 beta2, f64 epsilon, f32 m[], f32 v[]
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  LayerStack<float> model;
  std::optional<std::vector<AdamState<float>>> optimizer;
};

std::vector<std::uint8_t> encode_checkpoint(
    const LayerStack<float>& model,
    const std::vector<AdamState<float>>* optimizer = nullptr);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const LayerStack<float>& model,
                     const std::vector<AdamState<float>>* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace cdee
