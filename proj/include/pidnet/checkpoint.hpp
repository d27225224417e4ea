#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidnet/network.hpp"

namespace pidnet {

// Binary layout (all integers u32 little-endian):
//   "PIDN" | version | count | count x entry | crc32
//   entry = name_len | name bytes | rank | dims[rank] | float32 values
// The CRC covers everything from `count` through the last entry. The first
// entry, "meta/config", encodes the ModelConfig so a model can be rebuilt.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(PidNet<float>& model);
void save_checkpoint(PidNet<float>& model, const std::string& path);

// Rebuilds the model described by the file and loads its tensors.
PidNet<float> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
PidNet<float> load_checkpoint(const std::string& path);

// Loads tensors into an existing model. Strict mode rejects unknown names,
// missing tensors and shape mismatches, naming the first offender.
void load_state(PidNet<float>& model, const std::vector<std::uint8_t>& bytes,
                bool strict = true);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace pidnet
