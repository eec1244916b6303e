#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sredge/adam.hpp"
#include "sredge/config.hpp"

namespace sredge {

/// Parameters, optimizer state, progress counters and the config that
/// produced them.
///
/// On disk ("SREW" v1, little endian):
///   magic[4] u32 version u32 entry_count
///   entry*: u16 name_len, name, u8 dtype (0 = f32, 1 = u8), u8 rank,
///           u32 dims[rank], payload
///   u32 crc32 of every byte after the 12-byte header
/// Entry names: `param/<p>`, `adam.m/<p>`, `adam.v/<p>`, plus the u8 text
/// blobs `meta/config` (key=value) and `meta/state` (epoch, step, adam
/// counters).
struct Checkpoint {
  ParameterSet<float> params;
  AdamState adam;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  KeyValues config;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
/// `origin` names the source in error messages.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sredge
