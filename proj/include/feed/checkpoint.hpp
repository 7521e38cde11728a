#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "feed/nn.hpp"

namespace feed {

// Binary layout, all integers little-endian:
//   "FEEDCKPT" | u32 version=1 | u32 meta bytes | meta ("key=value\n" lines)
//   u32 tensor count | per tensor: u16 name bytes, name, u8 dtype (0 = f32),
//   u8 rank, rank x u64 dims, f32 payload
//   u64 FNV-1a of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string arch;  // ArchDescriptor string
  int stack = 0;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> extra;  // written sorted, after the fixed keys
};

struct CheckpointFile {
  CheckpointMeta meta;
  std::vector<NamedTensor> tensors;
  std::uint64_t hash = 0;
};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t basis = 0xcbf29ce484222325ULL);

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors,
                                            const CheckpointMeta& meta);
// FormatError on malformed structure, VersionError on an unknown version,
// CorruptionError when the trailing hash does not verify.
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes to a sibling temporary file and renames it into place.
void save_checkpoint(const Network& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

struct LoadedCheckpoint {
  std::unique_ptr<ResNet> net;
  CheckpointMeta meta;
  std::uint64_t hash = 0;
};

// Rebuilds the architecture named in the metadata, then injects the stored
// tensors. VersionError when the architecture is unknown.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// The stored content hash, verified against the file.
std::uint64_t checkpoint_hash(const std::filesystem::path& path);

}  // namespace feed
