#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mkh/dataset.hpp"
#include "mkh/params.hpp"
#include "mkh/run_config.hpp"

namespace mkh {

/// Bad magic, unsupported version, truncation or inconsistent records.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// On disk, all integers and values little-endian:
///   "MKHN", u32 version,
///   u64 length + config text,
///   u32 count, then per parameter: u32 length + name, u32 rank, u64 extents, f64 values,
///   u32 n, f64 means, f64 stds,
///   u64 seed.
struct Checkpoint {
  RunConfig config;  // config.model.num_nodes is concrete
  ParamStore params;
  NormalizationStats stats;
  std::uint64_t seed = 0;

  bool operator==(const Checkpoint& other) const;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mkh
