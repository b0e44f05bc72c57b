#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hsicnn/network.hpp"

namespace hsicnn {

// Little-endian binary layout:
//   magic "HSICNNCK" | version u32 | record count u32 |
//   records { name_len u32, name, dtype u8, ndim u8, dims u64[ndim],
//             payload_len u64, payload } | CRC32 u32 of everything before it.
// dtype: 1 = float32, 2 = raw bytes, 3 = int64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointKind { Network, CrossDomain };

// Optimizer-side state stored alongside the parameters so that training can
// resume exactly where it stopped.
struct TrainingState {
  std::int64_t iteration = 0;
  std::string rng_state;
  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Network<float>& net, const TrainingState& state);
std::vector<std::uint8_t> serialize_checkpoint(const CrossDomainNetwork<float>& net,
                                               const TrainingState& state);

void save_checkpoint(const Network<float>& net, const TrainingState& state,
                     const std::filesystem::path& path);
void save_checkpoint(const CrossDomainNetwork<float>& net, const TrainingState& state,
                     const std::filesystem::path& path);

// Throws ParseError (with byte offset) on corrupt or truncated input and
// VersionError on an unknown format version.
CheckpointKind checkpoint_kind(const std::filesystem::path& path);
Network<float> load_network(const std::filesystem::path& path, TrainingState* state = nullptr);
CrossDomainNetwork<float> load_cross_domain(const std::filesystem::path& path,
                                            TrainingState* state = nullptr);
Network<float> parse_network(std::span<const std::uint8_t> bytes, TrainingState* state = nullptr);
CrossDomainNetwork<float> parse_cross_domain(std::span<const std::uint8_t> bytes,
                                             TrainingState* state = nullptr);

// Record stream of the given parameters (values only). Used to compare the
// shared store as seen through different branches.
std::vector<std::uint8_t> serialize_parameters(std::span<const Param<float>* const> params);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace hsicnn
