// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_MODEL_CHECKPOINT_HPP_
#define CARFT_MODEL_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "carft/model/params.hpp"

// Binary layout, all integers and reals little-endian:
//   "CARFTCKPT" | u32 version | 7 x i64 config fields | u32 array count
//   per array: u32 name length | name bytes | u32 rank | rank x u64 extents | f64 data
namespace carft::model {

inline constexpr char kCheckpointMagic[] = "CARFTCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace carft::model

#endif  // CARFT_MODEL_CHECKPOINT_HPP_
