// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_COMMON_TYPES_HPP_
#define CARFT_COMMON_TYPES_HPP_

#include <cstdint>
#include <vector>

namespace carft {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

}  // namespace carft

#endif  // CARFT_COMMON_TYPES_HPP_
