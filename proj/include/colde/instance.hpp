#pragma once

#include <cstdint>

#include "colde/objectives.hpp"

namespace colde {

// Seeded smooth random frame pair for gradient checking: band-limited images,
// depths in roughly [1, 3], near-axis unit normals, and a small relative pose.
FramePair make_random_pair(std::uint64_t seed, int height, int width);

}  // namespace colde
