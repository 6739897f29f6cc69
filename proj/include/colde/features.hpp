#pragma once

#include <array>
#include <vector>

#include "colde/grid.hpp"

namespace colde {

inline constexpr int kFeatureChannels = 64;
inline constexpr int kFeatureKernelSize = 7;
inline constexpr int kFeatureStride = 2;

// Frozen seeded 7x7/stride-2 bank over 3 input channels, one kernel per output
// channel. Kernel index layout: [dy][dx][input_channel].
const std::vector<double>& feature_kernels();

inline double feature_kernel_at(int channel, int dy, int dx, int input_channel) {
  const int ks = kFeatureKernelSize;
  return feature_kernels()[(((static_cast<std::size_t>(channel) * ks + dy) * ks + dx) * 3) +
                           input_channel];
}

// Deterministic stand-in for a learned conv1: reflect-padded correlation with
// the frozen bank, each output channel min-max normalized to [0,1]. Output is
// at half resolution (ceil(h/2) x ceil(w/2)).
Image feature_extract(const Image& img);

}  // namespace colde
