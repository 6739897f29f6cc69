#pragma once

#include "colde/grid.hpp"

namespace colde {

// Per-pixel SSIM between single-channel planes (h*w doubles), 3x3 uniform
// window, reflect-101 padding. Values in [-1, 1] for inputs in [0, 1].
void ssim_plane(const double* a, const double* b, int h, int w, double c1, double c2,
                double* out);

// Accumulates d(sum_p upstream[p] * S[p]) / d(a) into grad_a.
void ssim_plane_backward(const double* a, const double* b, int h, int w, double c1,
                         double c2, const double* upstream, double* grad_a);

// Channel-averaged SSIM map of two same-shape images.
Image ssim_map(const Image& a, const Image& b, double c1, double c2);

}  // namespace colde
