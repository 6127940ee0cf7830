#pragma once

#include "radsel/projector.hpp"

#include <span>

namespace radsel {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean local SSIM of two row-major width x height images. Local statistics use
/// a normalized 11x11 Gaussian window (sigma 1.5) applied as a separable
/// zero-padded convolution of the same size as the input. C1 = (0.01 L)^2,
/// C2 = (0.03 L)^2 with L = dynamic_range. If grad_a is non-empty it receives
/// dSSIM/da.
double ssim(std::span<const double> a, std::span<const double> b, int width, int height, double dynamic_range,
            std::span<double> grad_a = {});

double ssim(const ProjectionImage &a, const ProjectionImage &b, double dynamic_range);

} // namespace radsel
