#pragma once

#include "radsel/gaussian_field.hpp"
#include "radsel/projector.hpp"

#include <string>

namespace radsel {

/// 10 log10(max(gt)^2 / MSE); +inf when the volumes are identical.
double psnr_3d(const VoxelGrid &recon, const VoxelGrid &gt);

/// Mean 2D SSIM over every axial, coronal and sagittal slice, dynamic range max(gt).
double ssim_3d_slices(const VoxelGrid &recon, const VoxelGrid &gt);

/// PSNR of one projection; peak <= 0 means max(gt).
double psnr_2d(const ProjectionImage &rendered, const ProjectionImage &gt, double peak = 0.0);

/// CSV/JSON text for a metric value: "inf" for +infinity, shortest round-trip form otherwise.
std::string format_metric(double value);

} // namespace radsel
