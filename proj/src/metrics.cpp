#include "radsel/metrics.hpp"

#include "radsel/error.hpp"
#include "radsel/ssim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace radsel {

namespace {

double psnr(std::span<const double> a, std::span<const double> b, double peak) {
    if (!(peak > 0.0)) {
        throw InputError("psnr: peak must be > 0 (all-zero ground truth)");
    }
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    if (se == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double mse = se / static_cast<double>(a.size());
    return 10.0 * std::log10(peak * peak / mse);
}

void check_same(const GridSpec &a, const GridSpec &b) {
    if (a.dims != b.dims) {
        throw InputError("volume dimensions do not match");
    }
}

} // namespace

double psnr_3d(const VoxelGrid &recon, const VoxelGrid &gt) {
    check_same(recon.spec, gt.spec);
    return psnr(recon.values, gt.values, gt.max_value());
}

double ssim_3d_slices(const VoxelGrid &recon, const VoxelGrid &gt) {
    check_same(recon.spec, gt.spec);
    const double peak = gt.max_value();
    const double range = peak > 0.0 ? peak : 1.0;
    const auto &d = gt.spec.dims;
    double total = 0.0;
    std::size_t slices = 0;
    // Slice normal along `axis`; the remaining axes span the image (lower axis varies fastest).
    for (int axis = 0; axis < 3; ++axis) {
        const int u = axis == 0 ? 1 : 0;
        const int v = axis == 2 ? 1 : 2;
        const int w = d[u], h = d[v];
        std::vector<double> a(static_cast<std::size_t>(w) * h), b(a.size());
        for (int s = 0; s < d[axis]; ++s) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    int ijk[3];
                    ijk[axis] = s;
                    ijk[u] = x;
                    ijk[v] = y;
                    const std::size_t idx = gt.spec.index(ijk[0], ijk[1], ijk[2]);
                    a[static_cast<std::size_t>(y) * w + x] = recon.values[idx];
                    b[static_cast<std::size_t>(y) * w + x] = gt.values[idx];
                }
            }
            total += ssim(a, b, w, h, range);
            ++slices;
        }
    }
    return total / static_cast<double>(slices);
}

double psnr_2d(const ProjectionImage &rendered, const ProjectionImage &gt, double peak) {
    if (rendered.width != gt.width || rendered.height != gt.height) {
        throw InputError("psnr_2d: image dimensions do not match");
    }
    return psnr(rendered.values, gt.values, peak > 0.0 ? peak : gt.max_value());
}

std::string format_metric(double value) {
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    if (std::isnan(value)) {
        throw InputError("metric is NaN");
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

} // namespace radsel
