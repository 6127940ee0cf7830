#include "radsel/ssim.hpp"

#include "radsel/error.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace radsel {

namespace {

constexpr int kRadius = kSsimWindow / 2;

std::array<double, kSsimWindow> gaussian_window() {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int k = 0; k < kSsimWindow; ++k) {
        const double d = k - kRadius;
        w[k] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[k];
    }
    for (double &v : w) {
        v /= sum;
    }
    return w;
}

// Separable zero-padded blur. The window is symmetric, so this operator is
// its own adjoint.
void blur(std::span<const double> in, std::span<double> out, int width, int height, std::vector<double> &tmp) {
    static const std::array<double, kSsimWindow> w = gaussian_window();
    tmp.assign(in.size(), 0.0);
    for (int r = 0; r < height; ++r) {
        const double *row = in.data() + static_cast<std::size_t>(r) * width;
        for (int c = 0; c < width; ++c) {
            double s = 0.0;
            const int k0 = std::max(0, kRadius - c);
            const int k1 = std::min(kSsimWindow, width - c + kRadius);
            for (int k = k0; k < k1; ++k) {
                s += w[k] * row[c + k - kRadius];
            }
            tmp[static_cast<std::size_t>(r) * width + c] = s;
        }
    }
    for (int r = 0; r < height; ++r) {
        const int k0 = std::max(0, kRadius - r);
        const int k1 = std::min(kSsimWindow, height - r + kRadius);
        for (int c = 0; c < width; ++c) {
            double s = 0.0;
            for (int k = k0; k < k1; ++k) {
                s += w[k] * tmp[static_cast<std::size_t>(r + k - kRadius) * width + c];
            }
            out[static_cast<std::size_t>(r) * width + c] = s;
        }
    }
}

} // namespace

double ssim(std::span<const double> a, std::span<const double> b, int width, int height, double dynamic_range,
            std::span<double> grad_a) {
    const std::size_t n = static_cast<std::size_t>(width) * height;
    if (width < 1 || height < 1 || a.size() != n || b.size() != n) {
        throw InputError("ssim: image dimensions do not match");
    }
    if (!(dynamic_range > 0.0)) {
        throw InputError("ssim: dynamic range must be > 0");
    }
    if (!grad_a.empty() && grad_a.size() != n) {
        throw InputError("ssim: gradient buffer has the wrong size");
    }
    const double c1 = std::pow(0.01 * dynamic_range, 2);
    const double c2 = std::pow(0.03 * dynamic_range, 2);

    std::vector<double> tmp;
    std::vector<double> prod(n);
    std::vector<double> mu_a(n), mu_b(n), e_aa(n), e_bb(n), e_ab(n);
    blur(a, mu_a, width, height, tmp);
    blur(b, mu_b, width, height, tmp);
    for (std::size_t i = 0; i < n; ++i) prod[i] = a[i] * a[i];
    blur(prod, e_aa, width, height, tmp);
    for (std::size_t i = 0; i < n; ++i) prod[i] = b[i] * b[i];
    blur(prod, e_bb, width, height, tmp);
    for (std::size_t i = 0; i < n; ++i) prod[i] = a[i] * b[i];
    blur(prod, e_ab, width, height, tmp);

    const bool want_grad = !grad_a.empty();
    std::vector<double> d_mu, d_aa, d_ab;
    if (want_grad) {
        d_mu.resize(n);
        d_aa.resize(n);
        d_ab.resize(n);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double a1 = 2.0 * ma * mb + c1;
        const double a2 = 2.0 * (e_ab[i] - ma * mb) + c2;
        const double b1 = ma * ma + mb * mb + c1;
        const double b2 = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb) + c2;
        const double s = (a1 * a2) / (b1 * b2);
        total += s;
        if (want_grad) {
            d_mu[i] = (2.0 * mb * a2 - 2.0 * mb * a1) / (b1 * b2) - s * (2.0 * ma / b1 - 2.0 * ma / b2);
            d_aa[i] = -s / b2;
            d_ab[i] = 2.0 * a1 / (b1 * b2);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    if (want_grad) {
        blur(d_mu, d_mu, width, height, tmp);
        blur(d_aa, d_aa, width, height, tmp);
        blur(d_ab, d_ab, width, height, tmp);
        for (std::size_t i = 0; i < n; ++i) {
            grad_a[i] = inv_n * (d_mu[i] + 2.0 * a[i] * d_aa[i] + b[i] * d_ab[i]);
        }
    }
    return total * inv_n;
}

double ssim(const ProjectionImage &a, const ProjectionImage &b, double dynamic_range) {
    if (a.width != b.width || a.height != b.height) {
        throw InputError("ssim: image dimensions do not match");
    }
    return ssim(a.values, b.values, a.width, a.height, dynamic_range);
}

} // namespace radsel
