#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace radsel {

/// Mahalanobis truncation radius used by the voxelizer and the splatting
/// renderer: the dropped tail exp(-r^2/2) equals 1e-4 of the primitive peak.
inline const double kDefaultCutoff = std::sqrt(2.0 * std::log(1.0e4));

inline double softplus(double x) {
    return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
    return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct Aabb {
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0);
    Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);

    Eigen::Vector3d extent() const { return hi - lo; }
    Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
    double max_extent() const { return extent().maxCoeff(); }
    bool contains(const Eigen::Vector3d &p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

/// One radiative kernel. Stored parameters are unconstrained; the activated
/// density is softplus(raw_density) and per-axis standard deviations are
/// exp(log_scale). rotation is a (w, x, y, z) quaternion.
struct GaussianPrimitive {
    double raw_density = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};

    double density() const { return softplus(raw_density); }
    void set_density(double rho) { raw_density = softplus_inverse(rho); }
    Eigen::Vector3d scale() const { return log_scale.array().exp(); }
    /// Rotation matrix of the normalized quaternion.
    Eigen::Matrix3d rotation_matrix() const;
};

struct GaussianField {
    std::vector<GaussianPrimitive> primitives;
    Aabb bounds;

    std::size_t size() const { return primitives.size(); }
    bool empty() const { return primitives.empty(); }
};

/// Regular lattice. origin is the center of voxel (0,0,0); x varies fastest.
struct GridSpec {
    std::array<int, 3> dims{1, 1, 1};
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d spacing = Eigen::Vector3d::Ones();

    /// Lattice whose voxels tile `box` exactly.
    static GridSpec covering(const Aabb &box, std::array<int, 3> dims);

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    Eigen::Vector3d center(int i, int j, int k) const {
        return origin + spacing.cwiseProduct(Eigen::Vector3d(i, j, k));
    }
    /// Box covered by the voxels (centers +- half a spacing).
    Aabb extent_box() const;
    void validate() const;
};

struct VoxelGrid {
    GridSpec spec;
    std::vector<double> values;

    VoxelGrid() = default;
    explicit VoxelGrid(const GridSpec &s) : spec(s), values(s.voxel_count(), 0.0) {}

    double &at(int i, int j, int k) { return values[spec.index(i, j, k)]; }
    double at(int i, int j, int k) const { return values[spec.index(i, j, k)]; }
    double max_value() const;
};

/// Sigma = R diag(s^2) R^T.
Eigen::Matrix3d covariance(const GaussianPrimitive &primitive);

/// Exact mixture density at x, summed in primitive index order.
double density_at(const GaussianField &field, const Eigen::Vector3d &x);

/// Samples the mixture at voxel centers; each primitive contributes only inside
/// its Mahalanobis ball of radius `cutoff`.
VoxelGrid voxelize(const GaussianField &field, const GridSpec &spec, double cutoff = kDefaultCutoff);

/// Gradient of a scalar loss w.r.t. one primitive's stored parameters.
struct PrimitiveGrad {
    double raw_density = 0.0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();

    PrimitiveGrad &operator+=(const PrimitiveGrad &o) {
        raw_density += o.raw_density;
        position += o.position;
        log_scale += o.log_scale;
        rotation += o.rotation;
        return *this;
    }
    /// Flattened as (raw_density, position, log_scale, rotation) = 11 values.
    Eigen::Matrix<double, 11, 1> flat() const;
};

/// Adds dLoss/dtheta for every primitive given dLoss/dvalue for every voxel
/// of voxelize(field, spec, cutoff). `out` must have field.size() entries.
void voxelize_backward(const GaussianField &field, const GridSpec &spec, std::span<const double> grad_values,
                       std::span<PrimitiveGrad> out, double cutoff = kDefaultCutoff);

/// Chains dLoss/dSigma (any 3x3, symmetrized internally) into log_scale and
/// rotation gradients, including the quaternion normalization.
void accumulate_covariance_grad(const GaussianPrimitive &primitive, const Eigen::Matrix3d &grad_sigma,
                                PrimitiveGrad &out);

/// Random initialization: positions uniform in bounds, isotropic scale
/// 0.5 * max_extent / count^(1/3), activated density `density`.
GaussianField init_random_field(const Aabb &bounds, std::size_t count, double density, std::uint64_t seed);

// Checkpoint: `<path>` holds 11 little-endian float32 per primitive
// (raw_density, position, log_scale, quaternion wxyz); `<path>.json` holds
// {count, bounds, format_version}.
inline constexpr int kCheckpointFormatVersion = 1;
void save_checkpoint(const GaussianField &field, const std::filesystem::path &path);
GaussianField load_checkpoint(const std::filesystem::path &path);
/// Rounds every parameter to float32, i.e. what a checkpoint round trip yields.
GaussianField quantized(const GaussianField &field);

} // namespace radsel
