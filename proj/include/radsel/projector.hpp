#pragma once

#include "radsel/gaussian_field.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace radsel {

enum class BeamKind { Parallel, Cone };

struct Beam {
    BeamKind kind = BeamKind::Parallel;
    /// Cone beam only: distance from the source to the detector plane.
    double source_to_detector = 0.0;

    static Beam parallel() { return {}; }
    static Beam cone(double sdd) { return {BeamKind::Cone, sdd}; }
};

struct Detector {
    int width = 64;
    int height = 64;
    double pitch = 1.0; ///< world units per pixel on the detector plane
};

/// Object-centric scanner geometry. `orientation` is a (w, x, y, z) quaternion
/// whose rotation matrix maps world offsets to the detector frame: row 0 is the
/// detector column axis u, row 1 the row axis v, row 2 the beam axis pointing
/// from the source through the scene center. For a parallel beam `eye` only
/// anchors the ray family; the detector origin lies on the axis.
struct ScannerPose {
    Eigen::Vector4d orientation{1.0, 0.0, 0.0, 0.0};
    Eigen::Vector3d eye = Eigen::Vector3d::Zero();
    Beam beam;
    Detector detector;

    /// Source at `eye` looking at `target`. Detector "up" is world +z projected
    /// onto the detector plane, or +x when looking along the z axis.
    static ScannerPose look_at(const Eigen::Vector3d &eye, const Eigen::Vector3d &target, const Beam &beam,
                               const Detector &detector);

    Eigen::Matrix3d rotation() const;
    Eigen::Vector3d axis() const { return rotation().row(2).transpose(); }
    /// Detector-plane coordinates (world units, origin on the optical axis) of a pixel center.
    Eigen::Vector2d pixel_center(int row, int col) const {
        return {(col + 0.5 - 0.5 * detector.width) * detector.pitch,
                (row + 0.5 - 0.5 * detector.height) * detector.pitch};
    }
    void validate() const;
};

/// H x W log-space line integrals, row-major.
struct ProjectionImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    ProjectionImage() = default;
    ProjectionImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}
    static ProjectionImage for_detector(const Detector &d) { return {d.width, d.height}; }

    double &at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    double max_value() const;
    bool operator==(const ProjectionImage &) const = default;
};

/// 2D footprint of a primitive on the detector plane (world units).
struct Footprint {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
    double amplitude = 0.0;
    bool contributes = false; ///< false when a cone-beam source sits in front of the primitive
};

/// Parallel beam: exact marginal of the 3D Gaussian along the beam with
/// amplitude rho*sqrt(2*pi*|Sigma|/|cov|). Cone beam: affine approximation of
/// the perspective map at the primitive center, amplitude taken from the line
/// integral along the ray through the center.
Footprint project_gaussian(const GaussianPrimitive &primitive, const ScannerPose &pose);

struct RenderOptions {
    double cutoff = kDefaultCutoff;
    /// Optional per-primitive multiplier on the activated density (ensemble overlays).
    std::span<const double> density_scale{};
};

ProjectionImage render(const GaussianField &field, const ScannerPose &pose, const RenderOptions &options = {});

/// Calls visit(pixel_index, dx, dy, e) for every pixel inside the footprint's
/// cutoff ellipse, with (dx, dy) the pixel center minus the footprint mean in
/// world units and e = exp(-0.5 * d^T cov^-1 d).
void visit_footprint(const Footprint &footprint, const ScannerPose &pose, double cutoff,
                     const std::function<void(std::size_t, double, double, double)> &visit);

/// Gradient w.r.t. footprint quantities: amplitude, mean and the unique conic
/// entries (a, b, c) of cov^-1 = [[a, b], [b, c]].
struct FootprintGrad {
    double amplitude = 0.0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Vector3d conic = Eigen::Vector3d::Zero();
};

PrimitiveGrad backprop_footprint(const GaussianPrimitive &primitive, const ScannerPose &pose,
                                 const FootprintGrad &grad);

/// Rows: amplitude, mean x, mean y, conic a, b, c. Columns: PrimitiveGrad::flat() order.
Eigen::Matrix<double, 6, 11> footprint_jacobian(const GaussianPrimitive &primitive, const ScannerPose &pose);

/// Accumulates dLoss/dtheta into `out` given dLoss/dpixel. If `mean2d_grad` is
/// non-empty it receives, per contributing primitive, the norm of dLoss/dmean
/// in normalized device coordinates and `visible` is incremented.
void render_backward(const GaussianField &field, const ScannerPose &pose, std::span<const double> grad_pixels,
                     std::span<PrimitiveGrad> out, const RenderOptions &options = {},
                     std::span<double> mean2d_grad = {}, std::span<int> visible = {});

/// Ray-marched DRR: midpoint rule over each ray's intersection with the grid
/// box, trilinear interpolation clamped to the outer voxel centers.
ProjectionImage drr_oracle(const VoxelGrid &grid, const ScannerPose &pose, double step);

nlohmann::json pose_to_json(const ScannerPose &pose);
ScannerPose pose_from_json(const nlohmann::json &j);
nlohmann::json poses_to_json(std::span<const ScannerPose> poses);
std::vector<ScannerPose> poses_from_json(const nlohmann::json &j);

/// Projection set: proj_{i}.bin (float32) plus projections.json.
void save_projection_set(const std::filesystem::path &dir, std::span<const ScannerPose> poses,
                         std::span<const ProjectionImage> images);
void load_projection_set(const std::filesystem::path &dir, std::vector<ScannerPose> &poses,
                         std::vector<ProjectionImage> &images);

/// Min-max normalized 16-bit grayscale PNG, for inspection only.
void write_png16(const std::filesystem::path &path, const ProjectionImage &image);

} // namespace radsel
