#pragma once

#include "radsel/projector.hpp"

#include <cstdint>
#include <vector>

namespace radsel {

struct PoolSpec {
    int poses_per_hemisphere = 224;
    std::vector<double> radii{2.5, 3.125};
    Detector detector;
    Beam beam;
    int test_view_count = 103;
    std::uint64_t seed = 0;

    /// Radii r and 1.25 r with r = 2.5 x the scene half-extent.
    static std::vector<double> default_radii(const Aabb &bounds);
    std::size_t pool_size() const { return static_cast<std::size_t>(poses_per_hemisphere) * radii.size(); }
    void validate() const;
};

/// Spherical Fibonacci points on the upper hemisphere, one block of
/// poses_per_hemisphere per radius, every pose looking at `center`. Block r is
/// rotated by 2*pi*r/|radii| in azimuth.
std::vector<ScannerPose> generate_pool(const PoolSpec &spec, const Eigen::Vector3d &center);

/// Seeded area-uniform sources on the upper hemisphere at the inner radius.
std::vector<ScannerPose> generate_test_views(const PoolSpec &spec, const Eigen::Vector3d &center);

enum class InitialStrategy { MaxSeparated, FirstK, Random };

/// Initial training views. MaxSeparated takes the most distant pair (great
/// circle, ties by index) among poses at the inner radius and extends it
/// farthest-point style when count > 2.
std::vector<std::size_t> pick_initial_views(std::span<const ScannerPose> pool, std::size_t count,
                                            const Eigen::Vector3d &center,
                                            InitialStrategy strategy = InitialStrategy::MaxSeparated,
                                            std::uint64_t seed = 0);

/// Angle between the source directions of two poses as seen from center.
double angular_distance(const ScannerPose &a, const ScannerPose &b, const Eigen::Vector3d &center);

struct SphericalCoords {
    double azimuth = 0.0;   ///< radians
    double elevation = 0.0; ///< radians above the xy plane through center
    double radius = 0.0;
};
SphericalCoords source_coords(const ScannerPose &pose, const Eigen::Vector3d &center);

} // namespace radsel
