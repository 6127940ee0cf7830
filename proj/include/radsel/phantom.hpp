#pragma once

#include "radsel/gaussian_field.hpp"
#include "radsel/projector.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace radsel {

enum class PhantomKind { NestedEllipsoids, RandomBlobs, SingleGaussian };

std::string to_string(PhantomKind kind);
PhantomKind phantom_kind_from_string(const std::string &name);

struct PhantomSpec {
    PhantomKind kind = PhantomKind::NestedEllipsoids;
    std::array<int, 3> dims{64, 64, 64};
    Aabb bounds;
    int feature_count = 3; ///< shells or blobs
    double density_min = 0.2;
    double density_max = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    GridSpec grid() const { return GridSpec::covering(bounds, dims); }
};

nlohmann::json phantom_spec_to_json(const PhantomSpec &spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json &j);

/// The primitive sampled by the SingleGaussian phantom.
GaussianPrimitive single_gaussian_primitive(const PhantomSpec &spec);

VoxelGrid make_phantom(const PhantomSpec &spec);

inline constexpr int kDatasetFormatVersion = 1;

struct ScanDataset {
    VoxelGrid gt;
    std::vector<ScannerPose> poses;
    std::vector<ProjectionImage> projections;
    double step = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    /// Trailing poses reserved for evaluation.
    std::size_t test_view_count = 0;
    /// Free-form provenance (phantom spec, pool spec) needed to regenerate the set.
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t training_pool_size() const { return poses.size() - test_view_count; }
};

/// Half the smallest voxel spacing.
double default_drr_step(const VoxelGrid &grid);

/// DRR of every pose plus optional seeded Gaussian noise clamped at zero.
/// Grid and projections are rounded to float32, the persisted precision.
ScanDataset simulate_scan(const VoxelGrid &grid, std::span<const ScannerPose> poses, double step,
                          double noise_sigma, std::uint64_t seed);

void save_dataset(const ScanDataset &dataset, const std::filesystem::path &dir);
ScanDataset load_dataset(const std::filesystem::path &dir);

void save_grid(const VoxelGrid &grid, const std::filesystem::path &bin_path, const std::filesystem::path &json_path);
VoxelGrid load_grid(const std::filesystem::path &bin_path, const std::filesystem::path &json_path);

} // namespace radsel
