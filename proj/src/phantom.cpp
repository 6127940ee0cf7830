#include "radsel/phantom.hpp"

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/parallel.hpp"
#include "radsel/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <random>

namespace radsel {

namespace {

nlohmann::json vec3_json(const Eigen::Vector3d &v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from(const nlohmann::json &j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::vector<double> to_float_precision(std::vector<double> v) {
    for (double &x : v) {
        x = static_cast<double>(static_cast<float>(x));
    }
    return v;
}

nlohmann::json parse_file(const std::filesystem::path &path) {
    try {
        return nlohmann::json::parse(io::read_text(path));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(path.filename().string() + ": " + e.what());
    }
}

} // namespace

std::string to_string(PhantomKind kind) {
    switch (kind) {
    case PhantomKind::NestedEllipsoids:
        return "nested_ellipsoids";
    case PhantomKind::RandomBlobs:
        return "random_blobs";
    case PhantomKind::SingleGaussian:
        return "single_gaussian";
    }
    return "unknown";
}

PhantomKind phantom_kind_from_string(const std::string &name) {
    if (name == "nested_ellipsoids") return PhantomKind::NestedEllipsoids;
    if (name == "random_blobs") return PhantomKind::RandomBlobs;
    if (name == "single_gaussian") return PhantomKind::SingleGaussian;
    throw ConfigError("unknown phantom kind '" + name + "'");
}

void PhantomSpec::validate() const {
    GridSpec::covering(bounds, dims).validate();
    if (!(bounds.extent().array() > 0.0).all()) {
        throw ConfigError("phantom: bounds must have positive extent");
    }
    if (feature_count < 1) {
        throw ConfigError("phantom: feature_count must be >= 1");
    }
    if (!(density_max > 0.0) || density_min < 0.0 || density_min > density_max) {
        throw ConfigError("phantom: need 0 <= density_min <= density_max and density_max > 0");
    }
}

nlohmann::json phantom_spec_to_json(const PhantomSpec &spec) {
    return {
        {"kind", to_string(spec.kind)},
        {"dims", spec.dims},
        {"bounds", {{"lo", vec3_json(spec.bounds.lo)}, {"hi", vec3_json(spec.bounds.hi)}}},
        {"feature_count", spec.feature_count},
        {"density_min", spec.density_min},
        {"density_max", spec.density_max},
        {"seed", spec.seed},
    };
}

PhantomSpec phantom_spec_from_json(const nlohmann::json &j) {
    PhantomSpec s;
    static const char *const known[] = {"kind", "dims", "bounds", "feature_count", "density_min", "density_max", "seed"};
    for (const auto &[key, value] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError("phantom: unknown key '" + key + "'");
        }
    }
    try {
        if (j.contains("kind")) s.kind = phantom_kind_from_string(j.at("kind").get<std::string>());
        if (j.contains("dims")) s.dims = j.at("dims").get<std::array<int, 3>>();
        if (j.contains("bounds")) {
            s.bounds.lo = vec3_from(j.at("bounds").at("lo"));
            s.bounds.hi = vec3_from(j.at("bounds").at("hi"));
        }
        if (j.contains("feature_count")) s.feature_count = j.at("feature_count").get<int>();
        if (j.contains("density_min")) s.density_min = j.at("density_min").get<double>();
        if (j.contains("density_max")) s.density_max = j.at("density_max").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("phantom spec: ") + e.what());
    }
    s.validate();
    return s;
}

GaussianPrimitive single_gaussian_primitive(const PhantomSpec &spec) {
    const Eigen::Vector3d half = 0.5 * spec.bounds.extent();
    GaussianPrimitive g;
    g.position = spec.bounds.center();
    g.log_scale = (Eigen::Vector3d(0.30, 0.22, 0.16).cwiseProduct(half)).array().log();
    const Eigen::Quaterniond q(Eigen::AngleAxisd(0.4, Eigen::Vector3d(1, 2, 3).normalized()));
    g.rotation = Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
    g.set_density(spec.density_max);
    return g;
}

VoxelGrid make_phantom(const PhantomSpec &spec) {
    spec.validate();
    const GridSpec grid_spec = spec.grid();
    const Eigen::Vector3d half = 0.5 * spec.bounds.extent();
    const Eigen::Vector3d center = spec.bounds.center();

    switch (spec.kind) {
    case PhantomKind::SingleGaussian: {
        GaussianField f;
        f.bounds = spec.bounds;
        f.primitives.push_back(single_gaussian_primitive(spec));
        return voxelize(f, grid_spec);
    }
    case PhantomKind::RandomBlobs: {
        std::mt19937_64 rng(derive_seed(spec.seed, "phantom"));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        GaussianField f;
        f.bounds = spec.bounds;
        for (int b = 0; b < spec.feature_count; ++b) {
            GaussianPrimitive g;
            for (int a = 0; a < 3; ++a) {
                g.position[a] = center[a] + (2.0 * u(rng) - 1.0) * 0.55 * half[a];
                g.log_scale[a] = std::log((0.06 + 0.14 * u(rng)) * half[a]);
            }
            Eigen::Vector4d q(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
            g.rotation = q.norm() > 1e-6 ? Eigen::Vector4d(q.normalized()) : Eigen::Vector4d(1, 0, 0, 0);
            g.set_density(spec.density_min + (spec.density_max - spec.density_min) * u(rng));
            f.primitives.push_back(g);
        }
        VoxelGrid grid = voxelize(f, grid_spec);
        for (double &v : grid.values) {
            v = std::clamp(v, 0.0, spec.density_max);
        }
        return grid;
    }
    case PhantomKind::NestedEllipsoids:
        break;
    }

    // Shell 0 is the outer low-density boundary, shell 1 the dense shell,
    // deeper shells mid densities; each inner shell shifts slightly off center.
    const int shells = spec.feature_count;
    const double span = spec.density_max - spec.density_min;
    std::vector<double> level(shells);
    std::vector<Eigen::Vector3d> axes(shells), centers(shells);
    const Eigen::Vector3d outer = Eigen::Vector3d(0.85, 0.72, 0.58).cwiseProduct(half);
    for (int k = 0; k < shells; ++k) {
        level[k] = k == 0 ? spec.density_min : k == 1 ? spec.density_max : spec.density_min + span * 0.5 / (k - 1);
        const double s = 1.0 - 0.75 * static_cast<double>(k) / shells;
        axes[k] = s * outer;
        const double shift = 0.08 * static_cast<double>(k) / shells;
        centers[k] = center + Eigen::Vector3d(shift * half.x(), -0.5 * shift * half.y(), 0.25 * shift * half.z());
    }
    VoxelGrid grid(grid_spec);
    for (int k = 0; k < grid_spec.dims[2]; ++k) {
        for (int j = 0; j < grid_spec.dims[1]; ++j) {
            for (int i = 0; i < grid_spec.dims[0]; ++i) {
                const Eigen::Vector3d x = grid_spec.center(i, j, k);
                double v = 0.0;
                for (int s = 0; s < shells; ++s) {
                    if ((x - centers[s]).cwiseQuotient(axes[s]).squaredNorm() <= 1.0) {
                        v = level[s];
                    } else {
                        break;
                    }
                }
                grid.at(i, j, k) = v;
            }
        }
    }
    return grid;
}

double default_drr_step(const VoxelGrid &grid) { return 0.5 * grid.spec.spacing.minCoeff(); }

ScanDataset simulate_scan(const VoxelGrid &grid, std::span<const ScannerPose> poses, double step,
                          double noise_sigma, std::uint64_t seed) {
    if (!(step > 0.0)) {
        throw InputError("simulate_scan: step must be > 0");
    }
    if (noise_sigma < 0.0) {
        throw InputError("simulate_scan: noise sigma must be >= 0");
    }
    ScanDataset ds;
    ds.gt.spec = grid.spec;
    ds.gt.values = to_float_precision(grid.values);
    ds.poses.assign(poses.begin(), poses.end());
    ds.step = step;
    ds.noise_sigma = noise_sigma;
    ds.seed = seed;
    ds.projections.resize(poses.size());
    const std::uint64_t noise_seed = derive_seed(seed, "noise");
    for (std::size_t p = 0; p < poses.size(); ++p) {
        ProjectionImage img = drr_oracle(ds.gt, poses[p], step);
        if (noise_sigma > 0.0) {
            std::mt19937_64 rng(hash_key({noise_seed, p}));
            std::normal_distribution<double> normal(0.0, noise_sigma);
            for (double &v : img.values) {
                v = std::max(0.0, v + normal(rng));
            }
        }
        img.values = to_float_precision(std::move(img.values));
        ds.projections[p] = std::move(img);
    }
    return ds;
}

void save_grid(const VoxelGrid &grid, const std::filesystem::path &bin_path, const std::filesystem::path &json_path) {
    io::write_f32(bin_path, grid.values);
    const nlohmann::json meta = {
        {"dims", grid.spec.dims},
        {"origin", vec3_json(grid.spec.origin)},
        {"spacing", vec3_json(grid.spec.spacing)},
        {"format_version", kDatasetFormatVersion},
    };
    io::write_text(json_path, meta.dump(2) + "\n");
}

VoxelGrid load_grid(const std::filesystem::path &bin_path, const std::filesystem::path &json_path) {
    const nlohmann::json meta = parse_file(json_path);
    GridSpec spec;
    try {
        spec.dims = meta.at("dims").get<std::array<int, 3>>();
        spec.origin = vec3_from(meta.at("origin"));
        spec.spacing = vec3_from(meta.at("spacing"));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(json_path.filename().string() + ": " + e.what());
    }
    spec.validate();
    VoxelGrid grid(spec);
    grid.values = io::read_f32(bin_path, spec.voxel_count());
    return grid;
}

void save_dataset(const ScanDataset &ds, const std::filesystem::path &dir) {
    if (ds.poses.size() != ds.projections.size()) {
        throw InputError("save_dataset: pose/projection count mismatch");
    }
    std::filesystem::create_directories(dir);
    std::vector<std::string> files = {"gt_volume.bin", "gt_volume.json", "poses.json"};
    save_grid(ds.gt, dir / "gt_volume.bin", dir / "gt_volume.json");
    io::write_text(dir / "poses.json", poses_to_json(ds.poses).dump(2) + "\n");
    for (std::size_t i = 0; i < ds.projections.size(); ++i) {
        const std::string name = "proj_" + std::to_string(i) + ".bin";
        io::write_f32(dir / name, ds.projections[i].values);
        files.push_back(name);
    }
    nlohmann::json checksums = nlohmann::json::object();
    for (const auto &f : files) {
        checksums[f] = io::file_crc32(dir / f);
    }
    const nlohmann::json manifest = {
        {"format_version", kDatasetFormatVersion},
        {"step", ds.step},
        {"noise_sigma", ds.noise_sigma},
        {"seed", ds.seed},
        {"count", ds.poses.size()},
        {"test_view_count", ds.test_view_count},
        {"provenance", ds.provenance},
        {"checksums", checksums},
    };
    io::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ScanDataset load_dataset(const std::filesystem::path &dir) {
    const nlohmann::json manifest = parse_file(dir / "manifest.json");
    ScanDataset ds;
    try {
        const int version = manifest.at("format_version").get<int>();
        if (version != kDatasetFormatVersion) {
            throw FormatError("dataset format_version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kDatasetFormatVersion) + ")");
        }
        for (const auto &[name, crc] : manifest.at("checksums").items()) {
            const std::uint32_t actual = io::file_crc32(dir / name);
            if (actual != crc.get<std::uint32_t>()) {
                throw FormatError("checksum mismatch for " + name);
            }
        }
        ds.step = manifest.at("step").get<double>();
        ds.noise_sigma = manifest.at("noise_sigma").get<double>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        ds.test_view_count = manifest.at("test_view_count").get<std::size_t>();
        ds.provenance = manifest.at("provenance");
        const std::size_t count = manifest.at("count").get<std::size_t>();
        ds.gt = load_grid(dir / "gt_volume.bin", dir / "gt_volume.json");
        ds.poses = poses_from_json(parse_file(dir / "poses.json"));
        if (ds.poses.size() != count || ds.test_view_count > count) {
            throw FormatError("poses.json does not match the manifest count");
        }
        for (std::size_t i = 0; i < count; ++i) {
            ProjectionImage img = ProjectionImage::for_detector(ds.poses[i].detector);
            img.values = io::read_f32(dir / ("proj_" + std::to_string(i) + ".bin"), img.values.size());
            ds.projections.push_back(std::move(img));
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("manifest.json: ") + e.what());
    }
    return ds;
}

} // namespace radsel
