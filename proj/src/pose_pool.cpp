#include "radsel/pose_pool.hpp"

#include "radsel/error.hpp"
#include "radsel/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace radsel {

namespace {

ScannerPose pose_at(const PoolSpec &spec, const Eigen::Vector3d &center, const Eigen::Vector3d &dir, double radius) {
    return ScannerPose::look_at(center + radius * dir, center, spec.beam, spec.detector);
}

Eigen::Vector3d direction(double z, double phi) {
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {rho * std::cos(phi), rho * std::sin(phi), z};
}

} // namespace

std::vector<double> PoolSpec::default_radii(const Aabb &bounds) {
    const double r = 2.5 * 0.5 * bounds.max_extent();
    return {r, 1.25 * r};
}

void PoolSpec::validate() const {
    if (poses_per_hemisphere < 1) {
        throw ConfigError("pool: poses_per_hemisphere must be >= 1");
    }
    if (radii.empty()) {
        throw ConfigError("pool: at least one radius is required");
    }
    for (double r : radii) {
        if (!(r > 0.0)) {
            throw ConfigError("pool: radii must be > 0");
        }
    }
    if (test_view_count < 0) {
        throw ConfigError("pool: test_view_count must be >= 0");
    }
    ScannerPose probe;
    probe.beam = beam;
    probe.detector = detector;
    probe.validate();
}

std::vector<ScannerPose> generate_pool(const PoolSpec &spec, const Eigen::Vector3d &center) {
    spec.validate();
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const int n = spec.poses_per_hemisphere;
    std::vector<ScannerPose> pool;
    pool.reserve(spec.pool_size());
    const auto shells = static_cast<double>(spec.radii.size());
    for (std::size_t r = 0; r < spec.radii.size(); ++r) {
        const double offset = 2.0 * std::numbers::pi * static_cast<double>(r) / shells;
        for (int k = 0; k < n; ++k) {
            const double z = 1.0 - static_cast<double>(k) / n;
            pool.push_back(pose_at(spec, center, direction(z, k * golden + offset), spec.radii[r]));
        }
    }
    return pool;
}

std::vector<ScannerPose> generate_test_views(const PoolSpec &spec, const Eigen::Vector3d &center) {
    spec.validate();
    const std::uint64_t seed = derive_seed(spec.seed, "test_views");
    std::vector<ScannerPose> views;
    for (int k = 0; k < spec.test_view_count; ++k) {
        const auto kk = static_cast<std::uint64_t>(k);
        const double z = unit_uniform(hash_key({seed, kk, 0}));
        const double phi = 2.0 * std::numbers::pi * unit_uniform(hash_key({seed, kk, 1}));
        views.push_back(pose_at(spec, center, direction(z, phi), spec.radii.front()));
    }
    return views;
}

double angular_distance(const ScannerPose &a, const ScannerPose &b, const Eigen::Vector3d &center) {
    const Eigen::Vector3d da = (a.eye - center).normalized();
    const Eigen::Vector3d db = (b.eye - center).normalized();
    return std::atan2(da.cross(db).norm(), da.dot(db));
}

SphericalCoords source_coords(const ScannerPose &pose, const Eigen::Vector3d &center) {
    const Eigen::Vector3d d = pose.eye - center;
    SphericalCoords s;
    s.radius = d.norm();
    s.azimuth = std::atan2(d.y(), d.x());
    s.elevation = s.radius > 0.0 ? std::asin(std::clamp(d.z() / s.radius, -1.0, 1.0)) : 0.0;
    return s;
}

std::vector<std::size_t> pick_initial_views(std::span<const ScannerPose> pool, std::size_t count,
                                            const Eigen::Vector3d &center, InitialStrategy strategy,
                                            std::uint64_t seed) {
    if (count > pool.size()) {
        throw ConfigError("initial view count exceeds the pool size");
    }
    std::vector<std::size_t> picked;
    if (count == 0) {
        return picked;
    }
    if (count == pool.size()) {
        for (std::size_t i = 0; i < count; ++i) {
            picked.push_back(i);
        }
        return picked;
    }
    switch (strategy) {
    case InitialStrategy::FirstK:
        for (std::size_t i = 0; i < count; ++i) {
            picked.push_back(i);
        }
        return picked;
    case InitialStrategy::Random: {
        std::vector<std::size_t> rest(pool.size());
        for (std::size_t i = 0; i < rest.size(); ++i) {
            rest[i] = i;
        }
        const std::uint64_t s = derive_seed(seed, "initial_views");
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t j = uniform_index(hash_key({s, k}), rest.size());
            picked.push_back(rest[j]);
            rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(j));
        }
        std::sort(picked.begin(), picked.end());
        return picked;
    }
    case InitialStrategy::MaxSeparated:
        break;
    }

    // Candidates: poses at the smallest source radius.
    double inner = std::numeric_limits<double>::infinity();
    for (const auto &p : pool) {
        inner = std::min(inner, (p.eye - center).norm());
    }
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if ((pool[i].eye - center).norm() <= inner * (1.0 + 1e-9)) {
            cand.push_back(i);
        }
    }
    if (cand.size() < count) {
        cand.clear();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            cand.push_back(i);
        }
    }
    if (count == 1) {
        return {cand.front()};
    }
    std::size_t best_a = cand[0], best_b = cand[1];
    double best = -1.0;
    for (std::size_t x = 0; x < cand.size(); ++x) {
        for (std::size_t y = x + 1; y < cand.size(); ++y) {
            const double d = angular_distance(pool[cand[x]], pool[cand[y]], center);
            if (d > best) {
                best = d;
                best_a = cand[x];
                best_b = cand[y];
            }
        }
    }
    picked = {best_a, best_b};
    while (picked.size() < count) {
        std::size_t arg = cand.front();
        double arg_d = -1.0;
        for (std::size_t c : cand) {
            if (std::find(picked.begin(), picked.end(), c) != picked.end()) {
                continue;
            }
            double dmin = std::numeric_limits<double>::infinity();
            for (std::size_t p : picked) {
                dmin = std::min(dmin, angular_distance(pool[c], pool[p], center));
            }
            if (dmin > arg_d) {
                arg_d = dmin;
                arg = c;
            }
        }
        picked.push_back(arg);
    }
    return picked;
}

} // namespace radsel
