#include "radsel/error.hpp"
#include "radsel/pose_pool.hpp"

#include <Eigen/Geometry>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

using namespace radsel;

namespace {

PoolSpec small_spec() {
    PoolSpec s;
    s.detector = {16, 16, 0.15};
    return s;
}

} // namespace

TEST(PosePool, SinglePosePerHemisphereIsThePole) {
    PoolSpec s = small_spec();
    s.poses_per_hemisphere = 1;
    const Eigen::Vector3d c(0.1, -0.2, 0.3);
    const auto pool = generate_pool(s, c);
    ASSERT_EQ(pool.size(), 2u);
    for (std::size_t r = 0; r < 2; ++r) {
        EXPECT_NEAR((pool[r].eye - (c + Eigen::Vector3d(0, 0, s.radii[r]))).norm(), 0.0, 1e-12);
        EXPECT_NEAR((pool[r].axis() - Eigen::Vector3d(0, 0, -1)).norm(), 0.0, 1e-12);
    }
}

TEST(PosePool, DefaultPoolCoversUpperHemisphereAndAimsAtCenter) {
    PoolSpec s = small_spec();
    const Eigen::Vector3d c(0.0, 0.0, 0.0);
    const auto pool = generate_pool(s, c);
    ASSERT_EQ(pool.size(), 448u);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const Eigen::Vector3d d = pool[i].eye - c;
        EXPECT_GE(d.z(), 0.0);
        EXPECT_NEAR(d.norm(), s.radii[i / 224], 1e-12);
        // The beam axis passes through the center.
        EXPECT_LT(d.normalized().cross(pool[i].axis()).norm(), 1e-9);
        EXPECT_LT(d.dot(pool[i].axis()), 0.0);
    }
}

TEST(PosePool, FibonacciSpacingIsNearlyUniform) {
    PoolSpec s = small_spec();
    s.radii = {2.0};
    const auto pool = generate_pool(s, Eigen::Vector3d::Zero());
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    // Ignore the pole, which has a single close neighbour by construction.
    for (std::size_t i = 1; i < pool.size(); ++i) {
        double nn = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (j != i) nn = std::min(nn, angular_distance(pool[i], pool[j], Eigen::Vector3d::Zero()));
        }
        lo = std::min(lo, nn);
        hi = std::max(hi, nn);
    }
    EXPECT_GT(lo, 0.0);
    EXPECT_LT(hi / lo, 2.0);
}

TEST(PosePool, ShellsAreRotatedInAzimuth) {
    PoolSpec s = small_spec();
    s.radii = {2.0, 3.0, 4.0};
    s.poses_per_hemisphere = 20;
    const auto pool = generate_pool(s, Eigen::Vector3d::Zero());
    for (int k = 1; k < 20; ++k) {
        const auto a = source_coords(pool[k], Eigen::Vector3d::Zero());
        for (int r = 1; r < 3; ++r) {
            const auto b = source_coords(pool[r * 20 + k], Eigen::Vector3d::Zero());
            EXPECT_NEAR(b.elevation, a.elevation, 1e-12);
            const double turn = std::remainder(b.azimuth - a.azimuth - 2.0 * std::numbers::pi * r / 3.0,
                                               2.0 * std::numbers::pi);
            EXPECT_NEAR(turn, 0.0, 1e-9);
        }
    }
}

TEST(PosePool, Deterministic) {
    const auto a = generate_pool(small_spec(), Eigen::Vector3d(0.2, 0, 0));
    const auto b = generate_pool(small_spec(), Eigen::Vector3d(0.2, 0, 0));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].eye, b[i].eye);
        EXPECT_EQ(a[i].orientation, b[i].orientation);
    }
}

TEST(PosePool, InvalidSpecIsRejected) {
    PoolSpec s = small_spec();
    s.poses_per_hemisphere = 0;
    EXPECT_THROW(generate_pool(s, Eigen::Vector3d::Zero()), ConfigError);
    s = small_spec();
    s.radii = {};
    EXPECT_THROW(generate_pool(s, Eigen::Vector3d::Zero()), ConfigError);
    s = small_spec();
    s.radii = {2.0, -1.0};
    EXPECT_THROW(generate_pool(s, Eigen::Vector3d::Zero()), ConfigError);
}

TEST(PosePool, DefaultRadiiFollowSceneExtent) {
    Aabb box;
    box.lo = Eigen::Vector3d(-2, -1, -1);
    box.hi = Eigen::Vector3d(2, 1, 1);
    const auto r = PoolSpec::default_radii(box);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_DOUBLE_EQ(r[0], 5.0);
    EXPECT_DOUBLE_EQ(r[1], 6.25);
}

TEST(TestViews, CountAndReproducibility) {
    PoolSpec s = small_spec();
    s.test_view_count = 0;
    EXPECT_TRUE(generate_test_views(s, Eigen::Vector3d::Zero()).empty());
    s.test_view_count = 103;
    s.seed = 9;
    const auto a = generate_test_views(s, Eigen::Vector3d::Zero());
    const auto b = generate_test_views(s, Eigen::Vector3d::Zero());
    ASSERT_EQ(a.size(), 103u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].eye, b[i].eye);
        EXPECT_NEAR(a[i].eye.norm(), s.radii.front(), 1e-12);
        EXPECT_GE(a[i].eye.z(), 0.0);
    }
    s.seed = 10;
    EXPECT_NE(generate_test_views(s, Eigen::Vector3d::Zero())[0].eye, a[0].eye);
}

TEST(TestViews, AreaUniformOnHemisphere) {
    PoolSpec s = small_spec();
    s.radii = {1.0};
    s.test_view_count = 100000;
    s.seed = 4;
    const auto v = generate_test_views(s, Eigen::Vector3d::Zero());
    double mean_z = 0.0;
    double mean_x = 0.0;
    for (const auto &p : v) {
        mean_z += p.eye.z();
        mean_x += p.eye.x();
    }
    mean_z /= static_cast<double>(v.size());
    mean_x /= static_cast<double>(v.size());
    EXPECT_NEAR(mean_z, 0.5, 0.01);
    EXPECT_NEAR(mean_x, 0.0, 0.01);
}

TEST(InitialViews, EdgeCounts) {
    const auto pool = generate_pool(small_spec(), Eigen::Vector3d::Zero());
    EXPECT_TRUE(pick_initial_views(pool, 0, Eigen::Vector3d::Zero()).empty());
    const auto all = pick_initial_views(pool, pool.size(), Eigen::Vector3d::Zero());
    ASSERT_EQ(all.size(), pool.size());
    EXPECT_EQ(std::set<std::size_t>(all.begin(), all.end()).size(), pool.size());
    EXPECT_THROW(pick_initial_views(pool, pool.size() + 1, Eigen::Vector3d::Zero()), ConfigError);
}

TEST(InitialViews, MaxSeparatedPairIsTheWidestInnerPair) {
    const auto pool = generate_pool(small_spec(), Eigen::Vector3d::Zero());
    const auto pick = pick_initial_views(pool, 2, Eigen::Vector3d::Zero());
    ASSERT_EQ(pick.size(), 2u);
    EXPECT_LT(pick[0], 224u);
    EXPECT_LT(pick[1], 224u);
    const double d = angular_distance(pool[pick[0]], pool[pick[1]], Eigen::Vector3d::Zero());
    for (std::size_t i = 0; i < 224; ++i) {
        for (std::size_t j = i + 1; j < 224; ++j) {
            EXPECT_LE(angular_distance(pool[i], pool[j], Eigen::Vector3d::Zero()), d);
        }
    }
    // Equatorial poses are almost opposite.
    EXPECT_GT(d, 0.95 * std::numbers::pi);
}

TEST(InitialViews, FarthestPointExtensionIsDistinct) {
    const auto pool = generate_pool(small_spec(), Eigen::Vector3d::Zero());
    const auto pick = pick_initial_views(pool, 6, Eigen::Vector3d::Zero());
    ASSERT_EQ(pick.size(), 6u);
    EXPECT_EQ(std::set<std::size_t>(pick.begin(), pick.end()).size(), 6u);
    const auto two = pick_initial_views(pool, 2, Eigen::Vector3d::Zero());
    EXPECT_EQ(pick[0], two[0]);
    EXPECT_EQ(pick[1], two[1]);
    // The third view is roughly orthogonal to the first pair.
    EXPECT_GT(angular_distance(pool[pick[2]], pool[pick[0]], Eigen::Vector3d::Zero()), 1.3);
}

TEST(InitialViews, OtherStrategies) {
    const auto pool = generate_pool(small_spec(), Eigen::Vector3d::Zero());
    const auto first = pick_initial_views(pool, 3, Eigen::Vector3d::Zero(), InitialStrategy::FirstK);
    EXPECT_EQ(first, (std::vector<std::size_t>{0, 1, 2}));
    const auto r1 = pick_initial_views(pool, 5, Eigen::Vector3d::Zero(), InitialStrategy::Random, 3);
    const auto r2 = pick_initial_views(pool, 5, Eigen::Vector3d::Zero(), InitialStrategy::Random, 3);
    EXPECT_EQ(r1, r2);
    EXPECT_EQ(std::set<std::size_t>(r1.begin(), r1.end()).size(), 5u);
}

TEST(SourceCoords, KnownPoint) {
    PoolSpec s = small_spec();
    const auto p = ScannerPose::look_at(Eigen::Vector3d(1, 1, 1 + std::sqrt(2.0)), Eigen::Vector3d(0, 0, 1), s.beam,
                                        s.detector);
    const auto c = source_coords(p, Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR(c.radius, 2.0, 1e-12);
    EXPECT_NEAR(c.azimuth, std::numbers::pi / 4, 1e-12);
    EXPECT_NEAR(c.elevation, std::numbers::pi / 4, 1e-12);
}
