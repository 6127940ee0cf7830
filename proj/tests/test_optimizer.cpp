#include "gradient_check.hpp"
#include "radsel/error.hpp"
#include "radsel/optimizer.hpp"
#include "radsel/phantom.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

using namespace radsel;

namespace {

TrainConfig smooth_config() {
    TrainConfig cfg;
    cfg.cutoff = 40.0;
    cfg.tv_dims = {10, 10, 10};
    cfg.ssim_range = 1.5;
    return cfg;
}

std::vector<TrainingView> views_of(const GaussianField &target, int count, std::uint64_t seed, int px = 20) {
    std::mt19937_64 rng(seed);
    std::vector<TrainingView> views;
    for (int i = 0; i < count; ++i) {
        const ScannerPose pose = test::parallel_pose(test::random_direction(rng), px, px, 2.4 / px);
        views.push_back({pose, render(target, pose)});
    }
    return views;
}

double mass(const GaussianField &f) {
    double m = 0.0;
    for (const auto &g : f.primitives) {
        m += g.density() * std::pow(2.0 * std::numbers::pi, 1.5) * std::sqrt(covariance(g).determinant());
    }
    return m;
}

} // namespace

TEST(Loss, IdenticalImagesAndFlatVolume) {
    GaussianField f;
    GaussianPrimitive g;
    g.log_scale = Eigen::Vector3d::Constant(std::log(1e4)); // flat at TV-grid resolution
    f.primitives.push_back(g);
    TrainConfig cfg;
    cfg.tv_dims = {4, 4, 4};
    ProjectionImage img(8, 8);
    for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = 0.1 * static_cast<double>(i % 7);
    const LossBreakdown l = loss(img, img, f, cfg);
    EXPECT_EQ(l.l1, 0.0);
    EXPECT_NEAR(l.dssim, 0.0, 1e-15);
    EXPECT_NEAR(l.tv, 0.0, 1e-6);
    EXPECT_NEAR(l.total, l.l1 + cfg.lambda_dssim * l.dssim + cfg.lambda_tv * l.tv, 1e-9);
}

TEST(Loss, ConstantOffsetGivesExactL1) {
    GaussianField f = test::random_field(1, 2);
    ProjectionImage a(6, 5);
    ProjectionImage b(6, 5);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] = 0.25 * static_cast<double>(i % 4);
        b.values[i] = a.values[i] + 0.5;
    }
    const LossBreakdown l = loss(a, b, f, TrainConfig{});
    EXPECT_EQ(l.l1, 0.5);
    EXPECT_GE(l.dssim, 0.0);
    EXPECT_LE(l.dssim, 1.0);
}

TEST(Loss, MismatchedImagesAreRejected) {
    EXPECT_THROW(loss(ProjectionImage(4, 4), ProjectionImage(4, 5), test::random_field(1, 1), TrainConfig{}),
                 InputError);
}

TEST(TotalVariation, CheckerboardOnTwoCubed) {
    VoxelGrid g(GridSpec::covering(Aabb{}, {2, 2, 2}));
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
            for (int i = 0; i < 2; ++i) g.at(i, j, k) = (i + j + k) % 2;
    EXPECT_EQ(total_variation(g), 1.0);
}

TEST(TotalVariation, GradientMatchesFiniteDifferences) {
    VoxelGrid g(GridSpec::covering(Aabb{}, {3, 4, 2}));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double &v : g.values) v = u(rng);
    std::vector<double> grad(g.values.size());
    total_variation(g, grad);
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        VoxelGrid p = g, m = g;
        p.values[i] += 1e-7;
        m.values[i] -= 1e-7;
        EXPECT_NEAR(grad[i], (total_variation(p) - total_variation(m)) / 2e-7, 1e-6);
    }
}

TEST(Gradients, ZeroDensityFieldAtZeroMeasurementIsStationary) {
    GaussianField f = test::random_field(3, 4);
    for (auto &g : f.primitives) g.raw_density = -800.0; // softplus underflows to 0
    TrainConfig cfg;
    cfg.lambda_tv = 0.0;
    std::vector<TrainingView> views = views_of(f, 2, 5);
    for (auto &v : views) std::fill(v.measured.values.begin(), v.measured.values.end(), 0.0);
    const GradientResult r = gradients(f, views, cfg);
    for (const auto &g : r.grads) {
        EXPECT_EQ(g.flat().cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Gradients, SinglePrimitiveL1MatchesFiniteDifferences) {
    const GaussianField target = test::random_field(10, 3);
    const GaussianField f = test::random_field(11, 1, 0.15, 0.3);
    const auto views = views_of(target, 2, 12);
    const test::GradientCheck c = test::check_gradients(f, views, smooth_config(), test::LossTerm::L1, 1e-4);
    EXPECT_EQ(c.components, 11);
    EXPECT_EQ(c.failures, 0) << "worst rel " << c.worst_rel;
}

class TermGradients : public ::testing::TestWithParam<test::LossTerm> {};

TEST_P(TermGradients, SmallFieldMatchesFiniteDifferences) {
    const GaussianField target = test::random_field(20, 6);
    const GaussianField f = test::random_field(21, 3, 0.1, 0.25);
    const auto views = views_of(target, 2, 22);
    const test::GradientCheck c = test::check_gradients(f, views, smooth_config(), GetParam());
    EXPECT_EQ(c.components, 33);
    EXPECT_EQ(c.failures, 0) << "worst rel " << c.worst_rel;
}

INSTANTIATE_TEST_SUITE_P(Terms, TermGradients,
                         ::testing::Values(test::LossTerm::L1, test::LossTerm::DSSIM, test::LossTerm::TV),
                         [](const auto &info) { return std::string(test::term_name(info.param)); });

TEST(Gradients, JointScalingKeepsDensityGradientSigns) {
    const GaussianField target = test::random_field(30, 5);
    GaussianField f = test::random_field(31, 4);
    auto views = views_of(target, 3, 32);
    TrainConfig cfg;
    cfg.lambda_tv = 0.0;
    const GradientResult a = gradients(f, views, cfg);
    for (auto &g : f.primitives) g.set_density(3.0 * g.density());
    for (auto &v : views)
        for (double &x : v.measured.values) x *= 3.0;
    const GradientResult b = gradients(f, views, cfg);
    for (std::size_t p = 0; p < f.size(); ++p) {
        EXPECT_EQ(std::signbit(a.grads[p].raw_density), std::signbit(b.grads[p].raw_density));
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    GaussianField f = test::random_field(40, 5);
    const GaussianField before = f;
    AdamState s;
    s.resize(f.size());
    adam_step(f, std::vector<PrimitiveGrad>(f.size()), s, TrainConfig{});
    for (std::size_t p = 0; p < f.size(); ++p) {
        EXPECT_EQ(f.primitives[p].raw_density, before.primitives[p].raw_density);
        EXPECT_EQ(f.primitives[p].position, before.primitives[p].position);
        EXPECT_EQ(f.primitives[p].log_scale, before.primitives[p].log_scale);
        EXPECT_LT((f.primitives[p].rotation - before.primitives[p].rotation).norm(), 1e-15);
    }
}

TEST(Adam, FirstStepMovesEachParameterByItsLearningRate) {
    GaussianField f = test::random_field(41, 2);
    const GaussianField before = f;
    std::vector<PrimitiveGrad> g(2);
    g[0].raw_density = 3.0;
    g[0].position = {-0.2, 5.0, 1e-3};
    g[1].log_scale = {0.7, -0.7, 2.0};
    AdamState s;
    s.resize(2);
    TrainConfig cfg;
    adam_step(f, g, s, cfg);
    // bias-corrected m/sqrt(v) is sign(g) on the first step
    EXPECT_NEAR(f.primitives[0].raw_density, before.primitives[0].raw_density - cfg.lr.density, 1e-12);
    EXPECT_NEAR(f.primitives[0].position.x(), before.primitives[0].position.x() + cfg.lr.position, 1e-12);
    EXPECT_NEAR(f.primitives[0].position.y(), before.primitives[0].position.y() - cfg.lr.position, 1e-12);
    EXPECT_NEAR(f.primitives[1].log_scale.y(), before.primitives[1].log_scale.y() + cfg.lr.scale, 1e-12);
    EXPECT_EQ(s.step, 1);
}

TEST(Adam, QuaternionsStayNormalizedAndStepIsDeterministic) {
    GaussianField a = test::random_field(42, 10);
    GaussianField b = a;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<PrimitiveGrad> g(a.size());
    for (auto &x : g) x.rotation = {n(rng), n(rng), n(rng), n(rng)};
    AdamState sa, sb;
    sa.resize(a.size());
    sb.resize(b.size());
    TrainConfig cfg;
    cfg.lr.rotation = 0.3;
    for (int i = 0; i < 5; ++i) {
        adam_step(a, g, sa, cfg);
        adam_step(b, g, sb, cfg);
    }
    for (std::size_t p = 0; p < a.size(); ++p) {
        EXPECT_NEAR(a.primitives[p].rotation.norm(), 1.0, 1e-12);
        EXPECT_EQ(a.primitives[p].rotation, b.primitives[p].rotation);
    }
}

TEST(Adam, MinScaleIsEnforced) {
    GaussianField f = test::random_field(43, 3, 0.01, 0.02);
    std::vector<PrimitiveGrad> g(3);
    for (auto &x : g) x.log_scale = Eigen::Vector3d::Constant(1.0);
    AdamState s;
    s.resize(3);
    TrainConfig cfg;
    cfg.lr.scale = 10.0;
    cfg.min_scale = 0.005;
    adam_step(f, g, s, cfg);
    for (const auto &p : f.primitives) {
        EXPECT_NEAR(p.scale().minCoeff(), 0.005, 1e-12);
    }
}

TEST(Densify, QuietFieldIsUnchanged) {
    GaussianField f = test::random_field(50, 20);
    const GaussianField before = f;
    std::vector<double> acc(20, 1e-6);
    std::vector<int> vis(20, 1);
    std::mt19937_64 rng(1);
    const DensifyStats s = densify_and_prune(f, acc, vis, TrainConfig{}, 1e-3, rng);
    EXPECT_EQ(s.cloned + s.split + s.pruned, 0u);
    ASSERT_EQ(f.size(), before.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_EQ(f.primitives[i].position, before.primitives[i].position);
    }
}

TEST(Densify, PrunesExactlyTheFaintPrimitive) {
    GaussianField f = test::random_field(51, 10);
    f.primitives[4].set_density(1e-6);
    const GaussianPrimitive survivor = f.primitives[5];
    std::vector<double> acc(10, 0.0);
    std::vector<int> vis(10, 0);
    std::mt19937_64 rng(1);
    AdamState s;
    s.resize(10);
    s.m[5].setConstant(0.25);
    const DensifyStats st = densify_and_prune(f, acc, vis, TrainConfig{}, 1e-3, rng, &s);
    EXPECT_EQ(st.pruned, 1u);
    ASSERT_EQ(f.size(), 9u);
    EXPECT_EQ(f.primitives[4].position, survivor.position);
    EXPECT_EQ(s.m[4][0], 0.25);
    EXPECT_EQ(s.m.size(), 9u);
}

TEST(Densify, OutOfBoundsCentersArePruned) {
    GaussianField f = test::random_field(52, 4);
    f.primitives[2].position.x() = 1.5;
    std::vector<double> acc(4, 0.0);
    std::vector<int> vis(4, 0);
    std::mt19937_64 rng(1);
    densify_and_prune(f, acc, vis, TrainConfig{}, 0.0, rng);
    EXPECT_EQ(f.size(), 3u);
}

TEST(Densify, NeverEmptiesTheField) {
    GaussianField f = test::random_field(53, 5);
    std::vector<double> acc(5, 0.0);
    std::vector<int> vis(5, 0);
    std::mt19937_64 rng(1);
    const double densest = std::max_element(f.primitives.begin(), f.primitives.end(), [](auto &a, auto &b) {
                               return a.density() < b.density();
                           })->density();
    densify_and_prune(f, acc, vis, TrainConfig{}, 100.0, rng);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f.primitives[0].density(), densest);
}

TEST(Densify, SplitShrinksByOnePointSixAndKeepsMass) {
    GaussianField f;
    f.bounds.lo = Eigen::Vector3d::Constant(-10.0);
    f.bounds.hi = Eigen::Vector3d::Constant(10.0);
    GaussianPrimitive g;
    g.log_scale = Eigen::Vector3d::Constant(std::log(1.6));
    g.set_density(0.5);
    f.primitives.push_back(g);
    const GridSpec spec = GridSpec::covering(f.bounds, {64, 64, 64});
    const double voxel = spec.spacing.prod();
    const VoxelGrid before = voxelize(f, spec);
    std::vector<double> acc{1.0};
    std::vector<int> vis{1};
    std::mt19937_64 rng(3);
    const DensifyStats s = densify_and_prune(f, acc, vis, TrainConfig{}, 0.0, rng);
    EXPECT_EQ(s.split, 1u);
    ASSERT_EQ(f.size(), 2u);
    for (const auto &c : f.primitives) {
        EXPECT_NEAR(c.log_scale.cwiseAbs().maxCoeff(), 0.0, 1e-12);
    }
    const VoxelGrid after = voxelize(f, spec);
    const double m0 = std::accumulate(before.values.begin(), before.values.end(), 0.0) * voxel;
    const double m1 = std::accumulate(after.values.begin(), after.values.end(), 0.0) * voxel;
    EXPECT_NEAR(m1, m0, 0.1 * m0);
}

TEST(Densify, CloneHalvesDensityAndRespectsCap) {
    GaussianField f = test::random_field(54, 6, 0.005, 0.01);
    const double m0 = mass(f);
    std::vector<double> acc(6, 1.0);
    std::vector<int> vis(6, 1);
    std::mt19937_64 rng(2);
    TrainConfig cfg;
    cfg.max_primitives = 9;
    const DensifyStats s = densify_and_prune(f, acc, vis, cfg, 0.0, rng);
    EXPECT_EQ(s.cloned, 3u);
    EXPECT_EQ(f.size(), 9u);
    EXPECT_NEAR(mass(f), m0, 1e-9 * m0);
}

TEST(Densify, PruningChangesL1ByAtMostTheRemovedProjection) {
    const GaussianField target = test::random_field(60, 8);
    GaussianField f = test::random_field(61, 12);
    for (int i : {1, 5, 9}) f.primitives[i].set_density(2e-4);
    const auto views = views_of(target, 3, 62);
    TrainConfig cfg;
    GaussianField pruned = f;
    std::vector<double> acc(12, 0.0);
    std::vector<int> vis(12, 0);
    std::mt19937_64 rng(1);
    densify_and_prune(pruned, acc, vis, cfg, 1e-3, rng);
    ASSERT_EQ(pruned.size(), 9u);
    for (const auto &v : views) {
        const ProjectionImage a = render(f, v.pose);
        const ProjectionImage b = render(pruned, v.pose);
        double removed = 0.0;
        for (std::size_t i = 0; i < a.values.size(); ++i) removed += std::abs(a.values[i] - b.values[i]);
        removed /= static_cast<double>(a.values.size());
        const LossBreakdown la = loss(a, v.measured, f, cfg);
        const LossBreakdown lb = loss(b, v.measured, pruned, cfg);
        EXPECT_LE(lb.l1 - la.l1, removed + 1e-15);
        EXPECT_LT(std::abs(lb.total - la.total), 1e-3);
    }
}

TEST(Train, ZeroIterationsLeaveFieldUnchanged) {
    GaussianField f = test::random_field(70, 5);
    const GaussianField before = f;
    const auto views = views_of(test::random_field(71, 3), 2, 72);
    train(f, views, TrainConfig{}, 0, 0);
    EXPECT_EQ(f.primitives[3].position, before.primitives[3].position);
}

TEST(Train, FitsSingleGaussianPhantom) {
    PhantomSpec ps;
    ps.kind = PhantomKind::SingleGaussian;
    const GaussianPrimitive truth = single_gaussian_primitive(ps);
    GaussianField target;
    target.primitives.push_back(truth);
    const auto views = views_of(target, 8, 80, 24);
    GaussianField f = init_random_field(target.bounds, 60, 0.05, 81);
    TrainConfig cfg;
    cfg.tv_dims = {16, 16, 16};
    cfg.lr.density = 0.05;
    cfg.lr.position = 5e-3;
    const auto l1_of = [&](const GaussianField &g) {
        double s = 0.0;
        for (const auto &v : views) s += loss(render(g, v.pose), v.measured, g, cfg).l1;
        return s;
    };
    const double initial = l1_of(f);
    train(f, views, cfg, 0, 200);
    EXPECT_LT(l1_of(f), 0.2 * initial);
}

TEST(Train, DeterministicCheckpointsAndLog) {
    const GaussianField target = test::random_field(90, 6);
    const auto views = views_of(target, 4, 91);
    TrainConfig cfg;
    cfg.tv_dims = {8, 8, 8};
    cfg.iterations = 60;
    cfg.densify_from = 20;
    cfg.densify_interval = 20;
    cfg.densify_until = 50;
    cfg.densify_grad_threshold = 1e-5;
    cfg.checkpoint_interval = 30;
    cfg.seed = 7;
    std::vector<std::string> bytes;
    for (int run = 0; run < 2; ++run) {
        const auto dir = test::scratch_dir("train_det_" + std::to_string(run));
        GaussianField f = test::random_field(92, 20);
        Trainer t(f, cfg, dir);
        for (const auto &v : views) t.add_view(v);
        t.train(0, 25);
        t.train(25, 60);
        std::ifstream in(dir / "ckpt_60.bin", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        bytes.push_back(ss.str());
        EXPECT_TRUE(std::filesystem::exists(dir / "ckpt_30.bin"));
        std::ifstream log(dir / "train_log.csv");
        std::string header;
        std::getline(log, header);
        EXPECT_EQ(header, "iteration,l1,dssim,tv,total,num_primitives");
        int lines = 0;
        for (std::string line; std::getline(log, line);) ++lines;
        EXPECT_EQ(lines, 60);
    }
    EXPECT_FALSE(bytes[0].empty());
    EXPECT_EQ(bytes[0], bytes[1]);
}

TEST(Train, LossDecreasesOverTraining) {
    PhantomSpec ps;
    ps.dims = {32, 32, 32};
    const VoxelGrid gt = make_phantom(ps);
    std::mt19937_64 rng(3);
    std::vector<TrainingView> views;
    for (int i = 0; i < 6; ++i) {
        const ScannerPose pose = test::parallel_pose(test::random_direction(rng), 24, 24, 3.6 / 24);
        views.push_back({pose, drr_oracle(gt, pose, 0.5 * gt.spec.spacing.minCoeff())});
    }
    GaussianField f = init_random_field(ps.bounds, 150, 0.05 * gt.max_value(), 4);
    const auto dir = test::scratch_dir("train_trend");
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.tv_dims = {16, 16, 16};
    Trainer t(f, cfg, dir);
    for (const auto &v : views) t.add_view(v);
    t.train(0, 300);
    std::ifstream log(dir / "train_log.csv");
    std::string line;
    std::getline(log, line);
    std::vector<double> total;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c < 5; ++c) std::getline(ss, cell, ',');
        total.push_back(std::stod(cell));
    }
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    const std::size_t k = total.size() / 10;
    EXPECT_LT(median({total.end() - k, total.end()}), median({total.begin(), total.begin() + k}));
}

TEST(TrainConfig, RejectsInvalidValues) {
    TrainConfig c;
    c.iterations = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.lr.scale = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.densify_interval = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, DivergenceIsReported) {
    GaussianField f = test::random_field(95, 3);
    f.primitives[0].raw_density = std::numeric_limits<double>::quiet_NaN();
    const auto views = views_of(test::random_field(96, 2), 1, 97);
    EXPECT_THROW(train(f, views, TrainConfig{}, 0, 1), DivergenceError);
}
