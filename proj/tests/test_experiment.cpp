#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/experiment.hpp"
#include "radsel/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace radsel;

namespace {

nlohmann::json tiny_config_json() {
    return nlohmann::json::parse(R"({
      "phantom": {"kind": "nested_ellipsoids", "dims": [16, 16, 16]},
      "pool": {"poses_per_hemisphere": 8, "test_view_count": 3, "detector": {"width": 16, "height": 16}},
      "n_init": 2, "n_target": 4, "first_selection": 30, "num_primitives": 80,
      "train": {"iterations": 120, "densify_from": 20, "densify_until": 100, "densify_interval": 20,
                "tv_dims": [8, 8, 8]},
      "ensemble": {"size": 4}
    })");
}

std::string read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Schedule, SingleSelectionAtTheLastSlot) {
    EXPECT_EQ(build_schedule(1, 200, 2500), (std::vector<int>{2375}));
    EXPECT_EQ(build_schedule(1, 10, 101), (std::vector<int>{95}));
}

TEST(Schedule, GeometricGapsEndAtTheLastSlot) {
    for (int n : {2, 5, 10, 22}) {
        const auto s = build_schedule(n, 200, 2500);
        ASSERT_EQ(static_cast<int>(s.size()), n);
        EXPECT_EQ(s.front(), 200);
        EXPECT_EQ(s.back(), 2375);
        for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
        if (n > 3) {
            // Gaps grow: later rounds leave more time to adapt.
            EXPECT_GE(s[n - 1] - s[n - 2], s[1] - s[0]);
        }
    }
}

TEST(Schedule, InvalidRequests) {
    EXPECT_THROW(build_schedule(0, 10, 100), ConfigError);
    EXPECT_THROW(build_schedule(3, 100, 100), ConfigError);
    EXPECT_THROW(build_schedule(3, 96, 100), ConfigError);
    EXPECT_THROW(build_schedule(50, 90, 100), ConfigError);
}

TEST(Config, DefaultsAndRoundTrip) {
    const ExperimentConfig d = config_from_json(nlohmann::json::object());
    EXPECT_EQ(d.policy, Policy::PerturbedEnsemble);
    EXPECT_EQ(d.pool.pool_size(), 448u);
    EXPECT_EQ(d.ensemble.ensemble_size, 10);
    EXPECT_DOUBLE_EQ(d.ensemble.perturb_fraction, 0.10);
    EXPECT_DOUBLE_EQ(d.ensemble.scale_amplitude, 0.5);
    EXPECT_GT(d.pool.detector.pitch, 0.0);
    d.validate(d.pool.pool_size());

    ExperimentConfig c = config_from_json(tiny_config_json());
    c.seed = 17;
    c.policy = Policy::FPS;
    const ExperimentConfig r = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(r), config_to_json(c));
    EXPECT_EQ(r.policy, Policy::FPS);
    EXPECT_EQ(r.seed, 17u);
    EXPECT_EQ(r.train.tv_dims, (std::array<int, 3>{8, 8, 8}));
}

TEST(Config, UnknownKeysAreRejected) {
    for (const char *text : {R"({"n_int": 2})", R"({"train": {"iteration": 5}})", R"({"pool": {"detector": {"w": 1}}})",
                             R"({"ensemble": {"gamma": 1}})", R"({"phantom": {"shape": "x"}})"}) {
        EXPECT_THROW(config_from_json(nlohmann::json::parse(text)), ConfigError) << text;
    }
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"n_init": "two"})")), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"policy": "oracle"})")), ConfigError);
}

TEST(Config, TomlMatchesJson) {
    const auto dir = test::scratch_dir("config_toml");
    io::write_text(dir / "c.toml", "n_init = 3\nn_target = 6\npolicy = \"random\"\n[train]\niterations = 500\n"
                                   "tv_dims = [8, 8, 8]\n[pool.detector]\nwidth = 32\nheight = 32\n");
    io::write_text(dir / "c.json", R"({"n_init": 3, "n_target": 6, "policy": "random",
        "train": {"iterations": 500, "tv_dims": [8, 8, 8]}, "pool": {"detector": {"width": 32, "height": 32}}})");
    EXPECT_EQ(config_to_json(load_config(dir / "c.toml")), config_to_json(load_config(dir / "c.json")));
    io::write_text(dir / "bad.toml", "n_init = \n");
    EXPECT_THROW(load_config(dir / "bad.toml"), ConfigError);
}

TEST(Config, ValidationRejectsInconsistentRuns) {
    ExperimentConfig c = config_from_json(tiny_config_json());
    EXPECT_NO_THROW(c.validate(16));
    EXPECT_THROW(c.validate(3), ConfigError);
    ExperimentConfig bad = c;
    bad.n_init = 0;
    EXPECT_THROW(bad.validate(16), ConfigError);
    bad = c;
    bad.schedule = {50, 40};
    EXPECT_THROW(bad.validate(16), ConfigError);
    bad = c;
    bad.schedule = {50};
    EXPECT_THROW(bad.validate(16), ConfigError);
    bad = c;
    bad.schedule = {50, 100};
    EXPECT_THROW(bad.validate(16), ConfigError);
    bad = c;
    bad.ensemble.ensemble_size = 1;
    EXPECT_THROW(bad.validate(16), ConfigError);
    bad.policy = Policy::Random;
    EXPECT_NO_THROW(bad.validate(16));
}

TEST(AutoPitch, ParallelFitsTheBoundingSphere) {
    PoolSpec p;
    p.detector = {64, 32, 1.0};
    Aabb box;
    EXPECT_NEAR(auto_pitch(p, box), 1.02 * 2.0 * std::sqrt(3.0) / 32.0, 1e-12);
}

TEST(AutoPitch, ConeCoversTheSilhouetteAtEveryPose) {
    PoolSpec p;
    p.detector = {48, 48, 1.0};
    p.beam = Beam::cone(5.0);
    Aabb box;
    p.radii = PoolSpec::default_radii(box);
    p.detector.pitch = auto_pitch(p, box);
    p.poses_per_hemisphere = 20;
    const double R = std::sqrt(3.0);
    const double half_width = 0.5 * 48 * p.detector.pitch;
    for (const auto &pose : generate_pool(p, Eigen::Vector3d::Zero())) {
        // Tangent ray to the sphere lands inside the detector, with a little slack.
        const double d = pose.eye.norm();
        const double footprint = 5.0 * R / std::sqrt(d * d - R * R);
        EXPECT_LE(footprint, half_width);
        if (d < 0.5 * (p.radii[0] + p.radii[1])) {
            EXPECT_GE(footprint, 0.95 * half_width);
        }
    }
    p.radii = {1.0};
    EXPECT_THROW(auto_pitch(p, box), ConfigError);
}

TEST(BuildDataset, PoolThenTestViews) {
    const ExperimentConfig c = config_from_json(tiny_config_json());
    const ScanDataset ds = build_dataset(c);
    EXPECT_EQ(ds.poses.size(), 16u + 3u);
    EXPECT_EQ(ds.test_view_count, 3u);
    EXPECT_EQ(ds.training_pool_size(), 16u);
    const auto tests = generate_test_views(c.pool, c.phantom.bounds.center());
    EXPECT_EQ(ds.poses[16].eye, tests[0].eye);
}

TEST(Evaluate, GroundTruthFieldScoresHigh) {
    PhantomSpec s;
    s.kind = PhantomKind::SingleGaussian;
    s.dims = {16, 16, 16};
    ExperimentConfig c = config_from_json(tiny_config_json());
    c.phantom = s;
    const ScanDataset ds = build_dataset(c);
    GaussianField f;
    f.primitives.push_back(single_gaussian_primitive(s));
    const EvaluationResult r = evaluate(f, ds);
    EXPECT_GT(r.psnr3d, 60.0);
    EXPECT_GT(r.ssim3d, 0.999);
    EXPECT_GT(r.nvs_psnr, 35.0);
    GaussianField empty;
    EXPECT_LT(evaluate(empty, ds).psnr3d, r.psnr3d);
}

class TinyRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        cfg_ = new ExperimentConfig(config_from_json(tiny_config_json()));
        cfg_->output_dir = test::scratch_dir("tiny_run");
        summary_ = new ExperimentSummary(run_experiment(*cfg_));
    }
    static void TearDownTestSuite() {
        delete cfg_;
        delete summary_;
    }
    static ExperimentConfig *cfg_;
    static ExperimentSummary *summary_;
};
ExperimentConfig *TinyRun::cfg_ = nullptr;
ExperimentSummary *TinyRun::summary_ = nullptr;

TEST_F(TinyRun, AcquiresTheTargetViewCountWithoutRepeats) {
    ASSERT_EQ(summary_->acquired.size(), 4u);
    std::set<std::size_t> u(summary_->acquired.begin(), summary_->acquired.end());
    EXPECT_EQ(u.size(), 4u);
    EXPECT_EQ(summary_->schedule, cfg_->resolved_schedule());
    ASSERT_FALSE(summary_->rows.empty());
    EXPECT_EQ(summary_->rows.back().num_views, 4u);
    EXPECT_EQ(summary_->rows.back().iteration, cfg_->train.iterations);
}

TEST_F(TinyRun, WritesArtifacts) {
    const auto &dir = cfg_->output_dir;
    for (const char *f : {"metrics.csv", "summary.json", "train_log.csv", "final.bin", "round_0_scores.csv",
                          "round_1_scores.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const std::string metrics = read_file(dir / "metrics.csv");
    EXPECT_EQ(metrics.substr(0, metrics_csv_header().size()), metrics_csv_header());
    const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
    EXPECT_EQ(summary.at("acquired").get<std::vector<std::size_t>>(), summary_->acquired);
    EXPECT_EQ(summary.at("final_checkpoint"), "final.bin");
}

TEST_F(TinyRun, CheckpointReproducesReportedMetrics) {
    const ScanDataset ds = build_dataset(*cfg_);
    const GaussianField f = load_checkpoint(cfg_->output_dir / "final.bin");
    const EvaluationResult r = evaluate(f, ds, cfg_->train.cutoff);
    const auto summary = nlohmann::json::parse(read_file(cfg_->output_dir / "summary.json"));
    EXPECT_NEAR(r.psnr3d, summary.at("final").at("psnr3d_db").get<double>(), 1e-6);
    EXPECT_NEAR(r.psnr3d, summary_->rows.back().psnr3d, 1e-6);
}

TEST_F(TinyRun, RerunIsBitIdentical) {
    ExperimentConfig again = *cfg_;
    again.output_dir = test::scratch_dir("tiny_run_again");
    run_experiment(again);
    for (const char *f : {"metrics.csv", "final.bin", "round_0_scores.csv", "train_log.csv"}) {
        EXPECT_EQ(read_file(cfg_->output_dir / f), read_file(again.output_dir / f)) << f;
    }
}

#ifdef RADSEL_CLI_PATH
TEST(Cli, RunIsIdenticalAcrossThreadCounts) {
    const auto dir = test::scratch_dir("cli_threads");
    io::write_text(dir / "cfg.json", tiny_config_json().dump());
    for (int threads : {1, 3}) {
        const auto out = dir / ("t" + std::to_string(threads));
        const std::string cmd = std::string(RADSEL_CLI_PATH) + " --threads " + std::to_string(threads) +
                                " run --config " + (dir / "cfg.json").string() + " --seed 5 --out " + out.string() +
                                " > " + (dir / "log.txt").string() + " 2>&1";
        ASSERT_EQ(std::system(cmd.c_str()), 0) << read_file(dir / "log.txt");
    }
    for (const char *f : {"metrics.csv", "final.bin", "round_0_scores.csv", "round_1_scores.csv"}) {
        ASSERT_TRUE(std::filesystem::exists(dir / "t1" / f)) << f;
        EXPECT_EQ(read_file(dir / "t1" / f), read_file(dir / "t3" / f)) << f;
    }
}

TEST(Cli, ErrorsAreStructured) {
    const auto dir = test::scratch_dir("cli_errors");
    io::write_text(dir / "cfg.json", R"({"n_int": 2})");
    const std::string cmd = std::string(RADSEL_CLI_PATH) + " run --config " + (dir / "cfg.json").string() + " 2> " +
                            (dir / "err.txt").string();
    EXPECT_NE(std::system(cmd.c_str()), 0);
    const auto err = nlohmann::json::parse(read_file(dir / "err.txt"));
    EXPECT_EQ(err.at("error"), "config_error");
}
#endif
