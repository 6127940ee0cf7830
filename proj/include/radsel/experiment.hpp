#pragma once

#include "radsel/optimizer.hpp"
#include "radsel/phantom.hpp"
#include "radsel/pose_pool.hpp"
#include "radsel/selection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace radsel {

enum class Policy { PerturbedEnsemble, Random, FPS, FisherDiag };

std::string to_string(Policy policy);
Policy policy_from_string(const std::string &name);

struct ExperimentConfig {
    std::filesystem::path dataset; ///< empty: simulate from `phantom` and `pool`
    PhantomSpec phantom;
    PoolSpec pool;
    TrainConfig train;
    EnsembleSpec ensemble;
    Policy policy = Policy::PerturbedEnsemble;
    InitialStrategy initial_views = InitialStrategy::MaxSeparated;
    int n_init = 2;
    int n_target = 24;
    std::vector<int> schedule; ///< empty: build_schedule(n_target - n_init, first_selection, densify_until)
    int first_selection = 200;
    std::size_t num_primitives = 2000;
    /// Initial activated density as a fraction of max(gt).
    double init_density_fraction = 0.05;
    double noise_sigma = 0.0;
    double drr_step = 0.0; ///< <= 0: half the smallest voxel spacing
    /// train.min_scale as a fraction of the smallest GT voxel spacing, used when train.min_scale is 0.
    double min_scale_voxels = 0.5;
    /// train.max_primitives as a multiple of num_primitives, used when train.max_primitives is 0.
    double max_primitive_growth = 1.25;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";

    /// Throws ConfigError on violated invariants; `pool_size` is the candidate count.
    void validate(std::size_t pool_size) const;
    std::vector<int> resolved_schedule() const;
};

/// Defaults plus the keys present in `j`; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json &j);
nlohmann::json config_to_json(const ExperimentConfig &cfg);
/// JSON or TOML, chosen by extension (.toml) .
ExperimentConfig load_config(const std::filesystem::path &path);
nlohmann::json toml_file_to_json(const std::filesystem::path &path);

/// Geometrically growing gaps from start_iter to floor(0.95 * densify_stop).
std::vector<int> build_schedule(int n_selections, int start_iter, int densify_stop);

/// Detector pitch that fits the bounding sphere of `bounds` on the detector.
double auto_pitch(const PoolSpec &pool, const Aabb &bounds);

/// Simulates the dataset described by cfg (pool poses followed by test views).
ScanDataset build_dataset(const ExperimentConfig &cfg);

struct MetricsRow {
    int round = 0;
    int iteration = 0;
    std::size_t num_views = 0;
    double psnr3d = 0.0;
    double ssim3d = 0.0;
    double nvs_psnr = 0.0;
    double nvs_ssim = 0.0;
};

struct EvaluationResult {
    double psnr3d = 0.0;
    double ssim3d = 0.0;
    double nvs_psnr = 0.0;
    double nvs_ssim = 0.0;
};

/// Metrics of a field against the dataset GT volume and test views.
EvaluationResult evaluate(const GaussianField &field, const ScanDataset &dataset, double cutoff = kDefaultCutoff);

struct ExperimentSummary {
    std::vector<MetricsRow> rows;
    std::vector<std::size_t> acquired;
    std::vector<int> schedule;
    double wall_clock_seconds = 0.0;
};

/// Full progressive run. Writes metrics.csv, summary.json, round_{t}_scores.csv,
/// train_log.csv and final.bin(+.json) into cfg.output_dir. `dataset` may be
/// supplied to skip loading or simulation.
ExperimentSummary run_experiment(const ExperimentConfig &cfg, const ScanDataset *dataset = nullptr);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow &row);

} // namespace radsel
