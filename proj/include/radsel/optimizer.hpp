#pragma once

#include "radsel/gaussian_field.hpp"
#include "radsel/projector.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace radsel {

struct LearningRates {
    double density = 0.01;
    double position = 2e-4;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct TrainConfig {
    int iterations = 3000;
    LearningRates lr;
    /// Position learning rate decays exponentially to lr.position * this at `iterations`.
    double position_lr_final_factor = 1.0;
    /// Lower bound on every per-axis standard deviation (world units), enforced
    /// after each update; 0 disables it.
    double min_scale = 0.0;
    double lambda_dssim = 0.25;
    double lambda_tv = 0.05;
    std::array<int, 3> tv_dims{32, 32, 32};
    /// SSIM dynamic range for the D-SSIM term; <= 0 means max measured pixel over the training views.
    double ssim_range = 0.0;

    int densify_interval = 100;
    int densify_from = 500;
    int densify_until = 2500;
    double densify_grad_threshold = 2e-4;
    double split_extent_fraction = 0.01;
    double prune_floor_factor = 1e-4;
    std::size_t max_primitives = 0; ///< 0: no cap

    double cutoff = kDefaultCutoff;
    int checkpoint_interval = 0; ///< 0 disables periodic checkpoints
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossBreakdown {
    double l1 = 0.0;
    double dssim = 0.0;
    double tv = 0.0;
    double total = 0.0;
    double lambda_dssim = 0.0;
    double lambda_tv = 0.0;
};

struct TrainingView {
    ScannerPose pose;
    ProjectionImage measured;
};

/// Mean absolute difference over all axis-adjacent voxel pairs. If grad is
/// non-empty it receives d(tv)/d(value).
double total_variation(const VoxelGrid &grid, std::span<double> grad = {});

/// SSIM range actually used for a view set under cfg.
double effective_ssim_range(const TrainConfig &cfg, std::span<const TrainingView> views);

LossBreakdown loss(const ProjectionImage &rendered, const ProjectionImage &measured, const GaussianField &field,
                   const TrainConfig &cfg);

struct GradientResult {
    LossBreakdown loss; ///< summed over views
    std::vector<PrimitiveGrad> grads;
    std::vector<double> mean2d_grad; ///< summed NDC positional gradient norms
    std::vector<int> visible;
};

/// d(sum over views of loss)/d(theta). cfg.ssim_range <= 0 resolves to the
/// max measured pixel of `views`.
GradientResult gradients(const GaussianField &field, std::span<const TrainingView> views, const TrainConfig &cfg);

struct AdamState {
    std::vector<Eigen::Matrix<double, 11, 1>> m;
    std::vector<Eigen::Matrix<double, 11, 1>> v;
    long step = 0;

    void resize(std::size_t n);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-15;

void adam_step(GaussianField &field, std::span<const PrimitiveGrad> grads, AdamState &state, const TrainConfig &cfg,
               double position_lr_scale = 1.0);

struct DensifyStats {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Clones or splits primitives whose mean NDC positional gradient
/// (grad_accum / visible) exceeds the threshold, then prunes primitives with
/// density below `prune_floor` or centers outside the bounds. The densest
/// primitive survives if everything would be pruned. `state`, when given, is
/// kept aligned with the field; new primitives start with zero moments.
DensifyStats densify_and_prune(GaussianField &field, std::span<const double> grad_accum, std::span<const int> visible,
                               const TrainConfig &cfg, double prune_floor, std::mt19937_64 &rng,
                               AdamState *state = nullptr);

/// Resumable training loop. Holds the optimizer state and densification
/// statistics between calls so progressive acquisition can interleave with
/// training.
class Trainer {
public:
    Trainer(GaussianField &field, TrainConfig cfg, std::filesystem::path output_dir = {});

    void add_view(TrainingView view);
    const std::vector<TrainingView> &views() const { return views_; }

    /// Runs iterations [start, end). Throws DivergenceError on a non-finite loss.
    void train(int start, int end);

    const LossBreakdown &last_loss() const { return last_loss_; }
    const TrainConfig &config() const { return cfg_; }

private:
    void append_log(int iteration, const LossBreakdown &l);

    GaussianField &field_;
    TrainConfig cfg_;
    std::filesystem::path output_dir_;
    std::vector<TrainingView> views_;
    AdamState adam_;
    std::vector<double> grad_accum_;
    std::vector<int> visible_;
    LossBreakdown last_loss_;
    double max_measured_ = 0.0;
    bool log_started_ = false;
};

/// One-shot training with fresh optimizer state.
void train(GaussianField &field, std::span<const TrainingView> views, const TrainConfig &cfg, int start_iteration,
           int end_iteration);

} // namespace radsel
