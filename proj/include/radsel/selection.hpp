#pragma once

#include "radsel/gaussian_field.hpp"
#include "radsel/projector.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace radsel {

enum class DisagreementMetric { SSIM, L1, PSNR };

std::string to_string(DisagreementMetric metric);
DisagreementMetric metric_from_string(const std::string &name);

struct EnsembleSpec {
    int ensemble_size = 10;         ///< N
    double perturb_fraction = 0.10; ///< alpha
    double scale_amplitude = 0.5;   ///< beta
    std::uint64_t rng_seed = 0;
    DisagreementMetric metric = DisagreementMetric::SSIM;

    void validate() const;
};

/// Indices of the ceil(alpha * M) primitives with the smallest activated
/// density, ties by ascending index; returned sorted ascending.
std::vector<std::size_t> select_low_density_subset(const GaussianField &field, double alpha);

/// Base field plus a density-multiplier overlay. Members are never stored as
/// field copies.
struct PerturbedEnsemble {
    const GaussianField *base = nullptr;
    std::vector<std::size_t> subset;
    int size = 0;
    /// size x subset.size(), row-major; entry (i, k) scales primitive subset[k] in member i.
    std::vector<double> multipliers;

    double multiplier(int member, std::size_t k) const { return multipliers[member * subset.size() + k]; }
    /// Per-primitive density scales of one member (1 outside the subset).
    std::vector<double> density_scale(int member) const;
    /// Explicit copy of one member, for verification. Throws InputError if any multiplier is <= 0 (beta >= 1).
    GaussianField materialize(int member) const;
};

/// Multipliers 1 + eps with eps ~ U(-beta, beta) drawn from a counter-based
/// generator keyed by (rng_seed, round, member, primitive index).
PerturbedEnsemble perturb_ensemble(const GaussianField &field, const EnsembleSpec &spec, std::uint64_t round);

/// eps for one (seed, round, member, primitive) key.
double perturbation_draw(std::uint64_t seed, std::uint64_t round, std::uint64_t member, std::uint64_t primitive,
                         double beta);

/// Member renders for one pose: base render plus the overlay of the subset footprints.
std::vector<ProjectionImage> render_members(const PerturbedEnsemble &ensemble, const ScannerPose &pose,
                                            const ProjectionImage &base_render, double cutoff = kDefaultCutoff);

inline constexpr double kPsnrCapDb = 100.0;

/// s_i for one member. PSNR is capped at kPsnrCapDb.
double disagreement(const ProjectionImage &base, const ProjectionImage &member, DisagreementMetric metric,
                    double dynamic_range);

/// Unbiased sample variance. A standard deviation below 1e-10 of the metric's
/// natural scale is reported as exactly 0.
double score_variance(std::span<const double> scores, double scale = 1.0);

/// Variance of the member disagreement scores for one pose.
double uncertainty_score(const PerturbedEnsemble &ensemble, const ScannerPose &pose, DisagreementMetric metric,
                         double dynamic_range, double cutoff = kDefaultCutoff);

struct SelectionState {
    std::vector<std::size_t> acquired;
    std::vector<std::size_t> remaining; ///< ascending
    std::vector<std::pair<std::size_t, double>> scores; ///< last round, one entry per remaining candidate
    int round = 0;

    static SelectionState start(std::size_t pool_size, std::span<const std::size_t> initial);
    /// Moves `index` from remaining to acquired and advances the round.
    void acquire(std::size_t index);
};

/// Scores every remaining candidate with a fresh ensemble (keyed by
/// state.round) and returns the argmax, ties to the lowest index.
std::size_t select_next_view(const GaussianField &field, SelectionState &state, std::span<const ScannerPose> pool,
                             const EnsembleSpec &spec, double dynamic_range, double cutoff = kDefaultCutoff);

std::size_t baseline_random(SelectionState &state, std::uint64_t seed);

/// Remaining candidate maximizing the minimum angular distance (about
/// `center`) to the acquired poses.
std::size_t baseline_fps(SelectionState &state, std::span<const ScannerPose> pool, const Eigen::Vector3d &center);

inline constexpr double kFisherRegularizer = 1e-6;

/// Diagonal Fisher information of the rendered image w.r.t. all 11 M parameters.
std::vector<double> fisher_diagonal(const GaussianField &field, const ScannerPose &pose,
                                    double cutoff = kDefaultCutoff);

std::size_t baseline_fisher_diag(const GaussianField &field, SelectionState &state,
                                 std::span<const ScannerPose> pool, std::span<const ScannerPose> trained_views,
                                 double cutoff = kDefaultCutoff);

/// round_{t}_scores.csv: pose_index, azimuth, elevation, radius, score, selected_flag.
void write_round_scores(const std::filesystem::path &path, const SelectionState &state,
                        std::span<const ScannerPose> pool, const Eigen::Vector3d &center, std::size_t selected);

} // namespace radsel
