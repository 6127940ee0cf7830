#include "radsel/selection.hpp"

#include "radsel/error.hpp"
#include "radsel/metrics.hpp"
#include "radsel/parallel.hpp"
#include "radsel/pose_pool.hpp"
#include "radsel/rng.hpp"
#include "radsel/ssim.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>

namespace radsel {

namespace {

constexpr double kScoreResolution = 1e-10;

std::size_t argmax_lowest(const std::vector<std::pair<std::size_t, double>> &scores) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i].second > scores[best].second ||
            (scores[i].second == scores[best].second && scores[i].first < scores[best].first)) {
            best = i;
        }
    }
    return scores[best].first;
}

void require_candidates(const SelectionState &state) {
    if (state.remaining.empty()) {
        throw StateError("no remaining candidate poses");
    }
}

} // namespace

std::string to_string(DisagreementMetric metric) {
    switch (metric) {
    case DisagreementMetric::SSIM:
        return "ssim";
    case DisagreementMetric::L1:
        return "l1";
    case DisagreementMetric::PSNR:
        return "psnr";
    }
    return "unknown";
}

DisagreementMetric metric_from_string(const std::string &name) {
    if (name == "ssim") return DisagreementMetric::SSIM;
    if (name == "l1") return DisagreementMetric::L1;
    if (name == "psnr") return DisagreementMetric::PSNR;
    throw ConfigError("unknown disagreement metric '" + name + "'");
}

void EnsembleSpec::validate() const {
    if (ensemble_size < 1) {
        throw ConfigError("ensemble: size must be >= 1");
    }
    if (!(perturb_fraction > 0.0 && perturb_fraction <= 1.0)) {
        throw ConfigError("ensemble: perturb_fraction must be in (0, 1]");
    }
    if (!(scale_amplitude > 0.0)) {
        throw ConfigError("ensemble: scale_amplitude must be > 0");
    }
}

std::vector<std::size_t> select_low_density_subset(const GaussianField &field, double alpha) {
    if (field.empty()) {
        throw InputError("low-density subset of an empty field");
    }
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw InputError("alpha must be in (0, 1]");
    }
    const std::size_t m = field.size();
    const auto count = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(m) - 1e-9)), 1, m);
    std::vector<double> rho(m);
    for (std::size_t i = 0; i < m; ++i) {
        rho[i] = field.primitives[i].density();
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rho[a] < rho[b]; });
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

double perturbation_draw(std::uint64_t seed, std::uint64_t round, std::uint64_t member, std::uint64_t primitive,
                         double beta) {
    return beta * (2.0 * unit_uniform(hash_key({seed, round, member, primitive})) - 1.0);
}

PerturbedEnsemble perturb_ensemble(const GaussianField &field, const EnsembleSpec &spec, std::uint64_t round) {
    spec.validate();
    PerturbedEnsemble e;
    e.base = &field;
    e.subset = select_low_density_subset(field, spec.perturb_fraction);
    e.size = spec.ensemble_size;
    e.multipliers.resize(static_cast<std::size_t>(e.size) * e.subset.size());
    for (int i = 0; i < e.size; ++i) {
        for (std::size_t k = 0; k < e.subset.size(); ++k) {
            e.multipliers[i * e.subset.size() + k] =
                1.0 + perturbation_draw(spec.rng_seed, round, static_cast<std::uint64_t>(i), e.subset[k],
                                        spec.scale_amplitude);
        }
    }
    return e;
}

std::vector<double> PerturbedEnsemble::density_scale(int member) const {
    std::vector<double> s(base->size(), 1.0);
    for (std::size_t k = 0; k < subset.size(); ++k) {
        s[subset[k]] = multiplier(member, k);
    }
    return s;
}

GaussianField PerturbedEnsemble::materialize(int member) const {
    GaussianField f = *base;
    for (std::size_t k = 0; k < subset.size(); ++k) {
        const double m = multiplier(member, k);
        if (!(m > 0.0)) {
            throw InputError("materialize: member " + std::to_string(member) +
                             " has a non-positive multiplier, which a softplus density cannot represent");
        }
        GaussianPrimitive &p = f.primitives[subset[k]];
        p.set_density(p.density() * m);
    }
    return f;
}

std::vector<ProjectionImage> render_members(const PerturbedEnsemble &ensemble, const ScannerPose &pose,
                                            const ProjectionImage &base_render, double cutoff) {
    // Pixel contributions of each perturbed primitive at unit multiplier.
    std::vector<std::vector<std::pair<std::size_t, double>>> contrib(ensemble.subset.size());
    for (std::size_t k = 0; k < ensemble.subset.size(); ++k) {
        const Footprint fp = project_gaussian(ensemble.base->primitives[ensemble.subset[k]], pose);
        visit_footprint(fp, pose, cutoff, [&](std::size_t idx, double, double, double e) {
            contrib[k].emplace_back(idx, fp.amplitude * e);
        });
    }
    std::vector<ProjectionImage> members(ensemble.size, base_render);
    for (int i = 0; i < ensemble.size; ++i) {
        for (std::size_t k = 0; k < contrib.size(); ++k) {
            const double delta = ensemble.multiplier(i, k) - 1.0;
            for (const auto &[idx, v] : contrib[k]) {
                members[i].values[idx] += delta * v;
            }
        }
    }
    return members;
}

double disagreement(const ProjectionImage &base, const ProjectionImage &member, DisagreementMetric metric,
                    double dynamic_range) {
    switch (metric) {
    case DisagreementMetric::SSIM:
        return ssim(base, member, dynamic_range);
    case DisagreementMetric::L1: {
        if (base.values.size() != member.values.size()) {
            throw InputError("l1: image dimensions do not match");
        }
        double s = 0.0;
        for (std::size_t i = 0; i < base.values.size(); ++i) {
            s += std::abs(base.values[i] - member.values[i]);
        }
        return s / static_cast<double>(base.values.size());
    }
    case DisagreementMetric::PSNR:
        return std::min(kPsnrCapDb, psnr_2d(member, base, dynamic_range));
    }
    return 0.0;
}

double score_variance(std::span<const double> scores, double scale) {
    if (scores.size() < 2) {
        throw ConfigError("sample variance needs at least 2 ensemble members");
    }
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : scores) {
        ss += (s - mean) * (s - mean);
    }
    const double var = ss / (n - 1.0);
    const double floor = kScoreResolution * scale;
    return var <= floor * floor ? 0.0 : var;
}

double uncertainty_score(const PerturbedEnsemble &ensemble, const ScannerPose &pose, DisagreementMetric metric,
                         double dynamic_range, double cutoff) {
    if (ensemble.size < 2) {
        throw ConfigError("uncertainty score needs an ensemble of at least 2 members");
    }
    RenderOptions opt;
    opt.cutoff = cutoff;
    const ProjectionImage base = render(*ensemble.base, pose, opt);
    const std::vector<ProjectionImage> members = render_members(ensemble, pose, base, cutoff);
    std::vector<double> s(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        s[i] = disagreement(base, members[i], metric, dynamic_range);
    }
    return score_variance(s, metric == DisagreementMetric::L1 ? dynamic_range : 1.0);
}

SelectionState SelectionState::start(std::size_t pool_size, std::span<const std::size_t> initial) {
    SelectionState s;
    std::vector<char> taken(pool_size, 0);
    for (std::size_t i : initial) {
        if (i >= pool_size || taken[i]) {
            throw ConfigError("initial views must be distinct pool indices");
        }
        taken[i] = 1;
        s.acquired.push_back(i);
    }
    for (std::size_t i = 0; i < pool_size; ++i) {
        if (!taken[i]) {
            s.remaining.push_back(i);
        }
    }
    return s;
}

void SelectionState::acquire(std::size_t index) {
    const auto it = std::find(remaining.begin(), remaining.end(), index);
    if (it == remaining.end()) {
        throw StateError("pose " + std::to_string(index) + " is not a remaining candidate");
    }
    remaining.erase(it);
    acquired.push_back(index);
    ++round;
}

std::size_t select_next_view(const GaussianField &field, SelectionState &state, std::span<const ScannerPose> pool,
                             const EnsembleSpec &spec, double dynamic_range, double cutoff) {
    require_candidates(state);
    const PerturbedEnsemble ensemble = perturb_ensemble(field, spec, static_cast<std::uint64_t>(state.round));
    std::vector<std::pair<std::size_t, double>> scores(state.remaining.size());
    parallel_for(scores.size(), [&](std::size_t c) {
        const std::size_t idx = state.remaining[c];
        scores[c] = {idx, uncertainty_score(ensemble, pool[idx], spec.metric, dynamic_range, cutoff)};
    });
    state.scores = std::move(scores);
    return argmax_lowest(state.scores);
}

std::size_t baseline_random(SelectionState &state, std::uint64_t seed) {
    require_candidates(state);
    const std::size_t pick =
        uniform_index(hash_key({seed, static_cast<std::uint64_t>(state.round)}), state.remaining.size());
    state.scores.clear();
    for (std::size_t c = 0; c < state.remaining.size(); ++c) {
        state.scores.emplace_back(state.remaining[c], c == pick ? 1.0 : 0.0);
    }
    return state.remaining[pick];
}

std::size_t baseline_fps(SelectionState &state, std::span<const ScannerPose> pool, const Eigen::Vector3d &center) {
    require_candidates(state);
    if (state.acquired.empty()) {
        throw StateError("farthest point sampling needs at least one acquired pose");
    }
    state.scores.clear();
    for (std::size_t idx : state.remaining) {
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t a : state.acquired) {
            dmin = std::min(dmin, angular_distance(pool[idx], pool[a], center));
        }
        state.scores.emplace_back(idx, dmin);
    }
    return argmax_lowest(state.scores);
}

std::vector<double> fisher_diagonal(const GaussianField &field, const ScannerPose &pose, double cutoff) {
    std::vector<double> diag(field.size() * 11, 0.0);
    parallel_for(field.size(), [&](std::size_t p) {
        const GaussianPrimitive &prim = field.primitives[p];
        const Footprint fp = project_gaussian(prim, pose);
        if (!fp.contributes) {
            return;
        }
        const Eigen::Matrix2d conic = fp.cov.inverse();
        Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
        visit_footprint(fp, pose, cutoff, [&](std::size_t, double dx, double dy, double e) {
            const Eigen::Vector2d kd = conic * Eigen::Vector2d(dx, dy);
            const double ae = fp.amplitude * e;
            Eigen::Matrix<double, 6, 1> f;
            f << e, ae * kd.x(), ae * kd.y(), -0.5 * ae * dx * dx, -ae * dx * dy, -0.5 * ae * dy * dy;
            info.selfadjointView<Eigen::Lower>().rankUpdate(f);
        });
        info = info.selfadjointView<Eigen::Lower>();
        const Eigen::Matrix<double, 6, 11> jac = footprint_jacobian(prim, pose);
        const Eigen::Matrix<double, 6, 11> fj = info * jac;
        for (int k = 0; k < 11; ++k) {
            diag[p * 11 + k] = jac.col(k).dot(fj.col(k));
        }
    });
    return diag;
}

std::size_t baseline_fisher_diag(const GaussianField &field, SelectionState &state,
                                 std::span<const ScannerPose> pool, std::span<const ScannerPose> trained_views,
                                 double cutoff) {
    require_candidates(state);
    std::vector<double> train(field.size() * 11, 0.0);
    for (const auto &v : trained_views) {
        const std::vector<double> d = fisher_diagonal(field, v, cutoff);
        for (std::size_t k = 0; k < d.size(); ++k) {
            train[k] += d[k];
        }
    }
    std::vector<std::pair<std::size_t, double>> scores(state.remaining.size());
    parallel_for(scores.size(), [&](std::size_t c) {
        const std::size_t idx = state.remaining[c];
        const std::vector<double> d = fisher_diagonal(field, pool[idx], cutoff);
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) {
            s += d[k] / (train[k] + kFisherRegularizer);
        }
        scores[c] = {idx, s};
    });
    state.scores = std::move(scores);
    return argmax_lowest(state.scores);
}

void write_round_scores(const std::filesystem::path &path, const SelectionState &state,
                        std::span<const ScannerPose> pool, const Eigen::Vector3d &center, std::size_t selected) {
    std::FILE *f = std::fopen(path.string().c_str(), "w");
    if (!f) {
        throw FormatError("cannot write " + path.string());
    }
    std::fputs("pose_index,azimuth,elevation,radius,score,selected_flag\n", f);
    constexpr double deg = 180.0 / std::numbers::pi;
    for (const auto &[idx, score] : state.scores) {
        const SphericalCoords s = source_coords(pool[idx], center);
        std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%s,%d\n", idx, s.azimuth * deg, s.elevation * deg, s.radius,
                     format_metric(score).c_str(), idx == selected ? 1 : 0);
    }
    std::fclose(f);
}

} // namespace radsel
