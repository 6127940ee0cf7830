#include "radsel/optimizer.hpp"

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/rng.hpp"
#include "radsel/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

namespace radsel {

namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

double resolve_range(double configured, double measured_max) {
    if (configured > 0.0) {
        return configured;
    }
    return measured_max > 0.0 ? measured_max : 1.0;
}

GridSpec tv_spec(const GaussianField &field, const TrainConfig &cfg) {
    return GridSpec::covering(field.bounds, cfg.tv_dims);
}

} // namespace

void TrainConfig::validate() const {
    if (iterations < 1) {
        throw ConfigError("train: iterations must be >= 1");
    }
    if (!(lr.density > 0 && lr.position > 0 && lr.scale > 0 && lr.rotation > 0)) {
        throw ConfigError("train: learning rates must be > 0");
    }
    if (!(position_lr_final_factor > 0.0)) {
        throw ConfigError("train: position_lr_final_factor must be > 0");
    }
    if (lambda_dssim < 0 || lambda_tv < 0) {
        throw ConfigError("train: loss weights must be >= 0");
    }
    if (tv_dims[0] < 1 || tv_dims[1] < 1 || tv_dims[2] < 1) {
        throw ConfigError("train: tv_dims must be >= 1");
    }
    if (densify_interval < 1) {
        throw ConfigError("train: densify_interval must be >= 1");
    }
    if (min_scale < 0.0) {
        throw ConfigError("train: min_scale must be >= 0");
    }
    if (!(cutoff > 0.0)) {
        throw ConfigError("train: cutoff must be > 0");
    }
    if (checkpoint_interval < 0) {
        throw ConfigError("train: checkpoint_interval must be >= 0");
    }
}

double total_variation(const VoxelGrid &grid, std::span<double> grad) {
    const auto &d = grid.spec.dims;
    const std::size_t pairs = static_cast<std::size_t>(d[0] - 1) * d[1] * d[2] +
                              static_cast<std::size_t>(d[0]) * (d[1] - 1) * d[2] +
                              static_cast<std::size_t>(d[0]) * d[1] * (d[2] - 1);
    if (!grad.empty()) {
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    if (pairs == 0) {
        return 0.0;
    }
    const double inv = 1.0 / static_cast<double>(pairs);
    const std::size_t stride[3] = {1, static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[0]) * d[1]};
    double sum = 0.0;
    for (int k = 0; k < d[2]; ++k) {
        for (int j = 0; j < d[1]; ++j) {
            for (int i = 0; i < d[0]; ++i) {
                const std::size_t idx = grid.spec.index(i, j, k);
                const int pos[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (pos[a] + 1 >= d[a]) {
                        continue;
                    }
                    const double diff = grid.values[idx + stride[a]] - grid.values[idx];
                    sum += std::abs(diff);
                    if (!grad.empty()) {
                        grad[idx + stride[a]] += sign(diff) * inv;
                        grad[idx] -= sign(diff) * inv;
                    }
                }
            }
        }
    }
    return sum * inv;
}

double effective_ssim_range(const TrainConfig &cfg, std::span<const TrainingView> views) {
    double m = 0.0;
    for (const auto &v : views) {
        m = std::max(m, v.measured.max_value());
    }
    return resolve_range(cfg.ssim_range, m);
}

LossBreakdown loss(const ProjectionImage &rendered, const ProjectionImage &measured, const GaussianField &field,
                   const TrainConfig &cfg) {
    if (rendered.width != measured.width || rendered.height != measured.height) {
        throw InputError("loss: rendered and measured images differ in size");
    }
    LossBreakdown l;
    l.lambda_dssim = cfg.lambda_dssim;
    l.lambda_tv = cfg.lambda_tv;
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.values.size(); ++i) {
        sum += std::abs(rendered.values[i] - measured.values[i]);
    }
    l.l1 = sum / static_cast<double>(rendered.values.size());
    const double range = resolve_range(cfg.ssim_range, measured.max_value());
    l.dssim = 0.5 * (1.0 - ssim(rendered, measured, range));
    l.tv = total_variation(voxelize(field, tv_spec(field, cfg), cfg.cutoff));
    l.total = l.l1 + l.lambda_dssim * l.dssim + l.lambda_tv * l.tv;
    return l;
}

GradientResult gradients(const GaussianField &field, std::span<const TrainingView> views, const TrainConfig &cfg) {
    if (views.empty()) {
        throw InputError("gradients: no training views");
    }
    GradientResult r;
    r.grads.assign(field.size(), PrimitiveGrad{});
    r.mean2d_grad.assign(field.size(), 0.0);
    r.visible.assign(field.size(), 0);
    r.loss.lambda_dssim = cfg.lambda_dssim;
    r.loss.lambda_tv = cfg.lambda_tv;
    const double range = effective_ssim_range(cfg, views);
    RenderOptions opt;
    opt.cutoff = cfg.cutoff;

    double tv = 0.0;
    {
        const GridSpec spec = tv_spec(field, cfg);
        const VoxelGrid grid = voxelize(field, spec, cfg.cutoff);
        std::vector<double> g_tv(grid.values.size());
        tv = total_variation(grid, g_tv);
        if (cfg.lambda_tv > 0.0) {
            const double w = cfg.lambda_tv * static_cast<double>(views.size());
            for (double &g : g_tv) {
                g *= w;
            }
            voxelize_backward(field, spec, g_tv, r.grads, cfg.cutoff);
        }
    }

    for (const TrainingView &view : views) {
        const ProjectionImage rendered = render(field, view.pose, opt);
        if (rendered.width != view.measured.width || rendered.height != view.measured.height) {
            throw InputError("gradients: measured image does not match the pose detector");
        }
        const std::size_t n = rendered.values.size();
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<double> g_pix(n);
        double l1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = rendered.values[i] - view.measured.values[i];
            l1 += std::abs(diff);
            g_pix[i] = sign(diff) * inv_n;
        }
        std::vector<double> g_ssim(n);
        const double s = ssim(rendered.values, view.measured.values, rendered.width, rendered.height, range, g_ssim);
        for (std::size_t i = 0; i < n; ++i) {
            g_pix[i] -= 0.5 * cfg.lambda_dssim * g_ssim[i];
        }
        render_backward(field, view.pose, g_pix, r.grads, opt, r.mean2d_grad, r.visible);
        r.loss.l1 += l1 * inv_n;
        r.loss.dssim += 0.5 * (1.0 - s);
        r.loss.tv += tv;
    }
    r.loss.total = r.loss.l1 + cfg.lambda_dssim * r.loss.dssim + cfg.lambda_tv * r.loss.tv;
    return r;
}

void AdamState::resize(std::size_t n) {
    m.resize(n, Eigen::Matrix<double, 11, 1>::Zero());
    v.resize(n, Eigen::Matrix<double, 11, 1>::Zero());
}

void adam_step(GaussianField &field, std::span<const PrimitiveGrad> grads, AdamState &state, const TrainConfig &cfg,
               double position_lr_scale) {
    if (grads.size() != field.size() || state.m.size() != field.size() || state.v.size() != field.size()) {
        throw InputError("adam_step: state does not match the field");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    Eigen::Matrix<double, 11, 1> lr;
    lr << cfg.lr.density, Eigen::Vector3d::Constant(cfg.lr.position * position_lr_scale),
        Eigen::Vector3d::Constant(cfg.lr.scale), Eigen::Vector4d::Constant(cfg.lr.rotation);
    for (std::size_t p = 0; p < field.size(); ++p) {
        const Eigen::Matrix<double, 11, 1> g = grads[p].flat();
        auto &m = state.m[p];
        auto &v = state.v[p];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
        const Eigen::Matrix<double, 11, 1> step =
            lr.cwiseProduct((m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + kAdamEpsilon).matrix()));
        GaussianPrimitive &prim = field.primitives[p];
        prim.raw_density -= step[0];
        prim.position -= step.segment<3>(1);
        prim.log_scale -= step.segment<3>(4);
        if (cfg.min_scale > 0.0) {
            prim.log_scale = prim.log_scale.cwiseMax(std::log(cfg.min_scale));
        }
        prim.rotation -= step.segment<4>(7);
        const double qn = prim.rotation.norm();
        prim.rotation = qn > 0.0 ? Eigen::Vector4d(prim.rotation / qn) : Eigen::Vector4d(1, 0, 0, 0);
    }
}

DensifyStats densify_and_prune(GaussianField &field, std::span<const double> grad_accum, std::span<const int> visible,
                               const TrainConfig &cfg, double prune_floor, std::mt19937_64 &rng, AdamState *state) {
    const std::size_t n = field.size();
    if (grad_accum.size() != n || visible.size() != n) {
        throw InputError("densify_and_prune: statistics do not match the field");
    }
    if (state && (state->m.size() != n || state->v.size() != n)) {
        throw InputError("densify_and_prune: optimizer state does not match the field");
    }
    using Moments = Eigen::Matrix<double, 11, 1>;
    const Moments zero = Moments::Zero();
    const double split_limit = cfg.split_extent_fraction * field.bounds.max_extent();
    constexpr double split_factor = 1.6;
    std::normal_distribution<double> normal(0.0, 1.0);

    DensifyStats stats;
    std::vector<GaussianPrimitive> grown;
    std::vector<Moments> gm, gv;
    grown.reserve(n);
    std::size_t count = n;
    auto push = [&](const GaussianPrimitive &p, const Moments &m, const Moments &v) {
        grown.push_back(p);
        gm.push_back(m);
        gv.push_back(v);
    };
    auto sample_child = [&](const GaussianPrimitive &parent) {
        GaussianPrimitive child = parent;
        const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
        child.position = parent.position + parent.rotation_matrix() * parent.scale().cwiseProduct(z);
        return child;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPrimitive &prim = field.primitives[i];
        const Moments &m = state ? state->m[i] : zero;
        const Moments &v = state ? state->v[i] : zero;
        const double mean_grad = visible[i] > 0 ? grad_accum[i] / visible[i] : 0.0;
        if (!(mean_grad > cfg.densify_grad_threshold) || (cfg.max_primitives > 0 && count >= cfg.max_primitives)) {
            push(prim, m, v);
            continue;
        }
        const double rho = prim.density();
        if (prim.scale().maxCoeff() > split_limit) {
            for (int c = 0; c < 2; ++c) {
                GaussianPrimitive child = sample_child(prim);
                child.log_scale = prim.log_scale.array() - std::log(split_factor);
                if (cfg.min_scale > 0.0) {
                    child.log_scale = child.log_scale.cwiseMax(std::log(cfg.min_scale));
                }
                // Two children carry the parent's mass: rho s1 s2 s3 is conserved.
                const double volume_ratio = std::exp((prim.log_scale - child.log_scale).sum());
                child.set_density(rho * volume_ratio / 2.0);
                push(child, zero, zero);
            }
            ++stats.split;
        } else {
            GaussianPrimitive parent = prim;
            parent.set_density(rho / 2.0);
            GaussianPrimitive child = sample_child(prim);
            child.set_density(rho / 2.0);
            push(parent, m, v);
            push(child, zero, zero);
            ++stats.cloned;
        }
        ++count;
    }

    std::vector<GaussianPrimitive> kept;
    std::vector<Moments> km, kv;
    for (std::size_t i = 0; i < grown.size(); ++i) {
        if (grown[i].density() >= prune_floor && field.bounds.contains(grown[i].position)) {
            kept.push_back(grown[i]);
            km.push_back(gm[i]);
            kv.push_back(gv[i]);
        }
    }
    if (kept.empty() && !grown.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < grown.size(); ++i) {
            if (grown[i].density() > grown[best].density()) {
                best = i;
            }
        }
        kept.push_back(grown[best]);
        km.push_back(gm[best]);
        kv.push_back(gv[best]);
    }
    stats.pruned = grown.size() - kept.size();
    field.primitives = std::move(kept);
    if (state) {
        state->m = std::move(km);
        state->v = std::move(kv);
    }
    return stats;
}

Trainer::Trainer(GaussianField &field, TrainConfig cfg, std::filesystem::path output_dir)
    : field_(field), cfg_(std::move(cfg)), output_dir_(std::move(output_dir)) {
    cfg_.validate();
    adam_.resize(field_.size());
    grad_accum_.assign(field_.size(), 0.0);
    visible_.assign(field_.size(), 0);
    if (!output_dir_.empty()) {
        std::filesystem::create_directories(output_dir_);
    }
}

void Trainer::add_view(TrainingView view) {
    view.pose.validate();
    if (view.measured.width != view.pose.detector.width || view.measured.height != view.pose.detector.height) {
        throw InputError("training view image does not match its detector");
    }
    max_measured_ = std::max(max_measured_, view.measured.max_value());
    views_.push_back(std::move(view));
}

void Trainer::append_log(int iteration, const LossBreakdown &l) {
    if (output_dir_.empty()) {
        return;
    }
    const auto path = output_dir_ / "train_log.csv";
    std::FILE *f = std::fopen(path.string().c_str(), log_started_ ? "a" : "w");
    if (!f) {
        throw FormatError("cannot write " + path.string());
    }
    if (!log_started_) {
        std::fputs("iteration,l1,dssim,tv,total,num_primitives\n", f);
        log_started_ = true;
    }
    std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%zu\n", iteration, l.l1, l.dssim, l.tv, l.total, field_.size());
    std::fclose(f);
}

void Trainer::train(int start, int end) {
    if (start >= end) {
        return;
    }
    if (views_.empty()) {
        throw StateError("train: no training views");
    }
    if (field_.empty()) {
        throw StateError("train: empty field");
    }
    TrainConfig cfg = cfg_;
    cfg.ssim_range = resolve_range(cfg_.ssim_range, max_measured_);
    const std::uint64_t view_seed = derive_seed(cfg_.seed, "views");
    const std::uint64_t densify_seed = derive_seed(cfg_.seed, "densify");
    const double prune_floor = cfg_.prune_floor_factor * max_measured_ / field_.bounds.max_extent();

    for (int it = start; it < end; ++it) {
        const std::size_t vi = uniform_index(hash_key({view_seed, static_cast<std::uint64_t>(it)}), views_.size());
        GradientResult g = gradients(field_, std::span<const TrainingView>(&views_[vi], 1), cfg);
        if (!std::isfinite(g.loss.total)) {
            throw DivergenceError("non-finite loss at iteration " + std::to_string(it));
        }
        last_loss_ = g.loss;
        if (it < cfg_.densify_until) {
            for (std::size_t p = 0; p < field_.size(); ++p) {
                grad_accum_[p] += g.mean2d_grad[p];
                visible_[p] += g.visible[p];
            }
        }
        const double frac = static_cast<double>(it) / static_cast<double>(cfg_.iterations);
        adam_step(field_, g.grads, adam_, cfg, std::pow(cfg_.position_lr_final_factor, std::min(frac, 1.0)));
        append_log(it, g.loss);

        const int done = it + 1;
        if (done % cfg_.densify_interval == 0 && done >= cfg_.densify_from && done <= cfg_.densify_until) {
            std::mt19937_64 rng(hash_key({densify_seed, static_cast<std::uint64_t>(done)}));
            densify_and_prune(field_, grad_accum_, visible_, cfg_, prune_floor, rng, &adam_);
            grad_accum_.assign(field_.size(), 0.0);
            visible_.assign(field_.size(), 0);
        }
        if (cfg_.checkpoint_interval > 0 && !output_dir_.empty() && done % cfg_.checkpoint_interval == 0) {
            save_checkpoint(field_, output_dir_ / ("ckpt_" + std::to_string(done) + ".bin"));
        }
    }
}

void train(GaussianField &field, std::span<const TrainingView> views, const TrainConfig &cfg, int start_iteration,
           int end_iteration) {
    Trainer trainer(field, cfg);
    for (const auto &v : views) {
        trainer.add_view(v);
    }
    trainer.train(start_iteration, end_iteration);
}

} // namespace radsel
