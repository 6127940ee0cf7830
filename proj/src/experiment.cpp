#include "radsel/experiment.hpp"

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/metrics.hpp"
#include "radsel/rng.hpp"
#include "radsel/ssim.hpp"

#include <toml.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

namespace radsel {

namespace {

using nlohmann::json;

void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    for (const auto &[key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return key == a; })) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
bool read(const json &j, const char *key, T &out, const std::string &where) {
    if (!j.contains(key)) {
        return false;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
    return true;
}

json toml_node_to_json(const toml::node &node) {
    if (const auto *t = node.as_table()) {
        json o = json::object();
        for (const auto &[k, v] : *t) {
            o[std::string(k.str())] = toml_node_to_json(v);
        }
        return o;
    }
    if (const auto *a = node.as_array()) {
        json arr = json::array();
        for (const auto &v : *a) {
            arr.push_back(toml_node_to_json(v));
        }
        return arr;
    }
    if (const auto *v = node.as_integer()) return v->get();
    if (const auto *v = node.as_floating_point()) return v->get();
    if (const auto *v = node.as_boolean()) return v->get();
    if (const auto *v = node.as_string()) return v->get();
    throw ConfigError("unsupported TOML value type");
}

json metric_json(double v) {
    if (std::isinf(v) || std::isnan(v)) {
        return std::isnan(v) ? json("na") : json(format_metric(v));
    }
    return v;
}

std::string metric_text(double v) { return std::isnan(v) ? "na" : format_metric(v); }

} // namespace

std::string to_string(Policy policy) {
    switch (policy) {
    case Policy::PerturbedEnsemble:
        return "perturbed_ensemble";
    case Policy::Random:
        return "random";
    case Policy::FPS:
        return "fps";
    case Policy::FisherDiag:
        return "fisher_diag";
    }
    return "unknown";
}

Policy policy_from_string(const std::string &name) {
    if (name == "perturbed_ensemble" || name == "pe") return Policy::PerturbedEnsemble;
    if (name == "random") return Policy::Random;
    if (name == "fps") return Policy::FPS;
    if (name == "fisher_diag" || name == "fisher") return Policy::FisherDiag;
    throw ConfigError("unknown policy '" + name + "'");
}

std::vector<int> build_schedule(int n_selections, int start_iter, int densify_stop) {
    if (n_selections < 1) {
        throw ConfigError("schedule: need at least one selection");
    }
    if (start_iter < 0 || start_iter >= densify_stop) {
        throw ConfigError("schedule: start iteration must lie in [0, densify_stop)");
    }
    const int last = static_cast<int>(std::floor(0.95 * densify_stop));
    if (n_selections == 1) {
        return {last};
    }
    if (start_iter >= last) {
        throw ConfigError("schedule: start iteration must precede 0.95 x densify_stop");
    }
    if (n_selections == 2) {
        return {start_iter, last};
    }
    const int n_gaps = n_selections - 1;
    const double span = last - start_iter;
    const double gap0 = std::min(std::max(0.5 * start_iter, 1.0), span / n_gaps);
    auto total = [&](double g) {
        double s = 0.0, term = gap0;
        for (int k = 0; k < n_gaps; ++k, term *= g) {
            s += term;
        }
        return s;
    };
    double lo = 1.0, hi = 2.0;
    while (total(hi) < span) {
        hi *= 2.0;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) < span ? lo : hi) = mid;
    }
    const double g = 0.5 * (lo + hi);
    std::vector<int> gaps(n_gaps);
    long sum = 0;
    for (int k = 0; k < n_gaps; ++k) {
        gaps[k] = static_cast<int>(std::lround(gap0 * std::pow(g, k)));
        sum += gaps[k];
    }
    long residual = static_cast<long>(span) - sum;
    for (int k = n_gaps - 1; residual > 0; k = (k == 0 ? n_gaps - 1 : k - 1), --residual) {
        ++gaps[k];
    }
    for (int k = 0; residual < 0; k = (k + 1) % n_gaps, ++residual) {
        --gaps[k];
    }
    std::vector<int> sched{start_iter};
    for (int gap : gaps) {
        if (gap < 1) {
            throw ConfigError("schedule: too many selections for the available iterations");
        }
        sched.push_back(sched.back() + gap);
    }
    return sched;
}

double auto_pitch(const PoolSpec &pool, const Aabb &bounds) {
    const double sphere = 0.5 * bounds.extent().norm();
    double footprint = 2.0 * sphere;
    if (pool.beam.kind == BeamKind::Cone) {
        const double d = *std::min_element(pool.radii.begin(), pool.radii.end());
        if (!(d > sphere)) {
            throw ConfigError("cone-beam sources must lie outside the scene bounding sphere");
        }
        // silhouette of the sphere seen from the closest source
        footprint = 2.0 * pool.beam.source_to_detector * sphere / std::sqrt(d * d - sphere * sphere);
    }
    return 1.02 * footprint / std::min(pool.detector.width, pool.detector.height);
}

std::vector<int> ExperimentConfig::resolved_schedule() const {
    if (!schedule.empty() || n_target == n_init) {
        return schedule;
    }
    return build_schedule(n_target - n_init, first_selection, train.densify_until);
}

void ExperimentConfig::validate(std::size_t pool_size) const {
    train.validate();
    if (policy == Policy::PerturbedEnsemble) {
        ensemble.validate();
        if (ensemble.ensemble_size < 2) {
            throw ConfigError("ensemble size must be >= 2 for a sample variance");
        }
    }
    if (n_init < 0 || n_init > n_target || static_cast<std::size_t>(n_target) > pool_size) {
        throw ConfigError("need 0 <= n_init <= n_target <= pool size");
    }
    if (n_init < 1) {
        throw ConfigError("n_init must be >= 1 (training needs a view)");
    }
    if (num_primitives < 1) {
        throw ConfigError("num_primitives must be >= 1");
    }
    if (min_scale_voxels < 0.0) {
        throw ConfigError("min_scale_voxels must be >= 0");
    }
    if (!(max_primitive_growth >= 1.0)) {
        throw ConfigError("max_primitive_growth must be >= 1");
    }
    if (!(init_density_fraction > 0.0)) {
        throw ConfigError("init_density_fraction must be > 0");
    }
    const std::vector<int> sched = resolved_schedule();
    if (static_cast<int>(sched.size()) != n_target - n_init) {
        throw ConfigError("schedule length must equal n_target - n_init");
    }
    for (std::size_t i = 0; i < sched.size(); ++i) {
        if (sched[i] < 1 || (i > 0 && sched[i] <= sched[i - 1])) {
            throw ConfigError("schedule must be strictly increasing and >= 1");
        }
        if (sched[i] >= train.densify_until) {
            throw ConfigError("every selection must precede the end of densification");
        }
        if (sched[i] >= train.iterations) {
            throw ConfigError("every selection must precede the final iteration");
        }
    }
}

ExperimentConfig config_from_json(const json &j) {
    ExperimentConfig c;
    check_keys(j,
               {"dataset", "phantom", "pool", "train", "ensemble", "policy", "initial_views", "n_init", "n_target",
                "schedule", "first_selection", "num_primitives", "init_density_fraction", "noise_sigma", "drr_step", "min_scale_voxels",
                "max_primitive_growth",
                "seed", "output_dir"},
               "config");
    std::string s;
    if (read(j, "dataset", s, "config")) c.dataset = s;
    if (j.contains("phantom")) c.phantom = phantom_spec_from_json(j.at("phantom"));
    if (read(j, "policy", s, "config")) c.policy = policy_from_string(s);
    if (read(j, "initial_views", s, "config")) {
        if (s == "max_separated") c.initial_views = InitialStrategy::MaxSeparated;
        else if (s == "first_k") c.initial_views = InitialStrategy::FirstK;
        else if (s == "random") c.initial_views = InitialStrategy::Random;
        else throw ConfigError("unknown initial_views strategy '" + s + "'");
    }
    read(j, "n_init", c.n_init, "config");
    read(j, "n_target", c.n_target, "config");
    read(j, "schedule", c.schedule, "config");
    read(j, "first_selection", c.first_selection, "config");
    read(j, "num_primitives", c.num_primitives, "config");
    read(j, "init_density_fraction", c.init_density_fraction, "config");
    read(j, "noise_sigma", c.noise_sigma, "config");
    read(j, "drr_step", c.drr_step, "config");
    read(j, "min_scale_voxels", c.min_scale_voxels, "config");
    read(j, "max_primitive_growth", c.max_primitive_growth, "config");
    read(j, "seed", c.seed, "config");
    if (read(j, "output_dir", s, "config")) c.output_dir = s;

    c.pool.radii = PoolSpec::default_radii(c.phantom.bounds);
    bool pitch_given = false;
    if (j.contains("pool")) {
        const json &p = j.at("pool");
        check_keys(p, {"poses_per_hemisphere", "radii", "detector", "beam", "test_view_count", "seed"}, "pool");
        read(p, "poses_per_hemisphere", c.pool.poses_per_hemisphere, "pool");
        read(p, "radii", c.pool.radii, "pool");
        read(p, "test_view_count", c.pool.test_view_count, "pool");
        read(p, "seed", c.pool.seed, "pool");
        if (p.contains("detector")) {
            const json &d = p.at("detector");
            check_keys(d, {"width", "height", "pitch"}, "pool.detector");
            read(d, "width", c.pool.detector.width, "pool.detector");
            read(d, "height", c.pool.detector.height, "pool.detector");
            pitch_given = read(d, "pitch", c.pool.detector.pitch, "pool.detector") && c.pool.detector.pitch > 0.0;
        }
        if (p.contains("beam")) {
            const json &b = p.at("beam");
            check_keys(b, {"kind", "source_to_detector"}, "pool.beam");
            std::string kind = "parallel";
            read(b, "kind", kind, "pool.beam");
            if (kind == "parallel") {
                c.pool.beam = Beam::parallel();
            } else if (kind == "cone") {
                double sdd = 0.0;
                read(b, "source_to_detector", sdd, "pool.beam");
                c.pool.beam = Beam::cone(sdd);
            } else {
                throw ConfigError("pool.beam: unknown kind '" + kind + "'");
            }
        }
    }
    if (!pitch_given) {
        c.pool.detector.pitch = auto_pitch(c.pool, c.phantom.bounds);
    }
    c.pool.validate();

    if (j.contains("train")) {
        const json &t = j.at("train");
        check_keys(t,
                   {"iterations", "lr", "position_lr_final_factor", "min_scale", "lambda_dssim", "lambda_tv", "tv_dims",
                    "ssim_range", "densify_interval", "densify_from", "densify_until", "densify_grad_threshold",
                    "split_extent_fraction", "prune_floor_factor", "max_primitives", "cutoff",
                    "checkpoint_interval"},
                   "train");
        TrainConfig &tc = c.train;
        read(t, "iterations", tc.iterations, "train");
        if (t.contains("lr")) {
            const json &l = t.at("lr");
            check_keys(l, {"density", "position", "scale", "rotation"}, "train.lr");
            read(l, "density", tc.lr.density, "train.lr");
            read(l, "position", tc.lr.position, "train.lr");
            read(l, "scale", tc.lr.scale, "train.lr");
            read(l, "rotation", tc.lr.rotation, "train.lr");
        }
        read(t, "position_lr_final_factor", tc.position_lr_final_factor, "train");
        read(t, "min_scale", tc.min_scale, "train");
        read(t, "lambda_dssim", tc.lambda_dssim, "train");
        read(t, "lambda_tv", tc.lambda_tv, "train");
        read(t, "tv_dims", tc.tv_dims, "train");
        read(t, "ssim_range", tc.ssim_range, "train");
        read(t, "densify_interval", tc.densify_interval, "train");
        read(t, "densify_from", tc.densify_from, "train");
        read(t, "densify_until", tc.densify_until, "train");
        read(t, "densify_grad_threshold", tc.densify_grad_threshold, "train");
        read(t, "split_extent_fraction", tc.split_extent_fraction, "train");
        read(t, "prune_floor_factor", tc.prune_floor_factor, "train");
        read(t, "max_primitives", tc.max_primitives, "train");
        read(t, "cutoff", tc.cutoff, "train");
        read(t, "checkpoint_interval", tc.checkpoint_interval, "train");
    }
    if (j.contains("ensemble")) {
        const json &e = j.at("ensemble");
        check_keys(e, {"size", "alpha", "beta", "metric"}, "ensemble");
        read(e, "size", c.ensemble.ensemble_size, "ensemble");
        read(e, "alpha", c.ensemble.perturb_fraction, "ensemble");
        read(e, "beta", c.ensemble.scale_amplitude, "ensemble");
        if (read(e, "metric", s, "ensemble")) c.ensemble.metric = metric_from_string(s);
    }
    c.train.validate();
    return c;
}

json config_to_json(const ExperimentConfig &c) {
    const TrainConfig &t = c.train;
    std::string initial = c.initial_views == InitialStrategy::MaxSeparated ? "max_separated"
                          : c.initial_views == InitialStrategy::FirstK   ? "first_k"
                                                                         : "random";
    json beam = {{"kind", c.pool.beam.kind == BeamKind::Parallel ? "parallel" : "cone"}};
    if (c.pool.beam.kind == BeamKind::Cone) {
        beam["source_to_detector"] = c.pool.beam.source_to_detector;
    }
    json j = {
        {"phantom", phantom_spec_to_json(c.phantom)},
        {"pool",
         {{"poses_per_hemisphere", c.pool.poses_per_hemisphere},
          {"radii", c.pool.radii},
          {"detector",
           {{"width", c.pool.detector.width}, {"height", c.pool.detector.height}, {"pitch", c.pool.detector.pitch}}},
          {"beam", beam},
          {"test_view_count", c.pool.test_view_count},
          {"seed", c.pool.seed}}},
        {"train",
         {{"iterations", t.iterations},
          {"lr", {{"density", t.lr.density}, {"position", t.lr.position}, {"scale", t.lr.scale}, {"rotation", t.lr.rotation}}},
          {"position_lr_final_factor", t.position_lr_final_factor},
          {"min_scale", t.min_scale},
          {"lambda_dssim", t.lambda_dssim},
          {"lambda_tv", t.lambda_tv},
          {"tv_dims", t.tv_dims},
          {"ssim_range", t.ssim_range},
          {"densify_interval", t.densify_interval},
          {"densify_from", t.densify_from},
          {"densify_until", t.densify_until},
          {"densify_grad_threshold", t.densify_grad_threshold},
          {"split_extent_fraction", t.split_extent_fraction},
          {"prune_floor_factor", t.prune_floor_factor},
          {"max_primitives", t.max_primitives},
          {"cutoff", t.cutoff},
          {"checkpoint_interval", t.checkpoint_interval}}},
        {"ensemble",
         {{"size", c.ensemble.ensemble_size},
          {"alpha", c.ensemble.perturb_fraction},
          {"beta", c.ensemble.scale_amplitude},
          {"metric", to_string(c.ensemble.metric)}}},
        {"policy", to_string(c.policy)},
        {"initial_views", initial},
        {"n_init", c.n_init},
        {"n_target", c.n_target},
        {"schedule", c.schedule},
        {"first_selection", c.first_selection},
        {"num_primitives", c.num_primitives},
        {"init_density_fraction", c.init_density_fraction},
        {"noise_sigma", c.noise_sigma},
        {"drr_step", c.drr_step},
        {"min_scale_voxels", c.min_scale_voxels},
        {"max_primitive_growth", c.max_primitive_growth},
        {"seed", c.seed},
        {"output_dir", c.output_dir.string()},
    };
    if (!c.dataset.empty()) {
        j["dataset"] = c.dataset.string();
    }
    return j;
}

json toml_file_to_json(const std::filesystem::path &path) {
    try {
        const toml::table table = toml::parse_file(path.string());
        return toml_node_to_json(table);
    } catch (const toml::parse_error &e) {
        std::ostringstream msg;
        msg << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("config file not found: " + path.string());
    }
    if (path.extension() == ".toml") {
        return config_from_json(toml_file_to_json(path));
    }
    try {
        return config_from_json(json::parse(io::read_text(path)));
    } catch (const json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

ScanDataset build_dataset(const ExperimentConfig &cfg) {
    const VoxelGrid gt = make_phantom(cfg.phantom);
    const Eigen::Vector3d center = cfg.phantom.bounds.center();
    std::vector<ScannerPose> poses = generate_pool(cfg.pool, center);
    const std::vector<ScannerPose> tests = generate_test_views(cfg.pool, center);
    poses.insert(poses.end(), tests.begin(), tests.end());
    const double step = cfg.drr_step > 0.0 ? cfg.drr_step : default_drr_step(gt);
    ScanDataset ds = simulate_scan(gt, poses, step, cfg.noise_sigma, cfg.phantom.seed);
    ds.test_view_count = tests.size();
    json pool = config_to_json(cfg).at("pool");
    ds.provenance = {{"phantom", phantom_spec_to_json(cfg.phantom)}, {"pool", pool}};
    return ds;
}

EvaluationResult evaluate(const GaussianField &field, const ScanDataset &dataset, double cutoff) {
    EvaluationResult r;
    const GaussianField q = quantized(field);
    const VoxelGrid recon = voxelize(q, dataset.gt.spec, cutoff);
    r.psnr3d = psnr_3d(recon, dataset.gt);
    r.ssim3d = ssim_3d_slices(recon, dataset.gt);
    const std::size_t first = dataset.training_pool_size();
    if (dataset.test_view_count == 0) {
        r.nvs_psnr = r.nvs_ssim = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    double peak = 0.0;
    for (std::size_t i = first; i < dataset.poses.size(); ++i) {
        peak = std::max(peak, dataset.projections[i].max_value());
    }
    RenderOptions opt;
    opt.cutoff = cutoff;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t i = first; i < dataset.poses.size(); ++i) {
        const ProjectionImage img = render(q, dataset.poses[i], opt);
        psnr_sum += psnr_2d(img, dataset.projections[i], peak);
        ssim_sum += ssim(img, dataset.projections[i], peak > 0.0 ? peak : 1.0);
    }
    r.nvs_psnr = psnr_sum / static_cast<double>(dataset.test_view_count);
    r.nvs_ssim = ssim_sum / static_cast<double>(dataset.test_view_count);
    return r;
}

std::string metrics_csv_header() { return "round,iteration,num_views,psnr3d_db,ssim3d,nvs_psnr_db,nvs_ssim\n"; }

std::string metrics_csv_row(const MetricsRow &r) {
    return std::to_string(r.round) + "," + std::to_string(r.iteration) + "," + std::to_string(r.num_views) + "," +
           metric_text(r.psnr3d) + "," + metric_text(r.ssim3d) + "," + metric_text(r.nvs_psnr) + "," +
           metric_text(r.nvs_ssim) + "\n";
}

ExperimentSummary run_experiment(const ExperimentConfig &cfg, const ScanDataset *dataset) {
    const auto t0 = std::chrono::steady_clock::now();
    ScanDataset owned;
    if (!dataset) {
        owned = cfg.dataset.empty() ? build_dataset(cfg) : load_dataset(cfg.dataset);
        dataset = &owned;
    }
    const ScanDataset &ds = *dataset;
    const std::size_t pool_size = ds.training_pool_size();
    cfg.validate(pool_size);
    const std::span<const ScannerPose> pool(ds.poses.data(), pool_size);
    const Aabb bounds = ds.gt.spec.extent_box();
    const Eigen::Vector3d center = bounds.center();
    const std::vector<int> schedule = cfg.resolved_schedule();
    std::filesystem::create_directories(cfg.output_dir);

    const std::vector<std::size_t> initial = pick_initial_views(pool, static_cast<std::size_t>(cfg.n_init), center,
                                                                cfg.initial_views, derive_seed(cfg.seed, "initial"));
    SelectionState state = SelectionState::start(pool_size, initial);

    GaussianField field = init_random_field(bounds, cfg.num_primitives,
                                            cfg.init_density_fraction * ds.gt.max_value(),
                                            derive_seed(cfg.seed, "init"));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "train");
    if (tc.min_scale <= 0.0) {
        tc.min_scale = cfg.min_scale_voxels * ds.gt.spec.spacing.minCoeff();
    }
    if (tc.max_primitives == 0) {
        tc.max_primitives =
            static_cast<std::size_t>(std::ceil(cfg.max_primitive_growth * static_cast<double>(cfg.num_primitives)));
    }
    Trainer trainer(field, tc, cfg.output_dir);
    for (std::size_t idx : initial) {
        trainer.add_view({ds.poses[idx], ds.projections[idx]});
    }
    EnsembleSpec ens = cfg.ensemble;
    ens.rng_seed = derive_seed(cfg.seed, "ensemble");
    const std::uint64_t policy_seed = derive_seed(cfg.seed, "policy");

    ExperimentSummary summary;
    summary.schedule = schedule;
    std::string csv = metrics_csv_header();
    int iteration = 0;
    for (std::size_t t = 0; t <= schedule.size(); ++t) {
        const int end = t < schedule.size() ? schedule[t] : tc.iterations;
        try {
            trainer.train(iteration, end);
        } catch (const DivergenceError &e) {
            throw DivergenceError(std::string(e.what()) + " (round " + std::to_string(t) + ")");
        }
        iteration = end;
        const EvaluationResult ev = evaluate(field, ds, tc.cutoff);
        MetricsRow row{static_cast<int>(t), iteration, state.acquired.size(), ev.psnr3d, ev.ssim3d,
                       ev.nvs_psnr, ev.nvs_ssim};
        summary.rows.push_back(row);
        csv += metrics_csv_row(row);
        io::write_text(cfg.output_dir / "metrics.csv", csv);
        if (t == schedule.size()) {
            break;
        }

        std::size_t pick = 0;
        switch (cfg.policy) {
        case Policy::PerturbedEnsemble: {
            double range = 0.0;
            for (std::size_t a : state.acquired) {
                range = std::max(range, ds.projections[a].max_value());
            }
            pick = select_next_view(field, state, pool, ens, range > 0.0 ? range : 1.0, tc.cutoff);
            break;
        }
        case Policy::Random:
            pick = baseline_random(state, policy_seed);
            break;
        case Policy::FPS:
            pick = baseline_fps(state, pool, center);
            break;
        case Policy::FisherDiag: {
            std::vector<ScannerPose> trained;
            for (std::size_t a : state.acquired) {
                trained.push_back(pool[a]);
            }
            pick = baseline_fisher_diag(field, state, pool, trained, tc.cutoff);
            break;
        }
        }
        write_round_scores(cfg.output_dir / ("round_" + std::to_string(state.round) + "_scores.csv"), state, pool,
                           center, pick);
        state.acquire(pick);
        trainer.add_view({ds.poses[pick], ds.projections[pick]});
    }

    save_checkpoint(field, cfg.output_dir / "final.bin");
    summary.acquired = state.acquired;
    summary.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const MetricsRow &last = summary.rows.back();
    json final_metrics = {{"psnr3d_db", metric_json(last.psnr3d)},
                          {"ssim3d", metric_json(last.ssim3d)},
                          {"nvs_psnr_db", metric_json(last.nvs_psnr)},
                          {"nvs_ssim", metric_json(last.nvs_ssim)},
                          {"num_primitives", field.size()}};
    const json out = {{"config", config_to_json(cfg)},
                      {"schedule", schedule},
                      {"acquired", summary.acquired},
                      {"final", final_metrics},
                      {"final_checkpoint", "final.bin"},
                      {"wall_clock_seconds", summary.wall_clock_seconds}};
    io::write_text(cfg.output_dir / "summary.json", out.dump(2) + "\n");
    return summary;
}

} // namespace radsel
