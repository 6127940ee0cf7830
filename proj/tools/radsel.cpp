// radsel command line: dataset generation, progressive runs, evaluation.

#include "radsel/binary_io.hpp"
#include "radsel/error.hpp"
#include "radsel/experiment.hpp"
#include "radsel/metrics.hpp"
#include "radsel/parallel.hpp"
#include "radsel/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

using namespace radsel;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string policy;
    std::string dataset;
};

ExperimentConfig resolve_config(const CommonOptions &o) {
    ExperimentConfig cfg = o.config.empty() ? config_from_json(json::object()) : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.policy.empty()) cfg.policy = policy_from_string(o.policy);
    if (!o.dataset.empty()) cfg.dataset = o.dataset;
    return cfg;
}

ScanDataset obtain_dataset(const ExperimentConfig &cfg) {
    return cfg.dataset.empty() ? build_dataset(cfg) : load_dataset(cfg.dataset);
}

void add_common(CLI::App *cmd, CommonOptions &o, bool with_policy) {
    cmd->add_option("--config", o.config, "experiment config (.json or .toml)");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--out", o.out, "output path");
    cmd->add_option("--dataset", o.dataset, "dataset directory produced by `scan`");
    if (with_policy) {
        cmd->add_option("--policy", o.policy, "perturbed_ensemble | random | fps | fisher_diag");
    }
}

void print_error(const char *kind, const std::string &message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"radsel: next-view planning for Gaussian-splat X-ray reconstruction"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);

    CommonOptions phantom_o, scan_o, pool_o, run_o, eval_o, render_o, score_o;
    std::string checkpoint, poses_path;
    double score_range = 0.0;

    auto *phantom_cmd = app.add_subcommand("phantom", "make a phantom volume and save it");
    add_common(phantom_cmd, phantom_o, false);
    auto *scan_cmd = app.add_subcommand("scan", "simulate the pool and test projections of a phantom");
    add_common(scan_cmd, scan_o, false);
    auto *pool_cmd = app.add_subcommand("pool", "write the candidate pose pool as JSON");
    add_common(pool_cmd, pool_o, false);
    auto *run_cmd = app.add_subcommand("run", "progressive training with view selection");
    add_common(run_cmd, run_o, true);
    auto *eval_cmd = app.add_subcommand("eval", "metrics of a checkpoint against a dataset");
    add_common(eval_cmd, eval_o, false);
    eval_cmd->add_option("--checkpoint", checkpoint, "field checkpoint (.bin)")->required();
    auto *render_cmd = app.add_subcommand("render", "render projections and PNGs from a checkpoint");
    add_common(render_cmd, render_o, false);
    render_cmd->add_option("--checkpoint", checkpoint, "field checkpoint (.bin)")->required();
    render_cmd->add_option("--poses", poses_path, "pose list JSON (default: the configured pool)");
    auto *score_cmd = app.add_subcommand("score", "score every pool candidate for a checkpoint");
    add_common(score_cmd, score_o, true);
    score_cmd->add_option("--checkpoint", checkpoint, "field checkpoint (.bin)")->required();
    score_cmd->add_option("--range", score_range, "SSIM dynamic range (default: max measured pixel)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        print_error("usage_error", e.what());
        return 2;
    }

    try {
        set_max_threads(threads);
        if (*phantom_cmd) {
            const ExperimentConfig cfg = resolve_config(phantom_o);
            const std::filesystem::path out = phantom_o.out.empty() ? "phantom" : phantom_o.out;
            std::filesystem::create_directories(out);
            save_grid(make_phantom(cfg.phantom), out / "gt_volume.bin", out / "gt_volume.json");
            io::write_text(out / "phantom.json", phantom_spec_to_json(cfg.phantom).dump(2) + "\n");
        } else if (*scan_cmd) {
            const ExperimentConfig cfg = resolve_config(scan_o);
            const std::filesystem::path out = scan_o.out.empty() ? "dataset" : scan_o.out;
            const ScanDataset ds = build_dataset(cfg);
            save_dataset(ds, out);
            std::printf("wrote %zu projections (%zu test views) to %s\n", ds.poses.size(), ds.test_view_count,
                        out.string().c_str());
        } else if (*pool_cmd) {
            const ExperimentConfig cfg = resolve_config(pool_o);
            const auto pool = generate_pool(cfg.pool, cfg.phantom.bounds.center());
            const std::string text = poses_to_json(pool).dump(2) + "\n";
            if (pool_o.out.empty()) {
                std::fputs(text.c_str(), stdout);
            } else {
                io::write_text(pool_o.out, text);
            }
        } else if (*run_cmd) {
            const ExperimentConfig cfg = resolve_config(run_o);
            const ExperimentSummary s = run_experiment(cfg);
            const MetricsRow &last = s.rows.back();
            std::printf("views=%zu psnr3d=%s ssim3d=%s time=%.1fs\n", last.num_views,
                        format_metric(last.psnr3d).c_str(), format_metric(last.ssim3d).c_str(),
                        s.wall_clock_seconds);
        } else if (*eval_cmd) {
            const ExperimentConfig cfg = resolve_config(eval_o);
            const ScanDataset ds = obtain_dataset(cfg);
            const GaussianField field = load_checkpoint(checkpoint);
            const EvaluationResult r = evaluate(field, ds, cfg.train.cutoff);
            auto text = [](double v) { return std::isnan(v) ? std::string("na") : format_metric(v); };
            const std::string csv = "psnr3d_db,ssim3d,nvs_psnr_db,nvs_ssim\n" + text(r.psnr3d) + "," +
                                    text(r.ssim3d) + "," + text(r.nvs_psnr) + "," + text(r.nvs_ssim) + "\n";
            if (eval_o.out.empty()) {
                std::fputs(csv.c_str(), stdout);
            } else {
                io::write_text(eval_o.out, csv);
            }
        } else if (*render_cmd) {
            const ExperimentConfig cfg = resolve_config(render_o);
            const GaussianField field = load_checkpoint(checkpoint);
            const std::vector<ScannerPose> poses =
                poses_path.empty() ? generate_pool(cfg.pool, cfg.phantom.bounds.center())
                                   : poses_from_json(json::parse(io::read_text(poses_path)));
            const std::filesystem::path out = render_o.out.empty() ? "renders" : render_o.out;
            std::vector<ProjectionImage> images;
            RenderOptions opt;
            opt.cutoff = cfg.train.cutoff;
            for (const auto &p : poses) {
                images.push_back(render(field, p, opt));
            }
            save_projection_set(out, poses, images);
            for (std::size_t i = 0; i < images.size(); ++i) {
                write_png16(out / ("proj_" + std::to_string(i) + ".png"), images[i]);
            }
        } else if (*score_cmd) {
            ExperimentConfig cfg = resolve_config(score_o);
            const ScanDataset ds = obtain_dataset(cfg);
            const std::span<const ScannerPose> pool(ds.poses.data(), ds.training_pool_size());
            const GaussianField field = load_checkpoint(checkpoint);
            const Eigen::Vector3d center = ds.gt.spec.extent_box().center();
            double range = score_range;
            if (!(range > 0.0)) {
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    range = std::max(range, ds.projections[i].max_value());
                }
            }
            SelectionState state = SelectionState::start(pool.size(), {});
            EnsembleSpec ens = cfg.ensemble;
            ens.rng_seed = derive_seed(cfg.seed, "ensemble");
            std::size_t pick = 0;
            switch (cfg.policy) {
            case Policy::PerturbedEnsemble:
                pick = select_next_view(field, state, pool, ens, range > 0.0 ? range : 1.0, cfg.train.cutoff);
                break;
            case Policy::FisherDiag:
                pick = baseline_fisher_diag(field, state, pool, {}, cfg.train.cutoff);
                break;
            default:
                throw ConfigError("score supports the perturbed_ensemble and fisher_diag policies");
            }
            const std::filesystem::path out = score_o.out.empty() ? "scores.csv" : score_o.out;
            write_round_scores(out, state, pool, center, pick);
            std::printf("selected pose %zu\n", pick);
        }
    } catch (const Error &e) {
        print_error(e.kind(), e.what());
        return 1;
    } catch (const std::exception &e) {
        print_error("error", e.what());
        return 1;
    }
    return 0;
}
