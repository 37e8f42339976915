#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vbgs/autograd.hpp"
#include "vbgs/bench.hpp"
#include "vbgs/degrade.hpp"
#include "vbgs/errors.hpp"
#include "vbgs/io.hpp"
#include "vbgs/metrics.hpp"
#include "vbgs/parallel.hpp"
#include "vbgs/render.hpp"
#include "vbgs/resample.hpp"
#include "vbgs/sde.hpp"

namespace vbgs::cli {

/// Exit codes: 0 success, 1 runtime or validation failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

inline std::vector<double> parse_scales(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || !(v > 0.0)) throw UsageError("--scales: bad value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("--scales: no values given");
    return out;
}

inline std::vector<StrategySpec> parse_strategies(const std::string& text) {
    std::vector<StrategySpec> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(parse_strategy(item));
        } catch (const ConfigError& e) {
            throw UsageError(std::string("--strategies: ") + e.what());
        }
    }
    if (out.empty()) throw UsageError("--strategies: no strategies given");
    return out;
}

inline Interpolation parse_interp(const std::string& s, const char* flag) {
    if (s == "bilinear") return Interpolation::Bilinear;
    if (s == "bicubic") return Interpolation::Bicubic;
    throw UsageError(std::string(flag) + ": expected bilinear or bicubic, got '" + s + "'");
}

}  // namespace detail

/// Runs the command line. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Gaussian-splatting image representation: fit, render at any scale, evaluate"};
    app.require_subcommand(1);
    bool deterministic_mode = false;
    app.add_flag("--deterministic", deterministic_mode, "Fixed-order gradient reduction");

    std::function<void()> action;

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a Gaussian set to a low-resolution image");
    std::string fit_input, fit_out, fit_log, fit_target, fit_loss = "l2", fit_interp = "bilinear";
    FitConfig fit_cfg;
    std::optional<std::size_t> fit_decay;
    double fit_lr = fit_cfg.lr.initial, fit_lr_decayed = fit_cfg.lr.decayed;
    fit_cmd->add_option("input", fit_input, "Source image (raw f32 payload with .hdr sidecar)")->required();
    fit_cmd->add_option("--steps", fit_cfg.steps, "Optimizer steps");
    fit_cmd->add_option("--k", fit_cfg.k, "Top-k Gaussians per pixel");
    fit_cmd->add_option("--loss", fit_loss, "l2 or l1");
    fit_cmd->add_option("--lr", fit_lr, "Initial learning rate");
    fit_cmd->add_option("--lr-decayed", fit_lr_decayed, "Learning rate after the decay step");
    fit_cmd->add_option("--decay-step", fit_decay, "Step at which the learning rate drops (default steps/5)");
    fit_cmd->add_option("--rebuild", fit_cfg.rebuild_period, "Selection refresh period in steps");
    fit_cmd->add_option("--seed", fit_cfg.seed, "Seed (recorded for reproducibility)");
    fit_cmd->add_option("--target", fit_target, "High-resolution target image");
    fit_cmd->add_option("--scale", fit_cfg.scale, "Scale of the target relative to the input");
    fit_cmd->add_option("--reference-interp", fit_interp, "bilinear or bicubic reference upsampling");
    fit_cmd->add_option("--out", fit_out, "Output Gaussian set file")->required();
    fit_cmd->add_option("--log", fit_log, "Loss trace CSV (default <out>.loss.csv)");
    fit_cmd->callback([&] {
        action = [&] {
            if (fit_loss != "l2" && fit_loss != "l1") throw UsageError("--loss: expected l2 or l1, got '" + fit_loss + "'");
            fit_cfg.loss = fit_loss == "l2" ? LossKind::L2 : LossKind::L1;
            fit_cfg.lr.initial = fit_lr;
            fit_cfg.lr.decayed = fit_lr_decayed;
            fit_cfg.lr.decay_step = fit_decay;
            fit_cfg.reference_mode = detail::parse_interp(fit_interp, "--reference-interp");
            const MultiBandImage source = read_image(fit_input);
            std::optional<MultiBandImage> target;
            if (!fit_target.empty()) target = read_image(fit_target);
            else if (fit_cfg.scale != 1.0) throw UsageError("--scale requires --target");
            const FitResult result = fit(source, fit_cfg, target ? &*target : nullptr);
            write_gaussian_file(fit_out, result.raw, source);
            auto log = detail::open_output(fit_log.empty() ? fit_out + ".loss.csv" : fit_log);
            log << "step,loss,psnr\n";
            for (const auto& row : result.trace)
                log << row.step << ',' << format_metric(row.loss) << ',' << format_metric(row.psnr) << '\n';
            const TraceRow& last = result.trace.back();
            out << "fit: " << result.trace.size() - 1 << " steps, baseline psnr " << format_metric(result.baseline_psnr)
                << " dB, final psnr " << format_metric(last.psnr) << " dB\n";
            if (result.diverged) throw Error("fit diverged at step " + std::to_string(result.failed_step) + ": " + result.failure);
        };
    });

    // render
    auto* render_cmd = app.add_subcommand("render", "Render a Gaussian set at an arbitrary scale");
    std::string render_input, render_out, render_ref, render_strategy = "vbgs:16", render_interp = "bilinear";
    double render_scale = 1.0;
    render_cmd->add_option("input", render_input, "Gaussian set file")->required();
    render_cmd->add_option("--scale", render_scale, "Output scale factor")->required();
    render_cmd->add_option("--strategy", render_strategy, "direct | raster:RHO | vbgs:K | vbgs-brute:K");
    render_cmd->add_option("--reference", render_ref, "Low-resolution reference image (required for vbgs)");
    render_cmd->add_option("--reference-interp", render_interp, "bilinear or bicubic reference upsampling");
    render_cmd->add_option("--out", render_out, "Output image")->required();
    render_cmd->callback([&] {
        action = [&] {
            StrategySpec spec;
            try {
                spec = parse_strategy(render_strategy);
            } catch (const ConfigError& e) {
                throw UsageError(std::string("--strategy: ") + e.what());
            }
            const bool vbgs = std::holds_alternative<VbgsStrategy>(spec.strategy);
            if (vbgs && render_ref.empty()) throw UsageError("--reference is required for the vbgs strategy");
            const Interpolation mode = detail::parse_interp(render_interp, "--reference-interp");
            const GaussianSet gs = read_gaussian_file(render_input).to_set();
            RenderPlan plan = RenderPlan::at_scale(render_scale, spec.strategy);
            const TargetGrid grid = target_grid(plan, gs.base().meta());
            if (vbgs) {
                const MultiBandImage ref = read_image(render_ref);
                plan.reference = (ref.width() == grid.width && ref.height() == grid.height)
                                     ? ref
                                     : make_reference(ref, grid.width, grid.height, mode);
            }
            MultiBandImage img;
            if (vbgs && !spec.brute_force) {
                const GaussianGridIndex index = build_index(gs);
                img = render_vbgs(gs, &index, plan);
            } else {
                img = render(gs, plan);
            }
            write_image(render_out, img);
            out << "render: " << img.width() << "x" << img.height() << "x" << img.bands() << " -> " << render_out << '\n';
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM / SAM of a prediction against ground truth");
    std::string eval_pred, eval_gt, eval_out;
    eval_cmd->add_option("prediction", eval_pred)->required();
    eval_cmd->add_option("truth", eval_gt)->required();
    eval_cmd->add_option("--out", eval_out, "Report CSV");
    eval_cmd->callback([&] {
        action = [&] {
            const MultiBandImage pred = read_image(eval_pred);
            const MultiBandImage gt = read_image(eval_gt);
            const MetricReport report = evaluate(pred, gt);
            if (!eval_out.empty()) {
                auto f = detail::open_output(eval_out);
                write_report_csv(f, report);
            }
            write_report_table(out, report);
        };
    });

    // gradcheck
    auto* gc_cmd = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    GradcheckOptions gc_opt;
    gc_cmd->add_option("--seed", gc_opt.seed);
    gc_cmd->add_option("--trials", gc_opt.trials)->check(CLI::PositiveNumber);
    gc_cmd->callback([&] {
        action = [&] {
            const GradcheckReport report = gradcheck(gc_opt);
            out << "class,max_rel_error,max_abs_error_small,checked,status\n";
            for (const auto& c : report.classes)
                out << param_class_name(c.cls) << ',' << format_metric(c.max_rel_error) << ','
                    << format_metric(c.max_abs_error_small) << ',' << c.checked << ',' << (c.passed ? "pass" : "FAIL")
                    << '\n';
            out << "trials=" << report.trials << " rejected_configs=" << report.rejected_configs << " result="
                << (report.passed ? "pass" : "FAIL") << '\n';
            if (!report.passed) {
                std::string names;
                for (const auto& n : report.failing()) names += (names.empty() ? "" : ",") + n;
                throw Error("gradient check failed for " + names);
            }
        };
    });

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Synthesize a degraded low-resolution image");
    std::string synth_in, synth_out;
    DegradeOptions synth_opt;
    synth_cmd->add_option("input", synth_in)->required();
    synth_cmd->add_option("--scale", synth_opt.scale)->required();
    synth_cmd->add_option("--noise", synth_opt.noise_sigma, "Noise level on the --noise-scale scale");
    synth_cmd->add_option("--noise-scale", synth_opt.noise_scale, "Full-scale value the noise level refers to");
    synth_cmd->add_option("--seed", synth_opt.seed);
    synth_cmd->add_option("--out", synth_out)->required();
    synth_cmd->callback([&] {
        action = [&] {
            if (!(synth_opt.scale > 1.0)) throw UsageError("--scale must exceed 1 for degradation");
            const MultiBandImage lr = synth_degrade(read_image(synth_in), synth_opt);
            write_image(synth_out, lr);
            out << "synth: " << lr.width() << "x" << lr.height() << "x" << lr.bands() << " -> " << synth_out << '\n';
        };
    });

    // upsample
    auto* up_cmd = app.add_subcommand("upsample", "Interpolation baseline (bicubic or bilinear)");
    std::string up_in, up_out, up_method = "bicubic";
    double up_scale = 2.0;
    up_cmd->add_option("input", up_in)->required();
    up_cmd->add_option("--scale", up_scale)->required();
    up_cmd->add_option("--method", up_method, "bicubic or bilinear");
    up_cmd->add_option("--out", up_out)->required();
    up_cmd->callback([&] {
        action = [&] {
            const MultiBandImage img = upsample(read_image(up_in), up_scale, detail::parse_interp(up_method, "--method"));
            write_image(up_out, img);
            out << "upsample: " << img.width() << "x" << img.height() << " -> " << up_out << '\n';
        };
    });

    // sde
    auto* sde_cmd = app.add_subcommand("sde", "Spectral detail enhancement forward pass");
    std::string sde_in, sde_weights, sde_out;
    double sde_scale = 2.0;
    sde_cmd->add_option("input", sde_in)->required();
    sde_cmd->add_option("--scale", sde_scale)->required();
    sde_cmd->add_option("--weights", sde_weights)->required();
    sde_cmd->add_option("--out", sde_out)->required();
    sde_cmd->callback([&] {
        action = [&] {
            const MultiBandImage img = sde_forward(read_image(sde_in), sde_scale, read_sde_weights(sde_weights));
            write_image(sde_out, img);
            out << "sde: " << img.width() << "x" << img.height() << "x" << img.bands() << " -> " << sde_out << '\n';
        };
    });

    auto* sde_init_cmd = app.add_subcommand("sde-init", "Write randomly initialized SDE weights");
    SdeDims sde_dims;
    std::uint64_t sde_seed = 0;
    std::string sde_init_out;
    sde_init_cmd->add_option("--channels", sde_dims.channels)->required()->check(CLI::PositiveNumber);
    sde_init_cmd->add_option("--patch", sde_dims.patch);
    sde_init_cmd->add_option("--hidden", sde_dims.hidden);
    sde_init_cmd->add_option("--seed", sde_seed);
    sde_init_cmd->add_option("--out", sde_init_out)->required();
    sde_init_cmd->callback([&] {
        action = [&] {
            write_sde_weights(sde_init_out, sde_random_init(sde_seed, sde_dims));
            out << "sde-init: " << sde_init_out << '\n';
        };
    });

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time aggregation strategies across scales");
    std::string bench_in, bench_out, bench_scales = "2,4,6,8", bench_strats = "direct,raster:3,vbgs:16,vbgs-brute:16";
    bench_cmd->add_option("input", bench_in)->required();
    bench_cmd->add_option("--scales", bench_scales);
    bench_cmd->add_option("--strategies", bench_strats);
    bench_cmd->add_option("--out", bench_out)->required();
    bench_cmd->callback([&] {
        action = [&] {
            const auto scales = detail::parse_scales(bench_scales);
            const auto strategies = detail::parse_strategies(bench_strats);
            const GaussianSet gs = read_gaussian_file(bench_in).to_set();
            const auto rows = bench(gs, scales, strategies);
            auto f = detail::open_output(bench_out);
            write_bench_csv(f, rows);
            write_bench_csv(out, rows);
        };
    });

    // dump-params
    auto* dump_cmd = app.add_subcommand("dump-params", "Per-Gaussian geometry as CSV");
    std::string dump_in, dump_out;
    dump_cmd->add_option("input", dump_in)->required();
    dump_cmd->add_option("--out", dump_out)->required();
    dump_cmd->callback([&] {
        action = [&] {
            const GaussianSet gs = read_gaussian_file(dump_in).to_set();
            auto f = detail::open_output(dump_out);
            f << "index,x,y,sigma_x,sigma_y,rho\n";
            f.precision(9);
            for (std::size_t n = 0; n < gs.size(); ++n) {
                const Gaussian& g = gs.gaussian(n);
                f << n << ',' << g.center.x << ',' << g.center.y << ',' << g.sigma_x << ',' << g.sigma_y << ','
                  << g.rho << '\n';
            }
            out << "dump-params: " << gs.size() << " Gaussians -> " << dump_out << '\n';
        };
    });

    // import-pgm
    auto* pgm_cmd = app.add_subcommand("import-pgm", "Stack per-band PGM files into a raw image");
    std::vector<std::string> pgm_inputs;
    std::string pgm_out;
    pgm_cmd->add_option("bands", pgm_inputs, "One PGM file per band, in band order")->required();
    pgm_cmd->add_option("--out", pgm_out)->required();
    pgm_cmd->callback([&] {
        action = [&] {
            const MultiBandImage img = image_from_pgm_bands(pgm_inputs);
            write_image(pgm_out, img);
            out << "import-pgm: " << img.width() << "x" << img.height() << "x" << img.bands() << " -> " << pgm_out << '\n';
        };
    });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    const bool previous = deterministic();
    set_deterministic(deterministic_mode);
    int status = kExitOk;
    try {
        if (action) action();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        status = kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        status = kExitFailure;
    }
    set_deterministic(previous);
    return status;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

}  // namespace vbgs::cli
