#include "cli_app.hpp"

#include "elda/config.hpp"
#include "elda/manifest.hpp"
#include "elda/metrics.hpp"
#include "elda/noise.hpp"
#include "elda/objective.hpp"
#include "elda/phantom.hpp"
#include "elda/png.hpp"
#include "elda/tensor_io.hpp"
#include "elda/verify.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

namespace elda::cli {

namespace {

namespace fs = std::filesystem;

Config load_config_or_defaults(const std::string& path) {
    if (path.empty()) return Config::defaults();
    return Config::load(path);
}

std::string dose_tag(Scalar i0) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", i0);
    return buf;
}

std::map<std::string, std::string> snapshot(const Config& cfg) { return cfg.entries(); }

void export_png(const fs::path& path, const Image& im, const Config& cfg) {
    write_png_hu(path, im, cfg.num("png.mu_water"), cfg.num("png.hu_lo"), cfg.num("png.hu_hi"));
}

SolverConfig solver_config_from(const Config& cfg, const FanBeamGeometry& geo, Index image_n) {
    SolverConfig s;
    s.rho = cfg.num("solver.rho");
    s.gamma = cfg.num("solver.gamma");
    s.eps0 = cfg.num("solver.eps0");
    s.sigma_red = cfg.num("solver.sigma_red");
    s.c = cfg.num("solver.c");
    s.iota = cfg.num("solver.iota");
    s.tau_desc = cfg.num("solver.tau_desc");
    s.eps_tol = cfg.num("solver.eps_tol");
    s.max_iters = static_cast<int>(cfg.integer("solver.max_iters"));
    s.max_backtracks = static_cast<int>(cfg.integer("solver.max_backtracks"));
    const std::string alpha = cfg.str("solver.alpha");
    if (alpha == "auto") {
        const int iters = static_cast<int>(cfg.integer("solver.power_iters"));
        s.alpha_schedule = {1.0 / estimate_normal_op_norm(geo, image_n, iters)};
    } else {
        s.alpha_schedule = {cfg.num("solver.alpha")};
    }
    const std::string beta = cfg.str("solver.beta");
    if (beta != "alpha") s.beta_schedule = {cfg.num("solver.beta")};
    const std::string mode = cfg.str("solver.grad_mode");
    if (mode == "exact")
        s.u_grad_mode = GradMode::exact;
    else if (mode == "inexact")
        s.u_grad_mode = GradMode::inexact;
    else
        throw ConfigError("config: solver.grad_mode must be exact or inexact");
    validate(s);
    return s;
}

void print_trace_tail(const SolverTrace& t, std::ostream& os, std::size_t n = 5) {
    os << "trace tail (" << t.records.size() << " completed iterations):\n";
    const std::size_t start = t.records.size() > n ? t.records.size() - n : 0;
    for (std::size_t i = start; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        os << "  k=" << r.k << " eps=" << r.eps << " phi=" << r.phi
           << " grad_norm=" << r.grad_norm << " branch=" << r.branch
           << " backtracks=" << r.backtracks << "\n";
    }
}

} // namespace

int cmd_simulate(const SimulateOptions& opts) {
    Config cfg;
    try {
        cfg = load_config_or_defaults(opts.config_path);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }

    try {
        const FanBeamGeometry geo = resolve_geometry(cfg);
        const Index n = cfg.integer("geometry.image_n");
        const Scalar mu_scale = cfg.num("sim.mu_scale");
        const std::uint64_t seed =
            opts.seed ? *opts.seed : static_cast<std::uint64_t>(cfg.integer("dose.seed"));

        fs::create_directories(opts.out_dir);
        const fs::path out(opts.out_dir);

        Image reference = shepp_logan(n, geo.pixel_size_for(n));
        reference.values *= mu_scale;
        write_tensor(reference, out / "phantom");

        const Sinogram clean = forward_project(reference, geo);
        write_tensor(clean, out / "sino_clean");

        RunManifest manifest;
        manifest.command = "simulate";
        manifest.config_path = opts.config_path;
        manifest.seed = seed;
        manifest.params = snapshot(cfg);
        manifest.outputs = {"phantom.bin", "sino_clean.bin"};

        const auto dose_levels = cfg.num_list("dose.I0");
        const Scalar sigma_e2 = cfg.num("dose.sigma_e2");
        const Scalar clamp_floor = cfg.num("sim.clamp_floor");

        auto simulate_one = [&](std::size_t idx) {
            DoseModel dose;
            dose.incident_photons = dose_levels[idx];
            dose.electronic_variance = sigma_e2;
            dose.clamp_floor = clamp_floor;
            dose.seed = rng::mix(seed, static_cast<std::uint64_t>(idx));
            const Sinogram noisy = simulate_noisy_sinogram(clean, dose);
            write_tensor(noisy, out / ("sino_noisy_" + dose_tag(dose_levels[idx])));
        };

        if (opts.jobs > 1 && dose_levels.size() > 1) {
            std::vector<std::future<void>> jobs;
            for (std::size_t i = 0; i < dose_levels.size(); ++i)
                jobs.push_back(std::async(std::launch::async, simulate_one, i));
            for (auto& j : jobs) j.get();
        } else {
            for (std::size_t i = 0; i < dose_levels.size(); ++i) simulate_one(i);
        }
        for (std::size_t i = 0; i < dose_levels.size(); ++i)
            manifest.outputs.push_back("sino_noisy_" + dose_tag(dose_levels[i]) + ".bin");

        if (opts.png) export_png(out / "phantom.png", reference, cfg);

        write_manifest(manifest, out / "manifest.json");
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "simulate: " << e.what() << "\n";
        return kExitNumeric;
    }
}

int cmd_reconstruct(const ReconstructOptions& opts) {
    Config cfg;
    try {
        cfg = load_config_or_defaults(opts.config_path);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }

    if (opts.input.empty()) {
        std::cerr << "reconstruct: missing --input sinogram\n";
        return kExitConfig;
    }
    if (opts.method != "fbp" && opts.method != "elda" && opts.method != "plain_gd") {
        std::cerr << "reconstruct: method must be fbp, elda or plain_gd\n";
        return kExitConfig;
    }

    FanBeamGeometry geo;
    Sinogram sino;
    Index n = 0;
    FbpFilter filter{};
    try {
        geo = resolve_geometry(cfg);
        n = cfg.integer("geometry.image_n");
        filter = resolve_fbp_filter(cfg);
        sino = read_sinogram(opts.input);
        if (sino.n_views != geo.n_views || sino.n_detectors != geo.n_detectors)
            throw ConfigError("reconstruct: sinogram shape does not match geometry");
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }

    try {
        fs::create_directories(opts.out_dir);
        const fs::path out(opts.out_dir);

        const Image x0 = fbp(sino, geo, n, filter);

        RunManifest manifest;
        manifest.command = "reconstruct(" + opts.method + ")";
        manifest.config_path = opts.config_path;
        manifest.inputs = {opts.input};
        manifest.params = snapshot(cfg);
        if (!opts.filters.empty()) manifest.params["filters.override"] = opts.filters;

        if (opts.method == "fbp") {
            write_tensor(x0, out / "recon_fbp");
            manifest.outputs = {"recon_fbp.bin"};
            if (opts.png) export_png(out / "recon_fbp.png", x0, cfg);
            write_manifest(manifest, out / "manifest.json");
            return kExitOk;
        }

        FilterBank fb = resolve_filters(cfg, opts.filters);
        const RegularizerConfig rcfg = resolve_regularizer(cfg);
        const SolverConfig scfg = solver_config_from(cfg, geo, n);
        if (scfg.u_grad_mode == GradMode::inexact && !fb.inexact_transposes)
            throw ConfigError("reconstruct: inexact grad mode needs a filter bank with "
                              "stored transposes");

        CTObjective obj = CTObjective::prepare({geo, sino}, std::move(fb), rcfg, x0);

        SolveResult res;
        try {
            res = (opts.method == "elda") ? run(obj, x0.values, scfg)
                                          : plain_gd(obj, x0.values, scfg);
        } catch (const SolverFailure& e) {
            std::cerr << "reconstruct: " << e.what() << "\n";
            print_trace_tail(e.partial, std::cerr);
            return kExitNumeric;
        }

        const Image recon = obj.to_image(res.x);
        const std::string stem = "recon_" + opts.method;
        write_tensor(recon, out / stem);
        write_trace_csv(res.trace, out / ("trace_" + opts.method + ".csv"));
        std::printf("%s: %zu iterations (%s), u-branch ratio %.3f, final phi %.6e, "
                    "final eps %.3e\n",
                    opts.method.c_str(), res.trace.records.size(),
                    res.trace.termination.c_str(), res.trace.u_branch_ratio(),
                    res.trace.final_phi, res.trace.final_eps);
        manifest.outputs = {stem + ".bin", "trace_" + opts.method + ".csv"};
        if (opts.png) export_png(out / (stem + ".png"), recon, cfg);
        write_manifest(manifest, out / "manifest.json");
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "reconstruct: " << e.what() << "\n";
        return kExitNumeric;
    }
}

int cmd_evaluate(const EvaluateOptions& opts) {
    if (opts.recon_paths.empty()) {
        std::cerr << "evaluate: no reconstruction files given\n";
        return kExitConfig;
    }
    if (opts.reference.empty()) {
        std::cerr << "evaluate: missing --reference\n";
        return kExitConfig;
    }

    Image ref;
    try {
        ref = read_image(opts.reference);
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    }
    const Scalar peak = ref.values.maxCoeff();

    QualityReport report;
    bool any_failed = false;
    for (const auto& path : opts.recon_paths) {
        try {
            const Image im = read_image(path);
            if (im.height != ref.height || im.width != ref.width)
                throw std::runtime_error("shape mismatch against reference");
            SsimParams sp;
            sp.peak = peak;
            report.rows.push_back(
                {fs::path(path).stem().string(), psnr(im, ref, peak), ssim(im, ref, sp)});
        } catch (const std::exception& e) {
            std::cerr << "evaluate: " << path << ": " << e.what() << " (skipped)\n";
            any_failed = true;
        }
    }

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!opts.out_csv.empty()) {
        file.open(opts.out_csv, std::ios::trunc);
        if (!file) {
            std::cerr << "evaluate: cannot open " << opts.out_csv << "\n";
            return kExitNumeric;
        }
        os = &file;
    }
    os->precision(10);
    *os << "image_id,psnr_db,ssim\n";
    for (const auto& r : report.rows)
        *os << r.image_id << ',' << r.psnr_db << ',' << r.ssim << '\n';
    if (!report.rows.empty()) {
        *os << "aggregate_mean," << report.mean_psnr() << ',' << report.mean_ssim() << '\n';
        *os << "aggregate_std," << report.std_psnr() << ',' << report.std_ssim() << '\n';
    }
    return any_failed ? kExitNumeric : kExitOk;
}

int cmd_verify(const VerifyOptions& opts) {
    std::vector<PropertyResult> results;
    try {
        results = run_suite(opts.suite);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "verify: " << e.what() << "\n";
        return kExitNumeric;
    }

    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%s %-36s measured=%.6e bound=%.6e%s%s\n", r.pass ? "PASS" : "FAIL",
                    r.name.c_str(), r.measured, r.bound, r.note.empty() ? "" : "  ",
                    r.note.c_str());
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitSuite;
}

int cmd_config(const ConfigCmdOptions& opts) {
    try {
        if (opts.dump_defaults) {
            Config::defaults().dump(std::cout);
            return kExitOk;
        }
        if (!opts.inspect_filters.empty()) {
            const FilterBank fb = load_filter_bank(opts.inspect_filters);
            std::cout << "layers: " << fb.layer_count() << "\n";
            std::cout << "feature_channels: " << fb.feature_channels() << "\n";
            std::cout << "activation_delta: " << fb.activation_delta << "\n";
            if (fb.inexact_transposes) {
                const auto dev = inexact_transpose_deviation(fb);
                for (std::size_t q = 0; q < dev.per_layer_frobenius.size(); ++q)
                    std::cout << "transpose_deviation_frobenius[" << q
                              << "]: " << dev.per_layer_frobenius[q] << "\n";
                std::cout << "transpose_constraint_metric: " << dev.constraint_metric << "\n";
            } else {
                std::cout << "inexact_transposes: absent\n";
            }
            return kExitOk;
        }
        if (!opts.config_path.empty()) {
            const Config cfg = Config::load(opts.config_path);
            cfg.dump(std::cout);
            return kExitOk;
        }
        std::cerr << "config: nothing to do (use --dump-defaults, --check or "
                     "--inspect-filters)\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "config: " << e.what() << "\n";
        return kExitConfig;
    }
}

} // namespace elda::cli
