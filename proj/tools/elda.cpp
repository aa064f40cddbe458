#include "cli_app.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
    CLI::App app{"Fan-beam low-dose CT reconstruction toolkit"};
    app.require_subcommand(1);

    elda::cli::SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Generate phantom and sinogram data");
    simulate->add_option("--config", sim.config_path, "configuration file");
    simulate->add_option("--out", sim.out_dir, "output directory");
    simulate->add_option("--seed", sim.seed, "override dose.seed");
    simulate->add_option("--jobs", sim.jobs, "parallel dose levels");
    simulate->add_flag("--png", sim.png, "also export PNG previews");

    elda::cli::ReconstructOptions rec;
    auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct an image from a sinogram");
    reconstruct->add_option("--config", rec.config_path, "configuration file");
    reconstruct->add_option("--method", rec.method, "fbp | elda | plain_gd");
    reconstruct->add_option("--input", rec.input, "sinogram tensor (.bin)")->required();
    reconstruct->add_option("--filters", rec.filters, "filter bank preset or .fb path");
    reconstruct->add_option("--out", rec.out_dir, "output directory");
    reconstruct->add_flag("--png", rec.png, "also export PNG previews");

    elda::cli::EvaluateOptions ev;
    auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM against a reference image");
    evaluate->add_option("recons", ev.recon_paths, "reconstruction tensors");
    evaluate->add_option("--reference", ev.reference, "reference image tensor")->required();
    evaluate->add_option("--out", ev.out_csv, "CSV output path (default stdout)");

    elda::cli::VerifyOptions ver;
    auto* verify = app.add_subcommand("verify", "Run a property suite");
    verify->add_option("suite", ver.suite, "adjoint | gradients | descent | smoothing | noise")
        ->required();

    elda::cli::ConfigCmdOptions conf;
    auto* config = app.add_subcommand("config", "Inspect configuration and filter banks");
    config->add_flag("--dump-defaults", conf.dump_defaults, "print every key with its default");
    config->add_option("--check", conf.config_path, "validate a config file and print it");
    config->add_option("--inspect-filters", conf.inspect_filters,
                       "report filter bank shape and transpose deviation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : elda::cli::kExitConfig;
    }

    if (simulate->parsed()) return elda::cli::cmd_simulate(sim);
    if (reconstruct->parsed()) return elda::cli::cmd_reconstruct(rec);
    if (evaluate->parsed()) return elda::cli::cmd_evaluate(ev);
    if (verify->parsed()) return elda::cli::cmd_verify(ver);
    if (config->parsed()) return elda::cli::cmd_config(conf);
    return elda::cli::kExitConfig;
}
