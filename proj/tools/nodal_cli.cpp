#include "nodal/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Sign-changing critical points of nonsmooth elliptic energies"};
    app.require_subcommand(1);

    std::string config_path;
    nodal::Overrides overrides;
    nodal::FlowOptions flow_options;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--out", overrides.output, "output directory");
        sub->add_option("--seed", overrides.seed, "seed for every random draw");
        sub->add_option("--workers", overrides.workers, "worker threads for mesh sweeps");
    };
    CLI::App* solve = app.add_subcommand("solve", "full pipeline to a sign-changing solution");
    common(solve);
    CLI::App* flow = app.add_subcommand("flow", "one descending-flow trajectory");
    common(flow);
    flow->add_option("--start", overrides.start, "zero, plus_phi1, minus_phi1, phi2 or a field CSV");
    flow->add_flag("--resume", flow_options.resume, "continue from <out>/checkpoint.json");
    flow->add_option("--halt-after", flow_options.halt_after, "stop after this many accepted steps");
    CLI::App* verify = app.add_subcommand("verify", "hypothesis, invariance, slope and PS checks");
    common(verify);
    verify->add_option("--start", overrides.start, "start of the generated trajectory when none is stored");
    CLI::App* spectrum = app.add_subcommand("spectrum", "eigenpairs of the discrete Laplacian");
    common(spectrum);
    spectrum->add_option("-k", overrides.spectrum_k, "number of eigenpairs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nodal::ExitConfigError;
    }

    nodal::RunConfig config;
    try {
        config = nodal::resolve_config(config_path, overrides);
    } catch (const nodal::ConfigError& e) {
        std::cerr << "stage config: " << e.what() << '\n';
        return nodal::ExitConfigError;
    }
    if (solve->parsed()) {
        return nodal::cmd_solve(config, std::cout);
    }
    if (flow->parsed()) {
        return nodal::cmd_flow(config, flow_options, std::cout);
    }
    if (verify->parsed()) {
        return nodal::cmd_verify(config, std::cout);
    }
    return nodal::cmd_spectrum(config, std::cout);
}
