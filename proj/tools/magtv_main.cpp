#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magtv/io.hpp"
#include "magtv/refinement.hpp"
#include "magtv/scenario.hpp"
#include "magtv/solver.hpp"

namespace {

using namespace magtv;

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::vector<double> lambda_ratios;
    std::vector<double> lambda_values;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--output", args.output, "output directory (overrides config)");
    cmd->add_option("--seed", args.seed,
                    "override every scenario/noise seed in the config");
    cmd->add_option("--lambda-ratio", args.lambda_ratios,
                    "lambda as a ratio of the finest-level lambda_max "
                    "(repeatable; replaces config values)");
    cmd->add_option("--lambda", args.lambda_values,
                    "absolute lambda (repeatable; replaces config values)");
}

RunConfig load_with_overrides(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args.config_path);
    if (args.output) cfg.output_dir = *args.output;
    if (args.seed) {
        if (cfg.scenario) {
            cfg.scenario->noise_seed = *args.seed;
            if (cfg.scenario->random_truth) {
                cfg.scenario->random_truth->seed = *args.seed;
            }
        }
        cfg.noise_seed = *args.seed;
    }
    if (!args.lambda_ratios.empty()) cfg.lambda_ratios = args.lambda_ratios;
    if (!args.lambda_values.empty()) cfg.lambda_values = args.lambda_values;
    return cfg;
}

int cmd_generate(const CommonArgs& args) {
    RunConfig cfg = load_with_overrides(args);
    if (!cfg.scenario) {
        std::cerr << "generate: config has no scenario section\n";
        return 1;
    }
    const GeneratedScenario scenario = generate_scenario(*cfg.scenario);
    write_scenario_files(scenario, *cfg.scenario, cfg.output_dir);
    std::cout << "wrote scenario (" << scenario.truth.size() << " dipoles, "
              << scenario.sensors.size() << " sensors) to " << cfg.output_dir
              << "\n";
    return 0;
}

int report_outcome(const RunOutcome& outcome, const std::string& out_dir) {
    for (const std::string& w : outcome.warnings) {
        std::cout << "warning: " << w << "\n";
    }
    std::cout << "artifacts in " << out_dir << "\n";
    return outcome.exit_code;
}

int cmd_invert(const CommonArgs& args) {
    RunConfig cfg = load_with_overrides(args);
    cfg.plan.levels = 1;  // single-grid inversion; `refine` runs the plan
    const RunOutcome outcome = run_inversion(cfg);
    return report_outcome(outcome, cfg.output_dir);
}

int cmd_refine(const CommonArgs& args) {
    RunConfig cfg = load_with_overrides(args);
    if (cfg.plan.levels < 2) {
        std::cerr << "refine: plan.levels must be at least 2\n";
        return 1;
    }
    const RunOutcome outcome = run_inversion(cfg);
    return report_outcome(outcome, cfg.output_dir);
}

int cmd_sweep(const CommonArgs& args) {
    RunConfig cfg = load_with_overrides(args);
    const SweepResult sweep = lambda_sweep(cfg);
    const std::string path = cfg.output_dir + "/sweep.csv";
    write_sweep_csv(path, sweep);
    for (const std::string& w : sweep.warnings) {
        std::cout << "warning: " << w << "\n";
    }
    std::cout << "wrote " << sweep.rows.size() << " rows to " << path << "\n";
    return 0;
}

int cmd_certify(const CommonArgs& args, const std::string& measure_path,
                double tol, bool project) {
    RunConfig cfg = load_with_overrides(args);
    const RunInputs data = load_run_inputs(cfg);

    RefinementPlan plan = cfg.plan;
    plan.lambda = 1.0;
    const auto spaces = build_nested_spaces(plan);
    const DipoleGsmSpace& space = spaces.back();

    AssembleOptions aopts;
    aopts.scale = data.scale;
    aopts.separation_gap = cfg.separation_gap;
    aopts.dense_memory_cap = cfg.dense_memory_cap;
    const ForwardModel model = assemble(space, data.sensors, aopts);

    const double lam_max = lambda_max(model, data.field);
    double lambda = 0;
    if (!cfg.lambda_values.empty()) {
        lambda = cfg.lambda_values.front();
    } else if (!cfg.lambda_ratios.empty()) {
        lambda = cfg.lambda_ratios.front() * lam_max;
    } else {
        std::cerr << "certify: provide --lambda or --lambda-ratio\n";
        return 1;
    }

    DiscreteVectorMeasure mu =
        io::read_measure_csv(measure_path, space.region());
    if (project) mu = project_onto_gsm(mu, space);

    const CertificateReport report =
        certificate_check(model, data.field, lambda, mu, tol);
    const std::string out_path = cfg.output_dir + "/certificate.json";
    io::write_text_file(out_path,
                        io::certificate_to_json(report).dump(2) + "\n");

    std::cout << (report.pass ? "PASS" : "FAIL") << "  lambda=" << lambda
              << " gap=" << report.gap() << " bound_gap=" << report.bound_gap
              << " alignment_gap=" << report.alignment_gap
              << " pairing_residual=" << report.pairing_residual << "\n"
              << "report written to " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Total-variation regularized inversion of dipole magnetizations"};
    app.require_subcommand(1);

    CommonArgs gen_args, inv_args, ref_args, sweep_args, cert_args;
    std::string measure_path;
    double cert_tol = 1e-6;
    bool cert_project = false;

    add_common(app.add_subcommand("generate", "forward-simulate a scenario"),
               gen_args);
    add_common(app.add_subcommand("invert", "single-grid inversion"), inv_args);
    add_common(app.add_subcommand("refine", "nested-grid refinement run"),
               ref_args);
    add_common(app.add_subcommand("sweep", "lambda tradeoff sweep"), sweep_args);
    auto* cert = app.add_subcommand(
        "certify", "check the optimality certificate of a measure file");
    add_common(cert, cert_args);
    cert->add_option("--measure", measure_path, "measure CSV to certify")
        ->required()
        ->check(CLI::ExistingFile);
    cert->add_option("--tol", cert_tol, "certificate tolerance (relative to lambda/2)");
    cert->add_flag("--project", cert_project,
                   "project the measure onto the grid before checking");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("generate")) return cmd_generate(gen_args);
        if (app.got_subcommand("invert")) return cmd_invert(inv_args);
        if (app.got_subcommand("refine")) return cmd_refine(ref_args);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args);
        if (app.got_subcommand("certify")) {
            return cmd_certify(cert_args, measure_path, cert_tol, cert_project);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
