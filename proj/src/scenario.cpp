#include "magtv/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "magtv/io.hpp"
#include "magtv/rng.hpp"

namespace magtv {

namespace fs = std::filesystem;
using nlohmann::json;

void ScenarioConfig::validate() const {
    if (!(region.hi.array() > region.lo.array()).all()) {
        throw std::invalid_argument("scenario region must have positive extent");
    }
    if (!(sensors.height > 0)) {
        throw std::invalid_argument("sensor height must be positive");
    }
    if (sensors.nx < 1 || sensors.ny < 1) {
        throw std::invalid_argument("sensor grid must have at least one point");
    }
    if (!(sensors.x1 > sensors.x0) || !(sensors.y1 > sensors.y0)) {
        throw std::invalid_argument("sensor plane must have positive extent");
    }
    if (noise_std < 0) throw std::invalid_argument("noise std must be >= 0");
    if (!(scale > 0)) throw std::invalid_argument("scale must be positive");
    if (random_truth && random_truth->count < 0) {
        throw std::invalid_argument("random truth count must be >= 0");
    }
    for (const DipoleSpec& d : dipoles) {
        if (!region.contains(d.position)) {
            throw std::invalid_argument("ground-truth dipole outside the region");
        }
    }
}

GeneratedScenario generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();

    std::vector<Atom> atoms;
    for (const DipoleSpec& d : cfg.dipoles) atoms.push_back(Atom{d.position, d.moment});
    if (cfg.random_truth) {
        Rng rng(cfg.random_truth->seed);
        for (int i = 0; i < cfg.random_truth->count; ++i) {
            Vec3 p;
            for (int a = 0; a < 3; ++a) {
                p[a] = rng.uniform(cfg.region.lo[a], cfg.region.hi[a]);
            }
            Vec3 dir(rng.gaussian(), rng.gaussian(), rng.gaussian());
            while (dir.norm() < 1e-6) {
                dir = Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
            }
            const double mag = rng.uniform(cfg.random_truth->moment_min,
                                           cfg.random_truth->moment_max);
            atoms.push_back(Atom{p, mag * dir.normalized()});
        }
    }

    GeneratedScenario out;
    out.truth = DiscreteVectorMeasure::merged(atoms);

    const auto& sp = cfg.sensors;
    const double dx = (sp.x1 - sp.x0) / sp.nx;
    const double dy = (sp.y1 - sp.y0) / sp.ny;
    const double z = cfg.region.hi.z() + sp.height;
    out.sensors.direction = sp.direction.normalized();
    out.sensors.points.reserve(std::size_t(sp.nx) * sp.ny);
    for (int iy = 0; iy < sp.ny; ++iy) {
        for (int ix = 0; ix < sp.nx; ++ix) {
            out.sensors.points.emplace_back(sp.x0 + (ix + 0.5) * dx,
                                            sp.y0 + (iy + 0.5) * dy, z);
        }
    }
    const double area = (sp.x1 - sp.x0) * (sp.y1 - sp.y0);
    out.sensors.weights =
        VectorXd::Constant(out.sensors.size(), area / out.sensors.size());
    out.sensors.validate();

    out.field = apply_measure(out.sensors, out.truth, cfg.scale);
    if (cfg.noise_std > 0) {
        Rng rng(cfg.noise_seed);
        for (Eigen::Index i = 0; i < out.field.size(); ++i) {
            out.field[i] += cfg.noise_std * rng.gaussian();
        }
    }
    return out;
}

namespace {

json vec3_to_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

Vec3 vec3_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) {
        throw std::runtime_error("config: " + what + " must be an array of 3 numbers");
    }
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["region"] = {{"lo", vec3_to_json(cfg.region.lo)},
                   {"hi", vec3_to_json(cfg.region.hi)}};
    json dipoles = json::array();
    for (const auto& d : cfg.dipoles) {
        dipoles.push_back({{"position", vec3_to_json(d.position)},
                           {"moment", vec3_to_json(d.moment)}});
    }
    j["dipoles"] = std::move(dipoles);
    if (cfg.random_truth) {
        j["random_truth"] = {{"count", cfg.random_truth->count},
                             {"moment_min", cfg.random_truth->moment_min},
                             {"moment_max", cfg.random_truth->moment_max},
                             {"seed", cfg.random_truth->seed}};
    }
    j["sensors"] = {{"x0", cfg.sensors.x0},
                    {"x1", cfg.sensors.x1},
                    {"y0", cfg.sensors.y0},
                    {"y1", cfg.sensors.y1},
                    {"nx", cfg.sensors.nx},
                    {"ny", cfg.sensors.ny},
                    {"height", cfg.sensors.height},
                    {"direction", vec3_to_json(cfg.sensors.direction)}};
    j["noise_std"] = cfg.noise_std;
    j["noise_seed"] = cfg.noise_seed;
    j["scale"] = cfg.scale;
    return j;
}

ScenarioConfig scenario_from_json(const json& j) {
    ScenarioConfig cfg;
    if (!j.contains("region")) throw std::runtime_error("config: scenario.region missing");
    cfg.region.lo = vec3_from_json(j.at("region").at("lo"), "region.lo");
    cfg.region.hi = vec3_from_json(j.at("region").at("hi"), "region.hi");
    if (j.contains("dipoles")) {
        for (const auto& d : j.at("dipoles")) {
            cfg.dipoles.push_back(
                DipoleSpec{vec3_from_json(d.at("position"), "dipole position"),
                           vec3_from_json(d.at("moment"), "dipole moment")});
        }
    }
    if (j.contains("random_truth")) {
        const auto& r = j.at("random_truth");
        RandomTruthSpec spec;
        spec.count = r.at("count").get<int>();
        spec.moment_min = r.value("moment_min", 0.5);
        spec.moment_max = r.value("moment_max", 1.5);
        if (!r.contains("seed")) {
            throw std::runtime_error(
                "config: random_truth.seed is required for reproducibility");
        }
        spec.seed = r.at("seed").get<std::uint64_t>();
        cfg.random_truth = spec;
    }
    if (j.contains("sensors")) {
        const auto& s = j.at("sensors");
        cfg.sensors.x0 = s.value("x0", 0.0);
        cfg.sensors.x1 = s.value("x1", 1.0);
        cfg.sensors.y0 = s.value("y0", 0.0);
        cfg.sensors.y1 = s.value("y1", 1.0);
        cfg.sensors.nx = s.value("nx", 8);
        cfg.sensors.ny = s.value("ny", 8);
        cfg.sensors.height = s.value("height", 0.5);
        if (s.contains("direction")) {
            cfg.sensors.direction = vec3_from_json(s.at("direction"), "direction");
        }
    }
    cfg.noise_std = j.value("noise_std", 0.0);
    if (cfg.noise_std > 0 && !j.contains("noise_seed")) {
        throw std::runtime_error(
            "config: noise_seed is required when noise_std > 0");
    }
    cfg.noise_seed = j.value("noise_seed", std::uint64_t{0});
    cfg.scale = j.value("scale", kMu0Over4Pi);
    return cfg;
}

}  // namespace

void write_scenario_files(const GeneratedScenario& scenario,
                          const ScenarioConfig& cfg,
                          const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string truth_path = out_dir + "/truth.csv";
    const std::string sensors_path = out_dir + "/sensors.csv";
    const std::string field_path = out_dir + "/field.csv";
    io::write_measure_csv(truth_path, scenario.truth, cfg.scale);
    io::write_sensors_csv(sensors_path, scenario.sensors);
    io::write_field_csv(field_path, scenario.sensors, scenario.field, cfg.scale);

    json manifest;
    manifest["config_version"] = kConfigVersion;
    manifest["scenario"] = scenario_to_json(cfg);
    manifest["files"] = {
        {"truth.csv", io::hash_hex(io::hash_file(truth_path))},
        {"sensors.csv", io::hash_hex(io::hash_file(sensors_path))},
        {"field.csv", io::hash_hex(io::hash_file(field_path))}};
    io::write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

RunConfig parse_run_config(const json& j) {
    RunConfig cfg;
    if (!j.contains("config_version")) {
        throw std::runtime_error("config: config_version is required");
    }
    cfg.config_version = j.at("config_version").get<int>();
    if (cfg.config_version != kConfigVersion) {
        throw std::runtime_error("config: unsupported config_version " +
                                 std::to_string(cfg.config_version));
    }
    if (j.contains("scenario")) {
        cfg.scenario = scenario_from_json(j.at("scenario"));
    }
    if (j.contains("sensors_file")) cfg.sensors_file = j.at("sensors_file").get<std::string>();
    if (j.contains("field_file")) cfg.field_file = j.at("field_file").get<std::string>();
    if (!cfg.scenario && !(cfg.sensors_file && cfg.field_file)) {
        throw std::runtime_error(
            "config: either scenario or sensors_file+field_file is required");
    }
    if (j.contains("lambda_ratios")) {
        cfg.lambda_ratios = j.at("lambda_ratios").get<std::vector<double>>();
    }
    if (j.contains("lambda_values")) {
        cfg.lambda_values = j.at("lambda_values").get<std::vector<double>>();
    }
    if (j.contains("plan")) {
        const auto& p = j.at("plan");
        if (p.contains("region")) {
            cfg.plan.region.lo = vec3_from_json(p.at("region").at("lo"), "plan region.lo");
            cfg.plan.region.hi = vec3_from_json(p.at("region").at("hi"), "plan region.hi");
        } else if (cfg.scenario) {
            cfg.plan.region = cfg.scenario->region;
        } else {
            throw std::runtime_error("config: plan.region is required for file input");
        }
        if (p.contains("base_resolution")) {
            const auto& r = p.at("base_resolution");
            if (!r.is_array() || r.size() != 3) {
                throw std::runtime_error("config: plan.base_resolution must have 3 entries");
            }
            cfg.plan.base_resolution = {r[0].get<int>(), r[1].get<int>(), r[2].get<int>()};
        }
        cfg.plan.levels = p.value("levels", 1);
        cfg.plan.factor = p.value("factor", 2);
    } else if (cfg.scenario) {
        cfg.plan.region = cfg.scenario->region;
    } else {
        throw std::runtime_error("config: plan is required for file input");
    }
    cfg.plan.lambda = 1.0;  // placeholder; set per run
    if (j.contains("solve")) {
        const auto& s = j.at("solve");
        cfg.solve.max_iters = s.value("max_iters", cfg.solve.max_iters);
        cfg.solve.certificate_tol = s.value("certificate_tol", cfg.solve.certificate_tol);
        cfg.solve.objective_tol = s.value("objective_tol", cfg.solve.objective_tol);
        cfg.solve.restart = s.value("restart", cfg.solve.restart);
        cfg.solve.stall_patience = s.value("stall_patience", cfg.solve.stall_patience);
    }
    cfg.output_dir = j.value("output_dir", std::string("out"));
    cfg.data_scale = j.value("scale", cfg.scenario ? cfg.scenario->scale : kMu0Over4Pi);
    cfg.noise_std = j.value("refine_noise_std", 0.0);
    if (cfg.noise_std > 0 && !j.contains("refine_noise_seed")) {
        throw std::runtime_error(
            "config: refine_noise_seed is required when refine_noise_std > 0");
    }
    cfg.noise_seed = j.value("refine_noise_seed", std::uint64_t{0});
    if (j.contains("separation_gap")) cfg.separation_gap = j.at("separation_gap").get<double>();
    if (j.contains("dense_memory_cap")) {
        cfg.dense_memory_cap = j.at("dense_memory_cap").get<std::size_t>();
    }
    cfg.dual_sample_factor = j.value("dual_sample_factor", 2);
    if (j.contains("model_cache_dir")) {
        cfg.model_cache_dir = j.at("model_cache_dir").get<std::string>();
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["config_version"] = cfg.config_version;
    if (cfg.scenario) j["scenario"] = scenario_to_json(*cfg.scenario);
    if (cfg.sensors_file) j["sensors_file"] = *cfg.sensors_file;
    if (cfg.field_file) j["field_file"] = *cfg.field_file;
    j["lambda_ratios"] = cfg.lambda_ratios;
    j["lambda_values"] = cfg.lambda_values;
    j["plan"] = {{"region",
                  {{"lo", vec3_to_json(cfg.plan.region.lo)},
                   {"hi", vec3_to_json(cfg.plan.region.hi)}}},
                 {"base_resolution",
                  {cfg.plan.base_resolution[0], cfg.plan.base_resolution[1],
                   cfg.plan.base_resolution[2]}},
                 {"levels", cfg.plan.levels},
                 {"factor", cfg.plan.factor}};
    j["solve"] = {{"max_iters", cfg.solve.max_iters},
                  {"certificate_tol", cfg.solve.certificate_tol},
                  {"objective_tol", cfg.solve.objective_tol},
                  {"restart", cfg.solve.restart},
                  {"stall_patience", cfg.solve.stall_patience}};
    j["output_dir"] = cfg.output_dir;
    j["scale"] = cfg.data_scale;
    j["refine_noise_std"] = cfg.noise_std;
    j["refine_noise_seed"] = cfg.noise_seed;
    j["dual_sample_factor"] = cfg.dual_sample_factor;
    if (cfg.separation_gap) j["separation_gap"] = *cfg.separation_gap;
    if (cfg.model_cache_dir) j["model_cache_dir"] = *cfg.model_cache_dir;
    return j;
}

RunInputs load_run_inputs(const RunConfig& cfg) {
    RunInputs data;
    if (cfg.scenario) {
        GeneratedScenario gen = generate_scenario(*cfg.scenario);
        data.sensors = std::move(gen.sensors);
        data.field = std::move(gen.field);
        data.scale = cfg.scenario->scale;
        data.truth = std::move(gen.truth);
    } else {
        data.sensors = io::read_sensors_csv(*cfg.sensors_file);
        data.field = io::read_field_csv(*cfg.field_file, data.sensors);
        data.scale = cfg.data_scale;
    }
    return data;
}

namespace {

std::vector<double> resolve_lambdas(const RunConfig& cfg, double lam_max,
                                    std::vector<double>* ratios_out) {
    std::vector<double> lambdas;
    for (double r : cfg.lambda_ratios) {
        if (!(r > 0)) throw std::runtime_error("config: lambda ratios must be positive");
        lambdas.push_back(r * lam_max);
        if (ratios_out) ratios_out->push_back(r);
    }
    for (double v : cfg.lambda_values) {
        if (!(v > 0)) throw std::runtime_error("config: lambda values must be positive");
        lambdas.push_back(v);
        if (ratios_out) ratios_out->push_back(lam_max > 0 ? v / lam_max : 0.0);
    }
    if (lambdas.empty()) {
        throw std::runtime_error("config: at least one lambda is required");
    }
    return lambdas;
}

std::string lambda_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "lambda_%03d", index);
    return buf;
}

}  // namespace

RunOutcome run_inversion(const RunConfig& cfg) {
    RunOutcome outcome;
    const std::string out_dir = cfg.output_dir;
    fs::create_directories(out_dir);

    const RunInputs data = load_run_inputs(cfg);
    if (cfg.scenario) {
        write_scenario_files(GeneratedScenario{*data.truth, data.sensors, data.field},
                             *cfg.scenario, out_dir + "/scenario");
    }

    RefinementPlan plan = cfg.plan;
    const std::vector<DipoleGsmSpace> spaces = [&] {
        RefinementPlan probe = plan;
        probe.lambda = 1.0;
        return build_nested_spaces(probe);
    }();
    const double lam_max = lambda_max_at_nodes(
        data.sensors, spaces.back().nodes(), data.field, data.scale);

    std::vector<double> ratios;
    const std::vector<double> lambdas = resolve_lambdas(cfg, lam_max, &ratios);

    json summary;
    summary["config"] = run_config_to_json(cfg);
    summary["lambda_max"] = lam_max;
    json runs = json::array();

    for (std::size_t li = 0; li < lambdas.size(); ++li) {
        plan.lambda = lambdas[li];
        RefinementData rdata;
        rdata.sensors = data.sensors;
        rdata.f = data.field;
        rdata.scale = data.scale;
        rdata.separation_gap = cfg.separation_gap;
        rdata.dense_memory_cap = cfg.dense_memory_cap;
        rdata.noise_std = cfg.noise_std;
        rdata.noise_seed = cfg.noise_seed;
        rdata.dual_sample_factor = cfg.dual_sample_factor;
        rdata.model_cache_dir = cfg.model_cache_dir;

        const RefinementTrace trace = run_refinement(plan, rdata, cfg.solve);

        const std::string ldir = out_dir + "/" + lambda_dir_name(static_cast<int>(li));
        io::write_refinement_trace_csv(ldir + "/trace.csv", trace);
        io::write_text_file(ldir + "/trace.json",
                            io::refinement_trace_to_json(trace).dump(2) + "\n");
        io::write_level_set_csv(ldir + "/dual_field.csv", trace.dual_sample);

        json levels = json::array();
        for (std::size_t n = 0; n < trace.rows.size(); ++n) {
            const auto& row = trace.rows[n];
            const std::string lvl_dir =
                ldir + "/level_" + std::to_string(row.level);
            io::write_measure_csv(lvl_dir + "/solution.csv", trace.solutions[n],
                                  data.scale);
            io::write_text_file(
                lvl_dir + "/certificate.json",
                io::certificate_to_json(trace.certificates[n]).dump(2) + "\n");

            json lv;
            lv["level"] = row.level;
            lv["objective"] = row.objective;
            lv["tv"] = row.tv;
            lv["residual_sq"] = row.objective - plan.lambda * row.tv;
            lv["active_count"] = row.active_count;
            lv["cert_gap"] = row.cert_gap;
            lv["converged_by"] = to_string(row.converged_by);
            lv["fncond3_ok"] = row.fncond3_ok;
            lv["fncond2_ok"] = row.fncond2_ok;
            lv["flags"] = row.flags;
            levels.push_back(std::move(lv));

            for (const std::string& flag : row.flags) {
                if (flag == "solver-max-iters" || flag.rfind("audit-", 0) == 0) {
                    outcome.warnings.push_back(
                        lambda_dir_name(static_cast<int>(li)) + "/level_" +
                        std::to_string(row.level) + ": " + flag);
                }
            }
        }
        json run;
        run["lambda"] = plan.lambda;
        run["lambda_ratio"] = ratios[li];
        run["levels"] = std::move(levels);
        run["all_audits_pass"] = trace.all_audits_pass();
        runs.push_back(std::move(run));
    }

    summary["runs"] = std::move(runs);
    summary["warnings"] = outcome.warnings;
    io::write_text_file(out_dir + "/summary.json", summary.dump(2) + "\n");
    outcome.summary = std::move(summary);
    outcome.exit_code = 0;
    return outcome;
}

SweepResult lambda_sweep(const RunConfig& cfg) {
    const std::string out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    const RunInputs data = load_run_inputs(cfg);

    const VoxelPartition base(cfg.plan.region, cfg.plan.base_resolution);
    const DipoleGsmSpace space = DipoleGsmSpace::cell_centers(base);
    AssembleOptions aopts;
    aopts.scale = data.scale;
    aopts.separation_gap = cfg.separation_gap;
    aopts.dense_memory_cap = cfg.dense_memory_cap;
    const ForwardModel model = assemble(space, data.sensors, aopts);

    const double lam_max = lambda_max(model, data.field);
    std::vector<double> lambdas = resolve_lambdas(cfg, lam_max, nullptr);
    std::sort(lambdas.begin(), lambdas.end(), std::greater<double>());

    SweepResult sweep;
    SolveOptions opts = cfg.solve;
    std::optional<VectorXd> previous;
    for (double lambda : lambdas) {
        opts.warm_start = previous;  // path continuation, largest lambda first
        const SolveResult res = solve(model, data.field, lambda, opts);
        previous = res.moments;

        SweepRow row;
        row.lambda = lambda;
        row.tv = tv_norm(res.measure);
        row.objective = res.objective;
        row.residual_sq = res.objective - lambda * row.tv;
        row.active_count = static_cast<int>(res.certificate.active_set.size());
        if (res.warning) {
            sweep.warnings.push_back("lambda=" + std::to_string(lambda) +
                                     ": solver hit max_iters");
        }
        sweep.rows.push_back(row);
    }

    // Path monotonicity is expected but not proved; breaches are warnings.
    for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
        const auto& hi = sweep.rows[i - 1];  // larger lambda
        const auto& lo = sweep.rows[i];
        const double rtol = 1e-8;
        if (lo.residual_sq > hi.residual_sq * (1 + rtol) + 1e-12) {
            sweep.warnings.push_back("residual_sq increased from lambda=" +
                                     std::to_string(hi.lambda) + " to " +
                                     std::to_string(lo.lambda));
        }
        if (lo.tv < hi.tv * (1 - rtol) - 1e-12) {
            sweep.warnings.push_back("tv decreased from lambda=" +
                                     std::to_string(hi.lambda) + " to " +
                                     std::to_string(lo.lambda));
        }
        if (lo.active_count < hi.active_count) {
            sweep.warnings.push_back("active_count decreased from lambda=" +
                                     std::to_string(hi.lambda) + " to " +
                                     std::to_string(lo.lambda));
        }
    }
    return sweep;
}

void write_sweep_csv(const std::string& path, const SweepResult& sweep) {
    std::string text = "lambda,residual_sq,tv,objective,active_count\n";
    char buf[256];
    for (const auto& r : sweep.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%d\n", r.lambda,
                      r.residual_sq, r.tv, r.objective, r.active_count);
        text += buf;
    }
    io::write_text_file(path, text);
}

}  // namespace magtv
