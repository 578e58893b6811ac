#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "magtv/forward.hpp"
#include "magtv/refinement.hpp"
#include "magtv/solver.hpp"

namespace magtv {

struct DipoleSpec {
    Vec3 position{0, 0, 0};
    Vec3 moment{0, 0, 0};
};

struct RandomTruthSpec {
    int count = 1;
    double moment_min = 0.5;
    double moment_max = 1.5;
    std::uint64_t seed = 0;
};

/// Planar rectangular sensor grid at a fixed height above the region.
struct SensorPlaneSpec {
    double x0 = 0, x1 = 1;
    double y0 = 0, y1 = 1;
    int nx = 8, ny = 8;
    double height = 0.5;  ///< above the region's top face; must be > 0
    Vec3 direction{0, 0, 1};
};

struct ScenarioConfig {
    Box3 region;
    std::vector<DipoleSpec> dipoles;             ///< explicit ground truth
    std::optional<RandomTruthSpec> random_truth; ///< or a seeded sparse draw
    SensorPlaneSpec sensors;
    double noise_std = 0;
    std::uint64_t noise_seed = 0;
    double scale = kMu0Over4Pi;

    void validate() const;
};

struct GeneratedScenario {
    DiscreteVectorMeasure truth;
    SensorGrid sensors;
    VectorXd field;  ///< forward-simulated values plus configured noise
};

GeneratedScenario generate_scenario(const ScenarioConfig& cfg);

/// Writes truth.csv, sensors.csv, field.csv and manifest.json (content
/// hashes, units, config echo) into out_dir.
void write_scenario_files(const GeneratedScenario& scenario,
                          const ScenarioConfig& cfg,
                          const std::string& out_dir);

inline constexpr int kConfigVersion = 1;

/// Full run description; parsed from the versioned JSON config.
struct RunConfig {
    int config_version = kConfigVersion;
    std::optional<ScenarioConfig> scenario;
    std::optional<std::string> sensors_file;
    std::optional<std::string> field_file;
    std::vector<double> lambda_ratios;  ///< of the finest-level lambda_max
    std::vector<double> lambda_values;  ///< absolute; appended to ratios
    RefinementPlan plan;
    SolveOptions solve;
    std::string output_dir = "out";
    /// Physical scale for file-based runs; scenario runs use scenario.scale.
    double data_scale = kMu0Over4Pi;
    double noise_std = 0;             ///< f~ perturbation per level
    std::uint64_t noise_seed = 0;
    std::optional<double> separation_gap;
    std::size_t dense_memory_cap = std::size_t{2} << 30;
    int dual_sample_factor = 2;
    std::optional<std::string> model_cache_dir;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& cfg);

struct RunInputs {
    SensorGrid sensors;
    VectorXd field;
    double scale = 1.0;
    std::optional<DiscreteVectorMeasure> truth;  ///< scenario runs only
};

/// Generates the scenario in memory or reads the configured data files.
RunInputs load_run_inputs(const RunConfig& cfg);

struct RunOutcome {
    int exit_code = 0;
    std::vector<std::string> warnings;
    nlohmann::json summary;
};

/// Orchestrates generate/load -> per-lambda refinement or single solve ->
/// artifacts on disk. Mathematical warnings (max_iters, audit slack) leave
/// the exit code at 0 so sweeps complete; hard errors throw.
RunOutcome run_inversion(const RunConfig& cfg);

struct SweepRow {
    double lambda = 0;
    double residual_sq = 0;
    double tv = 0;
    double objective = 0;
    int active_count = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> warnings;  ///< path-monotonicity breaches
};

/// Solves on the plan's base grid for every configured lambda and tabulates
/// the residual/TV tradeoff, largest lambda first.
SweepResult lambda_sweep(const RunConfig& cfg);

void write_sweep_csv(const std::string& path, const SweepResult& sweep);

}  // namespace magtv
