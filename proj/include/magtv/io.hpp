#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "magtv/certificate.hpp"
#include "magtv/forward.hpp"
#include "magtv/measure.hpp"
#include "magtv/refinement.hpp"

namespace magtv::io {

/// Parse failure with the offending file and 1-based line number.
class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& path, int line, const std::string& what);
    int line() const { return line_; }

private:
    int line_ = 0;
};

/// Measures: header `x,y,z,mx,my,mz`; values printed with 17 significant
/// digits so round trips are bit-exact. Lines starting with '#' are
/// comments; every writer emits one naming units and scale.
void write_measure_csv(const std::string& path,
                       const DiscreteVectorMeasure& mu, double scale);
DiscreteVectorMeasure read_measure_csv(
    const std::string& path, const std::optional<Box3>& region = {});

/// Sensors: header `x,y,z,weight`; the direction rides in a `# direction:`
/// comment so the grid round-trips.
void write_sensors_csv(const std::string& path, const SensorGrid& sensors);
SensorGrid read_sensors_csv(const std::string& path);

/// Field data: header `x,y,z,value`; row order must match the sensor file.
void write_field_csv(const std::string& path, const SensorGrid& sensors,
                     const VectorXd& values, double scale);
/// Returns the values; verifies positions match `sensors` row by row.
VectorXd read_field_csv(const std::string& path, const SensorGrid& sensors);

/// Dual-field samples: header `x,y,z,g`.
void write_level_set_csv(const std::string& path, const LevelSetSample& sample);

void write_refinement_trace_csv(const std::string& path,
                                const RefinementTrace& trace);

nlohmann::json certificate_to_json(const CertificateReport& report);
nlohmann::json refinement_trace_to_json(const RefinementTrace& trace);

/// FNV-1a over raw bytes; used for content hashes in manifests and the
/// model cache key.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

/// Content hash of (space, sensors, scale); the cache key.
std::uint64_t model_content_hash(const DipoleGsmSpace& space,
                                 const SensorGrid& sensors, double scale);

/// Binary model cache; round-trips the assembled matrix bit-exactly.
/// Loading validates the content hash and returns nothing on mismatch.
void save_model_cache(const std::string& path, const ForwardModel& model);
std::optional<ForwardModel> load_model_cache(const std::string& path,
                                             const DipoleGsmSpace& space,
                                             const SensorGrid& sensors,
                                             double scale);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace magtv::io
