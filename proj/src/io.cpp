#include "magtv/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace magtv::io {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_parent_dir(const std::string& path) {
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path + " for reading");
    return in;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_finite(const std::string& s, const std::string& path, int line) {
    double v = 0;
    try {
        std::size_t pos = 0;
        v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw CsvError(path, line, "cannot parse number from '" + s + "'");
    }
    if (!std::isfinite(v)) {
        throw CsvError(path, line, "non-finite value '" + s + "'");
    }
    return v;
}

/// Reads data rows of `width` columns, skipping comments and blank lines
/// and checking the header.
struct CsvReader {
    std::string path;
    std::ifstream in;
    int line_no = 0;

    CsvReader(const std::string& p, const std::string& expected_header)
        : path(p), in(open_in(p)) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            std::string stripped = line;
            if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
            if (stripped != expected_header) {
                throw CsvError(path, line_no,
                               "expected header '" + expected_header +
                                   "', found '" + stripped + "'");
            }
            return;
        }
        throw CsvError(path, line_no, "missing header '" + expected_header + "'");
    }

    bool next_row(std::vector<double>& out, int width) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line == "\r" || line[0] == '#') continue;
            const auto fields = split_csv(line);
            if (static_cast<int>(fields.size()) != width) {
                throw CsvError(path, line_no,
                               "expected " + std::to_string(width) +
                                   " columns, found " +
                                   std::to_string(fields.size()));
            }
            out.clear();
            for (const auto& f : fields) {
                out.push_back(parse_finite(f, path, line_no));
            }
            return true;
        }
        return false;
    }
};

}  // namespace

CsvError::CsvError(const std::string& path, int line, const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

void write_measure_csv(const std::string& path,
                       const DiscreteVectorMeasure& mu, double scale) {
    auto out = open_out(path);
    out << "# units: positions in m, moments in A*m^2; scale=" << fmt(scale)
        << "\n";
    out << "x,y,z,mx,my,mz\n";
    for (const Atom& a : mu.atoms()) {
        out << fmt(a.position.x()) << ',' << fmt(a.position.y()) << ','
            << fmt(a.position.z()) << ',' << fmt(a.moment.x()) << ','
            << fmt(a.moment.y()) << ',' << fmt(a.moment.z()) << '\n';
    }
}

DiscreteVectorMeasure read_measure_csv(const std::string& path,
                                       const std::optional<Box3>& region) {
    CsvReader reader(path, "x,y,z,mx,my,mz");
    std::vector<Atom> atoms;
    std::map<std::tuple<double, double, double>, int> seen;
    std::vector<double> row;
    while (reader.next_row(row, 6)) {
        const Vec3 p(row[0], row[1], row[2]);
        const Vec3 m(row[3], row[4], row[5]);
        if (!seen.emplace(std::make_tuple(p.x(), p.y(), p.z()), reader.line_no)
                 .second) {
            throw CsvError(path, reader.line_no, "duplicate atom location");
        }
        if (region && !region->contains(p)) {
            throw CsvError(path, reader.line_no,
                           "atom location outside the source region");
        }
        atoms.push_back(Atom{p, m});
    }
    return DiscreteVectorMeasure(std::move(atoms));
}

void write_sensors_csv(const std::string& path, const SensorGrid& sensors) {
    auto out = open_out(path);
    out << "# units: positions in m, weights dimensionless\n";
    out << "# direction: " << fmt(sensors.direction.x()) << ' '
        << fmt(sensors.direction.y()) << ' ' << fmt(sensors.direction.z())
        << "\n";
    out << "x,y,z,weight\n";
    for (int i = 0; i < sensors.size(); ++i) {
        const Vec3& p = sensors.points[i];
        out << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z()) << ','
            << fmt(sensors.weights[i]) << '\n';
    }
}

SensorGrid read_sensors_csv(const std::string& path) {
    // The direction comment precedes the header; scan it first.
    Vec3 direction(0, 0, 1);
    {
        auto in = open_in(path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.rfind("# direction:", 0) == 0) {
                std::istringstream is(line.substr(12));
                if (!(is >> direction.x() >> direction.y() >> direction.z())) {
                    throw CsvError(path, line_no, "malformed direction comment");
                }
            }
            if (!line.empty() && line[0] != '#') break;
        }
    }
    CsvReader reader(path, "x,y,z,weight");
    SensorGrid grid;
    grid.direction = direction;
    std::vector<double> weights;
    std::vector<double> row;
    while (reader.next_row(row, 4)) {
        if (!(row[3] > 0)) {
            throw CsvError(path, reader.line_no, "sensor weight must be positive");
        }
        grid.points.emplace_back(row[0], row[1], row[2]);
        weights.push_back(row[3]);
    }
    grid.weights = Eigen::Map<const VectorXd>(weights.data(), weights.size());
    grid.validate();
    return grid;
}

void write_field_csv(const std::string& path, const SensorGrid& sensors,
                     const VectorXd& values, double scale) {
    if (values.size() != sensors.size()) {
        throw std::invalid_argument("field values do not match sensor count");
    }
    auto out = open_out(path);
    out << "# units: positions in m, values in T (directional component); scale="
        << fmt(scale) << "\n";
    out << "x,y,z,value\n";
    for (int i = 0; i < sensors.size(); ++i) {
        const Vec3& p = sensors.points[i];
        out << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z()) << ','
            << fmt(values[i]) << '\n';
    }
}

VectorXd read_field_csv(const std::string& path, const SensorGrid& sensors) {
    CsvReader reader(path, "x,y,z,value");
    std::vector<double> values;
    std::vector<double> row;
    while (reader.next_row(row, 4)) {
        const int i = static_cast<int>(values.size());
        if (i >= sensors.size()) {
            throw CsvError(path, reader.line_no, "more field rows than sensors");
        }
        const Vec3 p(row[0], row[1], row[2]);
        if (p != sensors.points[i]) {
            throw CsvError(path, reader.line_no,
                           "field row position does not match sensor row " +
                               std::to_string(i + 1));
        }
        values.push_back(row[3]);
    }
    if (static_cast<int>(values.size()) != sensors.size()) {
        throw CsvError(path, reader.line_no, "fewer field rows than sensors");
    }
    return Eigen::Map<const VectorXd>(values.data(), values.size());
}

void write_level_set_csv(const std::string& path, const LevelSetSample& sample) {
    auto out = open_out(path);
    out << "# dual-field magnitudes |A*(f-A mu)| at sample points\n";
    out << "x,y,z,g\n";
    for (std::size_t i = 0; i < sample.points.size(); ++i) {
        const Vec3& p = sample.points[i];
        out << fmt(p.x()) << ',' << fmt(p.y()) << ',' << fmt(p.z()) << ','
            << fmt(sample.values[static_cast<Eigen::Index>(i)]) << '\n';
    }
}

void write_refinement_trace_csv(const std::string& path,
                                const RefinementTrace& trace) {
    auto out = open_out(path);
    out << "level,num_nodes,mesh_size,objective,shifted_objective,tv,"
           "active_count,cert_gap,iterations,converged_by,r_proxy_to_finest,"
           "hausdorff_prev,dist_to_levelset,dist_from_ref_support,kappa_ref,"
           "delta_noise,d_lambda_ref,fncond3_ok,fncond3_slack,fncond2_ok,"
           "fncond2_lo_slack,fncond2_hi_slack,wall_seconds,flags\n";
    for (const auto& r : trace.rows) {
        out << r.level << ',' << r.num_nodes << ',' << fmt(r.mesh_size) << ','
            << fmt(r.objective) << ',' << fmt(r.shifted_objective) << ','
            << fmt(r.tv) << ',' << r.active_count << ',' << fmt(r.cert_gap)
            << ',' << r.iterations << ',' << to_string(r.converged_by) << ','
            << fmt(r.r_proxy_to_finest) << ',' << fmt(r.hausdorff_prev) << ','
            << fmt(r.dist_to_levelset) << ',' << fmt(r.dist_from_ref_support)
            << ',' << fmt(r.kappa_ref) << ',' << fmt(r.delta_noise) << ','
            << fmt(r.d_lambda_ref) << ',' << (r.fncond3_ok ? 1 : 0) << ','
            << fmt(r.fncond3_slack) << ',' << (r.fncond2_ok ? 1 : 0) << ','
            << fmt(r.fncond2_lo_slack) << ',' << fmt(r.fncond2_hi_slack) << ','
            << fmt(r.wall_seconds) << ',';
        for (std::size_t i = 0; i < r.flags.size(); ++i) {
            if (i) out << ';';
            out << r.flags[i];
        }
        out << '\n';
    }
}

nlohmann::json certificate_to_json(const CertificateReport& report) {
    nlohmann::json j;
    j["lambda"] = report.lambda;
    j["tol"] = report.tol;
    j["pass"] = report.pass;
    j["gap"] = report.gap();
    j["bound_gap"] = report.bound_gap;
    j["bound_margin"] = report.bound_margin;
    j["alignment_gap"] = report.alignment_gap;
    j["pairing_residual"] = report.pairing_residual;
    j["tv"] = report.tv;
    j["active_set"] = report.active_set;
    auto duals = nlohmann::json::array();
    for (const Vec3& c : report.duals) {
        duals.push_back({c.x(), c.y(), c.z()});
    }
    j["duals"] = std::move(duals);
    auto moments = nlohmann::json::array();
    for (int k : report.active_set) {
        const Vec3& m = report.moments[k];
        moments.push_back({{"node", k}, {"moment", {m.x(), m.y(), m.z()}}});
    }
    j["active_moments"] = std::move(moments);
    return j;
}

nlohmann::json refinement_trace_to_json(const RefinementTrace& trace) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : trace.rows) {
        nlohmann::json row;
        row["level"] = r.level;
        row["num_nodes"] = r.num_nodes;
        row["mesh_size"] = r.mesh_size;
        row["objective"] = r.objective;
        row["shifted_objective"] = r.shifted_objective;
        row["tv"] = r.tv;
        row["active_count"] = r.active_count;
        row["cert_gap"] = r.cert_gap;
        row["iterations"] = r.iterations;
        row["converged_by"] = to_string(r.converged_by);
        row["r_proxy_to_finest"] = r.r_proxy_to_finest;
        row["hausdorff_prev"] =
            std::isfinite(r.hausdorff_prev) ? nlohmann::json(r.hausdorff_prev)
                                            : nlohmann::json();
        row["dist_to_levelset"] =
            std::isfinite(r.dist_to_levelset)
                ? nlohmann::json(r.dist_to_levelset)
                : nlohmann::json();
        row["dist_from_ref_support"] =
            std::isfinite(r.dist_from_ref_support)
                ? nlohmann::json(r.dist_from_ref_support)
                : nlohmann::json();
        row["kappa_ref"] = r.kappa_ref;
        row["delta_noise"] = r.delta_noise;
        row["d_lambda_ref"] = r.d_lambda_ref;
        row["fncond3_ok"] = r.fncond3_ok;
        row["fncond3_slack"] = r.fncond3_slack;
        row["fncond2_ok"] = r.fncond2_ok;
        row["fncond2_lo_slack"] = r.fncond2_lo_slack;
        row["fncond2_hi_slack"] = r.fncond2_hi_slack;
        row["flags"] = r.flags;
        rows.push_back(std::move(row));
    }
    nlohmann::json j;
    j["lambda"] = trace.lambda;
    j["levels"] = rows;
    j["all_audits_pass"] = trace.all_audits_pass();
    return j;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::string& path) {
    auto in = open_in(path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

namespace {

std::uint64_t hash_doubles(std::uint64_t h, const double* p, std::size_t n) {
    return fnv1a(p, n * sizeof(double), h);
}

}  // namespace

std::uint64_t model_content_hash(const DipoleGsmSpace& space,
                                 const SensorGrid& sensors, double scale) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const Box3& box = space.region();
    h = hash_doubles(h, box.lo.data(), 3);
    h = hash_doubles(h, box.hi.data(), 3);
    const auto& res = space.partition().resolution();
    h = fnv1a(res.data(), sizeof(int) * 3, h);
    for (const Vec3& p : space.nodes()) h = hash_doubles(h, p.data(), 3);
    for (const Vec3& p : sensors.points) h = hash_doubles(h, p.data(), 3);
    h = hash_doubles(h, sensors.weights.data(),
                     static_cast<std::size_t>(sensors.weights.size()));
    h = hash_doubles(h, sensors.direction.data(), 3);
    h = hash_doubles(h, &scale, 1);
    return h;
}

namespace {
constexpr char kCacheMagic[8] = {'M', 'A', 'G', 'T', 'V', 'M', 'C', '1'};
}

void save_model_cache(const std::string& path, const ForwardModel& model) {
    if (!model.dense()) {
        throw std::logic_error("matrix-free models have no cacheable matrix");
    }
    auto out = open_out(path);
    out.write(kCacheMagic, sizeof(kCacheMagic));
    const std::uint64_t h =
        model_content_hash(model.space(), model.sensors(), model.scale());
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const std::int64_t rows = model.matrix().rows();
    const std::int64_t cols = model.matrix().cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(model.matrix().data()),
              static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!out) throw std::runtime_error("failed writing model cache " + path);
}

std::optional<ForwardModel> load_model_cache(const std::string& path,
                                             const DipoleGsmSpace& space,
                                             const SensorGrid& sensors,
                                             double scale) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) {
        return std::nullopt;
    }
    std::uint64_t h = 0;
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!in || h != model_content_hash(space, sensors, scale)) return std::nullopt;
    std::int64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in || rows != sensors.size() || cols != 3 * space.num_nodes()) {
        return std::nullopt;
    }
    MatrixXd B(rows, cols);
    in.read(reinterpret_cast<char*>(B.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) return std::nullopt;
    return ForwardModel::from_parts(space, sensors, scale, std::move(B));
}

void write_text_file(const std::string& path, const std::string& contents) {
    auto out = open_out(path);
    out << contents;
}

std::string read_text_file(const std::string& path) {
    auto in = open_in(path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace magtv::io
