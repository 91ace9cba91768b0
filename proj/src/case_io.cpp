#include "lungdeform/case_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lungdeform/errors.hpp"
#include "lungdeform/mesh_io.hpp"

namespace lungdeform {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kDatasetFormat = "lungdeform.dataset/v1";
constexpr const char* kCaseFormat = "lungdeform.case/v1";
constexpr const char* kModelFormat = "lungdeform.kernel_model/v1";

json read_json(const fs::path& path)
{
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

ordered_json point_json(const Point3& p) { return ordered_json::array({p.x(), p.y(), p.z()}); }

Point3 json_point(const json& j, const fs::path& path)
{
    if (!j.is_array() || j.size() != 3) {
        throw ValidationError(path.string() + ": expected [x, y, z]");
    }
    Point3 p(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
    if (!is_finite(p)) {
        throw ValidationError(path.string() + ": non-finite coordinate");
    }
    return p;
}

std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Comma-separated rows after one header line; returns numeric rows.
std::vector<std::vector<double>> read_csv(const fs::path& path, std::size_t columns)
{
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<std::vector<double>> rows;
    int lineno = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                                      cell + "'");
            }
        }
        if (row.size() != columns) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(columns) + " columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json matrix_json(const Eigen::MatrixXd& m)
{
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json r = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

Eigen::MatrixXd json_matrix(const json& j, const fs::path& path, const char* name)
{
    if (!j.is_array()) throw ValidationError(path.string() + ": '" + std::string(name) + "' must be an array");
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
            throw ValidationError(path.string() + ": ragged matrix '" + std::string(name) + "'");
        }
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = r[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

ordered_json params_json(const DeflationParams& p)
{
    ordered_json j;
    j["contraction_ratio"] = p.contraction_ratio;
    j["rotation_deg"] = p.rotation_deg;
    j["sag_mm"] = p.sag_mm;
    j["hilum_point"] = point_json(p.hilum_point);
    j["seed"] = p.seed;
    return j;
}

DeflationParams json_params(const json& j, const fs::path& path)
{
    DeflationParams p;
    try {
        p.contraction_ratio = j.at("contraction_ratio").get<double>();
        p.rotation_deg = j.at("rotation_deg").get<double>();
        p.sag_mm = j.at("sag_mm").get<double>();
        p.hilum_point = json_point(j.at("hilum_point"), path);
        p.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return p;
}

} // namespace

std::string read_text_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw ValidationError("write failed: " + path.string());
    }
}

CaseData to_case_data(const SyntheticCase& c)
{
    CaseData d;
    d.id = c.id;
    d.inflated = c.inflated;
    d.deflated = c.deflated;
    d.clips = c.clips;
    d.truth_field = c.truth_field;
    d.interior = c.interior;
    d.interior_deflated = c.interior_deflated;
    d.params = c.params;
    return d;
}

void save_clips(const std::vector<LandmarkPair>& clips, const fs::path& path)
{
    ordered_json arr = ordered_json::array();
    for (const auto& c : clips) {
        ordered_json e;
        e["inflated"] = point_json(c.source_pos);
        e["deflated"] = point_json(c.target_pos);
        arr.push_back(std::move(e));
    }
    write_text_file(path, arr.dump(2) + "\n");
}

std::vector<LandmarkPair> load_clips(const fs::path& path, const SurfaceMesh& inflated)
{
    const json j = read_json(path);
    if (!j.is_array()) {
        throw ValidationError(path.string() + ": expected an array of clips");
    }
    std::vector<LandmarkPair> clips;
    for (const auto& e : j) {
        if (!e.contains("inflated") || !e.contains("deflated")) {
            throw ValidationError(path.string() + ": clip needs 'inflated' and 'deflated'");
        }
        try {
            clips.push_back(make_landmark(inflated, json_point(e["inflated"], path),
                                          json_point(e["deflated"], path)));
        } catch (const ValidationError& err) {
            throw ValidationError(path.string() + ": " + err.what());
        }
    }
    return clips;
}

void save_displacement_csv(const DisplacementField& field, const fs::path& path)
{
    std::string out = "vertex,dx,dy,dz\n";
    for (std::size_t i = 0; i < field.size(); ++i) {
        out += std::to_string(i) + "," + fmt17(field[i].x()) + "," + fmt17(field[i].y()) + "," +
               fmt17(field[i].z()) + "\n";
    }
    write_text_file(path, out);
}

DisplacementField load_displacement_csv(const fs::path& path)
{
    const auto rows = read_csv(path, 4);
    std::vector<Vec3> v(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i][0] != static_cast<double>(i)) {
            throw ValidationError(path.string() + ": vertex indices must be 0..n-1 in order");
        }
        v[i] = Vec3(rows[i][1], rows[i][2], rows[i][3]);
    }
    try {
        return DisplacementField(std::move(v));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_energy_trace_csv(const std::vector<EnergyRecord>& trace, const fs::path& path)
{
    std::string out = "iteration,E,E_shape,E_clip,E_laplacian\n";
    for (const auto& r : trace) {
        out += std::to_string(r.iteration) + "," + fmt17(r.energy.total) + "," + fmt17(r.energy.shape) +
               "," + fmt17(r.energy.clip) + "," + fmt17(r.energy.laplacian) + "\n";
    }
    write_text_file(path, out);
}

void save_case(const SyntheticCase& c, const fs::path& dir)
{
    fs::create_directories(dir);
    save_mesh(c.inflated, dir / "inflated.off");
    save_mesh(c.deflated, dir / "deflated.off");
    save_clips(c.clips, dir / "clips.json");
    write_text_file(dir / "params.json", params_json(c.params).dump(2) + "\n");
    save_displacement_csv(c.truth_field, dir / "truth_field.csv");

    std::string interior = "x,y,z,x_deflated,y_deflated,z_deflated\n";
    for (std::size_t i = 0; i < c.interior.points.size(); ++i) {
        const auto& p = c.interior.points[i];
        const auto& q = c.interior_deflated[i];
        interior += fmt17(p.x()) + "," + fmt17(p.y()) + "," + fmt17(p.z()) + "," + fmt17(q.x()) + "," +
                    fmt17(q.y()) + "," + fmt17(q.z()) + "\n";
    }
    write_text_file(dir / "interior.csv", interior);

    ordered_json meta;
    meta["format"] = kCaseFormat;
    meta["id"] = c.id;
    meta["inflated"] = "inflated.off";
    meta["deflated"] = "deflated.off";
    meta["clips"] = "clips.json";
    meta["params"] = "params.json";
    meta["truth_field"] = "truth_field.csv";
    meta["interior"] = "interior.csv";
    write_text_file(dir / "case.json", meta.dump(2) + "\n");
}

CaseData load_case(const fs::path& dir)
{
    const fs::path meta_path = dir / "case.json";
    const json meta = read_json(meta_path);
    if (meta.value("format", "") != kCaseFormat) {
        throw ValidationError(meta_path.string() + ": missing or unknown format tag");
    }
    auto file = [&](const char* key) -> std::optional<fs::path> {
        if (!meta.contains(key) || meta[key].is_null()) return std::nullopt;
        return dir / meta[key].get<std::string>();
    };
    auto required = [&](const char* key) {
        auto p = file(key);
        if (!p) throw ValidationError(meta_path.string() + ": missing '" + key + "'");
        return *p;
    };

    CaseData d;
    d.id = meta.value("id", dir.filename().string());
    d.inflated = load_mesh(required("inflated"));
    d.deflated = load_mesh(required("deflated"));
    if (d.deflated.vertex_count() != d.inflated.vertex_count() ||
        d.deflated.triangles() != d.inflated.triangles()) {
        throw ValidationError(dir.string() + ": inflated and deflated meshes differ in connectivity");
    }
    d.clips = load_clips(required("clips"), d.inflated);
    if (auto p = file("params")) d.params = json_params(read_json(*p), *p);
    if (auto p = file("truth_field")) {
        d.truth_field = load_displacement_csv(*p);
        if (d.truth_field->size() != d.inflated.vertex_count()) {
            throw ValidationError(p->string() + ": field size does not match the mesh");
        }
    }
    if (auto p = file("interior")) {
        const auto rows = read_csv(*p, 6);
        InteriorPointSet s;
        for (const auto& r : rows) {
            s.points.emplace_back(r[0], r[1], r[2]);
            d.interior_deflated.emplace_back(r[3], r[4], r[5]);
        }
        d.interior = std::move(s);
    }
    return d;
}

void save_dataset(const std::vector<SyntheticCase>& cases, const fs::path& dir)
{
    fs::create_directories(dir);
    ordered_json index;
    index["format"] = kDatasetFormat;
    index["cases"] = ordered_json::array();
    for (const auto& c : cases) {
        save_case(c, dir / c.id);
        index["cases"].push_back(c.id);
    }
    write_text_file(dir / "dataset.json", index.dump(2) + "\n");
}

std::vector<CaseData> load_dataset(const fs::path& dir)
{
    const fs::path index_path = dir / "dataset.json";
    const json index = read_json(index_path);
    if (index.value("format", "") != kDatasetFormat || !index.contains("cases") ||
        !index["cases"].is_array()) {
        throw ValidationError(index_path.string() + ": not a lungdeform dataset");
    }
    std::vector<CaseData> cases;
    for (const auto& name : index["cases"]) {
        cases.push_back(load_case(dir / name.get<std::string>()));
    }
    for (std::size_t i = 0; i < cases.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (cases[i].id == cases[j].id) {
                throw ValidationError(index_path.string() + ": duplicate case id " + cases[i].id);
            }
        }
    }
    return cases;
}

void save_kernel_model(const KernelModel& model, const fs::path& path)
{
    ordered_json j;
    j["format"] = kModelFormat;
    j["mode"] = to_string(model.mode);
    j["beta"] = model.beta;
    j["lambda"] = model.lambda;
    j["divide_by_n"] = model.divide_by_n;
    j["vertex_count"] = model.vertex_count;
    ordered_json s;
    s["mode"] = to_string(model.sampling.mode);
    s["n"] = model.sampling.n;
    s["reference_ids"] = model.sampling.reference_ids;
    s["spare_id"] = model.sampling.spare_id;
    j["sampling"] = std::move(s);
    j["features"] = matrix_json(model.features);
    j["alpha"] = matrix_json(model.alpha);
    write_text_file(path, j.dump() + "\n");
}

KernelModel load_kernel_model(const fs::path& path)
{
    const json j = read_json(path);
    if (j.value("format", "") != kModelFormat) {
        throw ValidationError(path.string() + ": missing or unknown format tag");
    }
    KernelModel m;
    try {
        m.mode = learning_mode_from_string(j.at("mode").get<std::string>());
        m.beta = j.at("beta").get<double>();
        m.lambda = j.at("lambda").get<double>();
        m.divide_by_n = j.at("divide_by_n").get<bool>();
        m.vertex_count = j.at("vertex_count").get<int>();
        const auto& s = j.at("sampling");
        m.sampling.mode = sampling_mode_from_string(s.at("mode").get<std::string>());
        m.sampling.n = s.at("n").get<int>();
        m.sampling.reference_ids = s.at("reference_ids").get<std::vector<int>>();
        m.sampling.spare_id = s.at("spare_id").get<int>();
        m.features = json_matrix(j.at("features"), path, "features");
        m.alpha = json_matrix(j.at("alpha"), path, "alpha");
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    if (m.features.rows() != m.alpha.rows() || m.features.rows() == 0) {
        throw ValidationError(path.string() + ": features and alpha disagree in sample count");
    }
    return m;
}

} // namespace lungdeform
