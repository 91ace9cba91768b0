#include "lungdeform/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lungdeform/errors.hpp"

namespace lungdeform {

namespace {

struct Line {
    std::vector<std::string> tokens;
    int number = 0;
};

// Non-empty lines with '#' comments stripped.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path)
    {
        if (!in_) {
            throw ValidationError("cannot open " + path.string());
        }
    }

    bool next(Line& line)
    {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++number_;
            if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
            std::istringstream ss(raw);
            line.tokens.clear();
            for (std::string tok; ss >> tok;) line.tokens.push_back(tok);
            if (!line.tokens.empty()) {
                line.number = number_;
                return true;
            }
        }
        return false;
    }

    // Raw line, keeping '#' (PLY comments are keyword based).
    bool next_raw(Line& line)
    {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++number_;
            std::istringstream ss(raw);
            line.tokens.clear();
            for (std::string tok; ss >> tok;) line.tokens.push_back(tok);
            if (!line.tokens.empty()) {
                line.number = number_;
                return true;
            }
        }
        return false;
    }

    [[noreturn]] void fail(int line, const std::string& msg) const
    {
        throw ValidationError(path_.string() + ":" + std::to_string(line) + ": " + msg);
    }
    [[noreturn]] void fail_eof(const std::string& what) const
    {
        throw ValidationError(path_.string() + ":" + std::to_string(number_) +
                              ": unexpected end of file, expected " + what);
    }

private:
    std::filesystem::path path_;
    std::ifstream in_;
    int number_ = 0;
};

double parse_double(const LineReader& r, const Line& line, const std::string& tok)
{
    double v = 0.0;
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        r.fail(line.number, "invalid number '" + tok + "'");
    }
    return v;
}

long long parse_int(const LineReader& r, const Line& line, const std::string& tok)
{
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        r.fail(line.number, "invalid integer '" + tok + "'");
    }
    return v;
}

Triangle parse_face(const LineReader& r, const Line& line, std::size_t first_index,
                    const std::vector<Point3>& vertices)
{
    if (line.tokens.size() < first_index + 1) r.fail(line.number, "empty face");
    const long long k = parse_int(r, line, line.tokens[first_index]);
    if (k != 3) r.fail(line.number, "only triangles are supported (face has " + std::to_string(k) + " vertices)");
    if (line.tokens.size() < first_index + 4) r.fail(line.number, "face lists fewer than 3 indices");
    Triangle t{};
    for (int c = 0; c < 3; ++c) {
        const long long idx = parse_int(r, line, line.tokens[first_index + 1 + c]);
        if (idx < 0 || idx >= static_cast<long long>(vertices.size())) {
            r.fail(line.number, "vertex index " + std::to_string(idx) + " out of range [0, " +
                                    std::to_string(vertices.size()) + ")");
        }
        t[c] = static_cast<int>(idx);
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) r.fail(line.number, "degenerate face");
    const double area =
        0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    if (!(area > kMinTriangleArea)) r.fail(line.number, "degenerate face (zero area)");
    return t;
}

SurfaceMesh load_off(const std::filesystem::path& path)
{
    LineReader r(path);
    Line line;
    if (!r.next(line)) r.fail_eof("OFF header");
    std::vector<std::string> counts;
    if (line.tokens[0] != "OFF") r.fail(line.number, "missing OFF header");
    counts.assign(line.tokens.begin() + 1, line.tokens.end());
    int count_line = line.number;
    if (counts.empty()) {
        if (!r.next(line)) r.fail_eof("vertex/face counts");
        counts = line.tokens;
        count_line = line.number;
    }
    if (counts.size() < 2) r.fail(count_line, "expected vertex and face counts");
    Line count_info{counts, count_line};
    const long long nv = parse_int(r, count_info, counts[0]);
    const long long nf = parse_int(r, count_info, counts[1]);
    if (nv < 0 || nf < 0) r.fail(count_line, "negative element count");

    std::vector<Point3> vertices;
    vertices.reserve(static_cast<std::size_t>(nv));
    for (long long i = 0; i < nv; ++i) {
        if (!r.next(line)) r.fail_eof("vertex " + std::to_string(i));
        if (line.tokens.size() < 3) r.fail(line.number, "vertex needs 3 coordinates");
        vertices.emplace_back(parse_double(r, line, line.tokens[0]), parse_double(r, line, line.tokens[1]),
                              parse_double(r, line, line.tokens[2]));
    }
    std::vector<Triangle> tris;
    tris.reserve(static_cast<std::size_t>(nf));
    for (long long f = 0; f < nf; ++f) {
        if (!r.next(line)) r.fail_eof("face " + std::to_string(f));
        tris.push_back(parse_face(r, line, 0, vertices));
    }
    return SurfaceMesh(std::move(vertices), std::move(tris));
}

SurfaceMesh load_ply(const std::filesystem::path& path)
{
    LineReader r(path);
    Line line;
    if (!r.next_raw(line) || line.tokens[0] != "ply") r.fail(1, "missing ply magic");

    long long nv = -1;
    long long nf = -1;
    std::vector<std::string> vertex_props;
    std::string current;
    bool ended = false;
    while (r.next_raw(line)) {
        const auto& t = line.tokens;
        if (t[0] == "comment" || t[0] == "obj_info") continue;
        if (t[0] == "format") {
            if (t.size() < 2 || t[1] != "ascii") r.fail(line.number, "only ASCII PLY is supported");
        } else if (t[0] == "element") {
            if (t.size() < 3) r.fail(line.number, "malformed element line");
            current = t[1];
            Line tmp{t, line.number};
            if (current == "vertex") nv = parse_int(r, tmp, t[2]);
            else if (current == "face") nf = parse_int(r, tmp, t[2]);
            else r.fail(line.number, "unsupported element '" + current + "'");
        } else if (t[0] == "property") {
            if (current == "vertex") {
                if (t.size() < 3) r.fail(line.number, "malformed property line");
                vertex_props.push_back(t.back());
            } else if (current == "face") {
                if (t.size() < 5 || t[1] != "list") r.fail(line.number, "face property must be a list");
            }
        } else if (t[0] == "end_header") {
            ended = true;
            break;
        } else {
            r.fail(line.number, "unexpected header keyword '" + t[0] + "'");
        }
    }
    if (!ended) r.fail_eof("end_header");
    if (nv < 0 || nf < 0) r.fail(line.number, "header must declare vertex and face elements");

    auto prop_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(vertex_props.begin(), vertex_props.end(), name);
        if (it == vertex_props.end()) r.fail(line.number, "vertex property '" + name + "' missing");
        return static_cast<std::size_t>(it - vertex_props.begin());
    };
    const std::size_t ix = prop_index("x");
    const std::size_t iy = prop_index("y");
    const std::size_t iz = prop_index("z");

    std::vector<Point3> vertices;
    vertices.reserve(static_cast<std::size_t>(nv));
    for (long long i = 0; i < nv; ++i) {
        if (!r.next(line)) r.fail_eof("vertex " + std::to_string(i));
        if (line.tokens.size() < vertex_props.size()) r.fail(line.number, "too few vertex properties");
        vertices.emplace_back(parse_double(r, line, line.tokens[ix]), parse_double(r, line, line.tokens[iy]),
                              parse_double(r, line, line.tokens[iz]));
    }
    std::vector<Triangle> tris;
    tris.reserve(static_cast<std::size_t>(nf));
    for (long long f = 0; f < nf; ++f) {
        if (!r.next(line)) r.fail_eof("face " + std::to_string(f));
        tris.push_back(parse_face(r, line, 0, vertices));
    }
    return SurfaceMesh(std::move(vertices), std::move(tris));
}

std::string extension_of(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

void write_point(std::FILE* f, const Point3& p)
{
    std::fprintf(f, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
}

} // namespace

SurfaceMesh load_mesh(const std::filesystem::path& path)
{
    const std::string ext = extension_of(path);
    if (ext == ".off") return load_off(path);
    if (ext == ".ply") return load_ply(path);
    throw ValidationError("unsupported mesh extension '" + ext + "' (" + path.string() + ")");
}

void save_mesh(const SurfaceMesh& mesh, const std::filesystem::path& path)
{
    const std::string ext = extension_of(path);
    if (ext != ".off" && ext != ".ply") {
        throw ValidationError("unsupported mesh extension '" + ext + "' (" + path.string() + ")");
    }
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) {
        throw ValidationError("cannot write " + path.string());
    }
    if (ext == ".off") {
        std::fprintf(f, "OFF\n%zu %zu 0\n", mesh.vertex_count(), mesh.triangle_count());
    } else {
        std::fprintf(f,
                     "ply\nformat ascii 1.0\nelement vertex %zu\nproperty double x\n"
                     "property double y\nproperty double z\nelement face %zu\n"
                     "property list uchar int vertex_indices\nend_header\n",
                     mesh.vertex_count(), mesh.triangle_count());
    }
    for (const auto& v : mesh.vertices()) write_point(f, v);
    for (const auto& t : mesh.triangles()) std::fprintf(f, "3 %d %d %d\n", t[0], t[1], t[2]);
    const bool ok = std::ferror(f) == 0;
    std::fclose(f);
    if (!ok) {
        throw ValidationError("write failed for " + path.string());
    }
}

} // namespace lungdeform
