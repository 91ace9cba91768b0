#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lungdeform/case_io.hpp"
#include "lungdeform/config.hpp"
#include "lungdeform/crossval.hpp"
#include "lungdeform/errors.hpp"
#include "lungdeform/mesh_io.hpp"
#include "lungdeform/mesh_ops.hpp"
#include "lungdeform/procrustes.hpp"
#include "lungdeform/report.hpp"
#include "test_support.hpp"

TEST_SUITE_BEGIN("pipeline");

using namespace lungdeform;
using namespace lungdeform::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("lungdeform_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("mesh files round-trip bitwise")
{
    const fs::path dir = scratch("io");
    SplitMix64 rng(1);
    const SurfaceMesh m = jitter(generate_lung_like_mesh(3, 300), rng, 1e-3);
    for (const char* ext : {".off", ".ply"}) {
        const fs::path p = dir / (std::string("m") + ext);
        save_mesh(m, p);
        const SurfaceMesh back = load_mesh(p);
        CHECK(back.vertices() == m.vertices());
        CHECK(back.triangles() == m.triangles());
    }
    CHECK_THROWS_AS(save_mesh(m, dir / "m.stl"), ValidationError);
    CHECK_THROWS_AS(load_mesh(dir / "missing.off"), ValidationError);
}

TEST_CASE("unit cube fixture")
{
    const SurfaceMesh cube = load_mesh(fs::path(LUNGDEFORM_FIXTURES) / "unit_cube.off");
    CHECK(cube.vertex_count() == 8);
    CHECK(cube.triangle_count() == 12);
    CHECK(mesh_volume(cube).value == 1.0);
}

TEST_CASE("malformed mesh files name the line")
{
    const fs::path dir = scratch("bad");
    write(dir / "range.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "range.off"), doctest::Contains("range.off:6:"), ValidationError);
    write(dir / "quad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "quad.off"), doctest::Contains("quad.off:7:"), ValidationError);
    write(dir / "num.off", "OFF\n3 1 0\n0 0 0\n1 x 0\n0 1 0\n3 0 1 2\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "num.off"), doctest::Contains("num.off:4:"), ValidationError);
    write(dir / "short.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n");
    CHECK_THROWS_AS(load_mesh(dir / "short.off"), ValidationError);
    write(dir / "bin.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
    CHECK_THROWS_AS(load_mesh(dir / "bin.ply"), ValidationError);
}

TEST_CASE("rigid alignment examples")
{
    const std::vector<Point3> f{{0, 0, 0}, {10, 0, 0}, {0, 7, 0}, {3, 4, 9}};
    auto t = fit_rigid(f, f);
    CHECK((t.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-10);
    CHECK(t.translation.norm() < 1e-10);

    // moving = fixed rotated 30 degrees about z and shifted by (5,0,0).
    const Eigen::Matrix3d r = Eigen::AngleAxisd(M_PI / 6, Vec3::UnitZ()).toRotationMatrix();
    std::vector<Point3> moving;
    for (const auto& p : f) moving.push_back(r * p + Vec3(5, 0, 0));
    t = fit_rigid(f, moving);
    // The recovered transform undoes the known one.
    CHECK((t.rotation - r.transpose()).norm() < 1e-9);
    CHECK((t.translation - (-(r.transpose() * Vec3(5, 0, 0)))).norm() < 1e-9);
    const auto inv = t.inverse();
    CHECK((inv.rotation - r).norm() < 1e-9);
    CHECK((inv.translation - Vec3(5, 0, 0)).norm() < 1e-9);

    const std::vector<Point3> line{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {5, 5, 5}};
    CHECK_THROWS_WITH_AS(fit_rigid(line, line), "degenerate landmark configuration", ValidationError);
    CHECK_THROWS_AS(fit_rigid(std::vector<Point3>(f.begin(), f.begin() + 2),
                              std::vector<Point3>(f.begin(), f.begin() + 2)),
                    ValidationError);

    const SurfaceMesh cube = unit_cube();
    const auto aligned = rigid_align(cube, f, moving);
    CHECK(aligned.aligned.vertex_count() == 8);
}

TEST_CASE("property: noisy landmarks give a small residual and a proper rotation")
{
    double worst_rms = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SplitMix64 rng(seed);
        std::vector<Point3> fixed, moving;
        const Eigen::Matrix3d r = random_rotation(rng);
        const Vec3 t = random_vec(rng, 50);
        for (int k = 0; k < 6; ++k) {
            const Point3 p = random_vec(rng, 60);
            fixed.push_back(p);
            // Box-Muller noise, sigma 0.1 mm per axis.
            Vec3 noise;
            for (int a = 0; a < 3; ++a) {
                const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
                noise[a] = 0.1 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * M_PI * u2);
            }
            moving.push_back(r * p + t + noise);
        }
        const auto fit = fit_rigid(fixed, moving);
        REQUIRE((fit.rotation.transpose() * fit.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
        REQUIRE(std::abs(fit.rotation.determinant() - 1.0) <= 1e-12);
        double ss = 0.0;
        for (std::size_t k = 0; k < fixed.size(); ++k) ss += (fit.apply(moving[k]) - fixed[k]).squaredNorm();
        worst_rms = std::max(worst_rms, std::sqrt(ss / fixed.size()));
    }
    CHECK(worst_rms <= 0.3);
}

TEST_CASE("reflections are never returned")
{
    const std::vector<Point3> f{{0, 0, 0}, {10, 0, 0}, {0, 7, 0}, {3, 4, 9}};
    std::vector<Point3> mirrored;
    for (const auto& p : f) mirrored.emplace_back(-p.x(), p.y(), p.z());
    const auto t = fit_rigid(f, mirrored);
    CHECK(t.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("config parsing")
{
    const Config d = parse_config("");
    CHECK(d.kernel.lambda == 0.1);
    CHECK(d.registration.clip_weight == 1.0);
    CHECK(d.synthetic.n_cases == 12);

    const Config from_doc = parse_config(default_config_yaml());
    CHECK(from_doc.kernel.lambda == d.kernel.lambda);
    CHECK(from_doc.kernel.beta.has_value() == d.kernel.beta.has_value());
    CHECK(from_doc.kernel.beta_scale == d.kernel.beta_scale);
    CHECK(from_doc.kernel.interior_neighbors == d.kernel.interior_neighbors);
    CHECK(from_doc.kernel.sampling_n == d.kernel.sampling_n);
    CHECK(from_doc.registration.max_iterations == d.registration.max_iterations);
    CHECK(from_doc.registration.convergence_tol == d.registration.convergence_tol);
    CHECK(from_doc.synthetic.ranges.rotation_deg.hi == d.synthetic.ranges.rotation_deg.hi);
    CHECK(from_doc.crossval.threads == d.crossval.threads);

    const Config c = parse_config("kernel:\n  lambda: 0.5\n  beta: 2.0\n  mode: per-patient\n"
                                  "crossval:\n  correspondence: registration\n  threads: 3\n");
    CHECK(c.kernel.lambda == 0.5);
    CHECK(*c.kernel.beta == 2.0);
    CHECK(c.kernel.mode == LearningMode::PerPatient);
    CHECK(c.crossval.correspondence == CorrespondenceSource::Registration);
    CHECK(c.crossval.threads == 3);

    CHECK_THROWS_AS(parse_config("kernel:\n  lamda: 0.5\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("registration:\n  max_iterations: 0\n"), ValidationError);
    CHECK_THROWS_AS(parse_config("kernel: [1, 2\n"), ValidationError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), ValidationError);
}

TEST_CASE("report rounding")
{
    CHECK(round_for_report(0.12345649) == 0.123456);
    CHECK(round_for_report(-1e-9) == 0.0);
    CHECK(!std::signbit(round_for_report(-1e-9)));
    const Summary s = summarize({1.0, 2.0, 6.0});
    CHECK(s.mean == 3.0);
    CHECK(s.min == 1.0);
    CHECK(s.max == 6.0);
    CHECK(format_summary(s, 1) == "3.0 (1.0 - 6.0)");
    CHECK(summarize({}).count == 0);
}

TEST_CASE("case directories round-trip")
{
    const fs::path dir = scratch("cases");
    const auto syn = make_dataset(3, 4, {}, 300);
    save_dataset(syn, dir);
    const auto loaded = load_dataset(dir);
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(loaded[i].id == syn[i].id);
        CHECK(loaded[i].inflated.vertices() == syn[i].inflated.vertices());
        CHECK(loaded[i].deflated.vertices() == syn[i].deflated.vertices());
        CHECK(loaded[i].truth_field->vectors() == syn[i].truth_field.vectors());
        CHECK(loaded[i].interior->points == syn[i].interior.points);
        CHECK(loaded[i].interior_deflated == syn[i].interior_deflated);
        CHECK(loaded[i].params->seed == syn[i].params.seed);
        CHECK(loaded[i].params->rotation_deg == syn[i].params.rotation_deg);
        REQUIRE(loaded[i].clips.size() == 2);
        CHECK(loaded[i].clips[0].target_pos == syn[i].clips[0].target_pos);
        CHECK(loaded[i].clips[0].source_anchor.triangle == syn[i].clips[0].source_anchor.triangle);
    }

    // Fail fast: a broken file anywhere aborts the load with its path.
    write(dir / "case_02" / "truth_field.csv", "vertex,dx,dy,dz\n0,1,2\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("truth_field.csv:2"), ValidationError);
    fs::remove(dir / "case_01" / "deflated.off");
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("deflated.off"), ValidationError);
}

TEST_CASE("kernel model artifact round-trips")
{
    const fs::path dir = scratch("model");
    const auto syn = make_dataset(2, 4, {}, 200);
    std::vector<TrainingCase> cases;
    for (const auto& c : syn) cases.push_back({c.id, c.inflated, c.truth_field});
    const auto model = train(cases, fixed_id_scheme(cases[0].inflated, 8), LearningMode::PerRegion, FitOptions{});
    save_kernel_model(model, dir / "model.json");
    const auto back = load_kernel_model(dir / "model.json");
    CHECK(back.features == model.features);
    CHECK(back.alpha == model.alpha);
    CHECK(back.beta == model.beta);
    CHECK(back.lambda == model.lambda);
    CHECK(back.sampling.reference_ids == model.sampling.reference_ids);
    CHECK(back.sampling.spare_id == model.sampling.spare_id);
    CHECK(back.mode == model.mode);
    CHECK(predict(back, cases[1].inflated).vectors() == predict(model, cases[1].inflated).vectors());

    write(dir / "bad.json", "{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_kernel_model(dir / "bad.json"), ValidationError);
}

TEST_CASE("energy trace csv header")
{
    const fs::path dir = scratch("trace");
    save_energy_trace_csv({{0, {3.0, 1.0, 1.5, 0.5}}}, dir / "t.csv");
    std::ifstream in(dir / "t.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "iteration,E,E_shape,E_clip,E_laplacian");
    CHECK(row == "0,3,1,1.5,0.5");
}

TEST_CASE("cross-validation on identical cases predicts each case exactly")
{
    // Sanity check only: every training case equals the held-out one.
    const auto base = make_dataset(1, 3, {}, 200)[0];
    std::vector<CaseData> cases;
    for (int i = 0; i < 3; ++i) {
        CaseData c = to_case_data(base);
        c.id = "copy_" + std::to_string(i);
        cases.push_back(c);
    }
    Config cfg;
    cfg.kernel.sampling_n = 8;
    const auto r = run_crossval(cases, cfg);
    REQUIRE(r.folds.size() == 3);
    // Ridge shrinkage (lambda 0.1) leaves a small residual.
    for (const auto& f : r.folds) CHECK(f.volume_ratio_error < 5e-3);
}

TEST_CASE("property: cross-validation report invariants")
{
    const auto syn = make_dataset(4, 21, {}, 200);
    std::vector<CaseData> cases;
    for (const auto& c : syn) cases.push_back(to_case_data(c));
    cases[3].interior.reset();
    cases[3].interior_deflated.clear();

    Config cfg;
    cfg.kernel.sampling_n = 8;
    const auto r1 = run_crossval(cases, cfg);
    REQUIRE(r1.folds.size() == cases.size());
    CHECK(r1.consistent());
    for (const auto& f : r1.folds) {
        CHECK(std::find(f.training_ids.begin(), f.training_ids.end(), f.held_out) == f.training_ids.end());
        CHECK(f.training_ids.size() == cases.size() - 1);
        CHECK(f.clip_tre_mm.size() == 2);
    }
    CHECK_FALSE(r1.folds[3].interior_error_mm.has_value());
    CHECK(r1.notes.size() == 1);

    // Aggregates recomputable from the rows.
    double sum = 0.0;
    for (const auto& f : r1.folds) sum += f.volume_ratio_error;
    CHECK(r1.volume_ratio_error.mean == doctest::Approx(sum / 4).epsilon(1e-15));

    // Deterministic, and independent of thread count and input order.
    cfg.crossval.threads = 3;
    auto shuffled = cases;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto r2 = run_crossval(shuffled, cfg);
    CHECK(to_json(r1) == to_json(r2));
    CHECK(to_text(r1) == to_text(r2));

    auto tampered = r1;
    tampered.folds[0].md_mm += 1.0;
    CHECK_FALSE(tampered.consistent());

    CHECK_THROWS_AS(run_crossval({cases[0]}, cfg), ValidationError);
    auto dup = cases;
    dup[1].id = dup[0].id;
    CHECK_THROWS_AS(run_crossval(dup, cfg), ValidationError);
}

TEST_CASE("cross-validation with frame normalization stays rotation independent")
{
    const auto syn = make_dataset(3, 5, {}, 200);
    std::vector<CaseData> cases, turned;
    SplitMix64 rng(2);
    for (const auto& c : syn) {
        cases.push_back(to_case_data(c));
        // The same case seen in an arbitrary scanner frame.
        const Eigen::Matrix3d r = random_rotation(rng);
        const Vec3 t = random_vec(rng, 40);
        CaseData d = to_case_data(c);
        d.inflated = rigid(c.inflated, r, t);
        d.deflated = rigid(c.deflated, r, t);
        std::vector<Vec3> f;
        for (const auto& v : c.truth_field.vectors()) f.push_back(r * v);
        d.truth_field = DisplacementField(f);
        d.clips.clear();
        for (const auto& clip : c.clips) d.clips.push_back(make_landmark(d.inflated, r * clip.source_pos + t, r * clip.target_pos + t));
        for (auto& p : d.interior->points) p = r * p + t;
        for (auto& p : d.interior_deflated) p = r * p + t;
        turned.push_back(d);
    }
    Config cfg;
    cfg.kernel.sampling_n = 8;
    cfg.crossval.normalize_frame = true;
    const auto a = run_crossval(cases, cfg);
    const auto b = run_crossval(turned, cfg);
    for (std::size_t k = 0; k < a.folds.size(); ++k) {
        CHECK(a.folds[k].volume_ratio_error == doctest::Approx(b.folds[k].volume_ratio_error).epsilon(1e-6));
        CHECK(a.folds[k].md_mm == doctest::Approx(b.folds[k].md_mm).epsilon(1e-6));
    }
}
TEST_SUITE_END();
