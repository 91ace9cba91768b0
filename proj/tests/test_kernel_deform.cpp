#include <doctest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "lungdeform/errors.hpp"
#include "lungdeform/kernel_deform.hpp"
#include "lungdeform/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

TEST_SUITE_BEGIN("kernel_deform");

using namespace lungdeform;
using namespace lungdeform::testing;

namespace {

Eigen::MatrixXd random_matrix(SplitMix64& rng, Eigen::Index r, Eigen::Index c, double s)
{
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-s, s);
    return m;
}

std::vector<TrainingCase> cases_from(const std::vector<SyntheticCase>& syn)
{
    std::vector<TrainingCase> out;
    for (const auto& c : syn) out.push_back({c.id, c.inflated, c.truth_field});
    return out;
}

} // namespace

TEST_CASE("gaussian kernel examples")
{
    Eigen::VectorXd a(3), b(3);
    a << 1, 2, 3;
    CHECK(gaussian_kernel(a, a, 0.7, 5) == 1.0);
    b << 1, 2, 4;
    CHECK(gaussian_kernel(a, b, 1.0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
    b << 2, 3, 3; // |a - b|^2 = 2
    CHECK(gaussian_kernel(a, b, 3.0, 6) == doctest::Approx(0.367879441171).epsilon(1e-12));
    CHECK(gaussian_kernel(a, b, 3.0, 6, false) == doctest::Approx(std::exp(-6.0)).epsilon(1e-12));
    Eigen::VectorXd c(2);
    CHECK_THROWS_AS(gaussian_kernel(a, c, 1.0, 1), ValidationError);
}

TEST_CASE("feature extraction examples")
{
    const SurfaceMesh m({{0, 0, 0}, {1, 2, 3}, {0, 1, 0}, {1, 0, 0}}, {{{0, 2, 1}}, {{0, 1, 3}}, {{0, 3, 2}}, {{1, 2, 3}}});
    SamplingScheme s;
    s.n = 1;
    s.reference_ids = {0};
    s.spare_id = 2;
    const auto f = extract_features(m, s);
    CHECK(f.values.row(1).transpose() == Eigen::Vector3d(1, 2, 3));
    CHECK(f.values.row(0).transpose() == Eigen::Vector3d(0, -1, 0)); // owner 0 uses the spare
    CHECK(f.dimension() == 3);

    SamplingScheme bad = s;
    bad.reference_ids = {9};
    CHECK_THROWS_AS(extract_features(m, bad), ValidationError);
}

TEST_CASE("property: sampled indices never contain the owner")
{
    const SurfaceMesh m = generate_lung_like_mesh(3, 300);
    const auto fixed = fixed_id_scheme(m, 32);
    const auto nearest = nearest_k_scheme(12);
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        for (const auto* s : {&fixed, &nearest}) {
            const auto ids = sampled_indices(m, *s, static_cast<int>(i));
            REQUIRE(ids.size() == static_cast<std::size_t>(s->n));
            REQUIRE(std::find(ids.begin(), ids.end(), static_cast<int>(i)) == ids.end());
        }
    }
}

TEST_CASE("property: features are translation invariant and rotation equivariant")
{
    SplitMix64 rng(8);
    const SurfaceMesh m = generate_lung_like_mesh(4, 300);
    const auto s = fixed_id_scheme(m, 16);
    const auto f = extract_features(m, s).values;
    const Eigen::Matrix3d r = random_rotation(rng);
    const Vec3 t = random_vec(rng, 80);
    const auto ft = extract_features(rigid(m, Eigen::Matrix3d::Identity(), t), s).values;
    const auto fr = extract_features(rigid(m, r, t), s).values;
    CHECK((ft - f).cwiseAbs().maxCoeff() < 1e-10);
    for (Eigen::Index i = 0; i < f.rows(); ++i)
        for (int k = 0; k < s.n; ++k) {
            const Eigen::Vector3d a = f.block<1, 3>(i, 3 * k).transpose();
            const Eigen::Vector3d b = fr.block<1, 3>(i, 3 * k).transpose();
            REQUIRE((b - r * a).norm() < 1e-10);
        }
}

TEST_CASE("fit examples on a single sample")
{
    Eigen::MatrixXd X(1, 6);
    X << 1, 2, 3, 4, 5, 6;
    Eigen::MatrixXd Y(1, 3);
    Y << 0.5, -1.0, 2.0;
    FitOptions o;
    o.lambda = 0.0;
    auto m = fit(X, Y, o);
    CHECK((m.alpha - Y).norm() < 1e-15);
    CHECK((predict_rows(m, X) - Y).norm() < 1e-15);
    o.lambda = 0.1;
    m = fit(X, Y, o);
    CHECK((m.alpha - Y / 1.1).norm() < 1e-15);
    CHECK(m.lambda == 0.1);
}

TEST_CASE("fit matches a derivative-free minimization of the ridge cost")
{
    SplitMix64 rng(2024);
    const Eigen::MatrixXd X = random_matrix(rng, 5, 96, 30.0);
    const Eigen::MatrixXd Y = random_matrix(rng, 5, 3, 10.0);
    FitOptions o;
    const auto model = fit(X, Y, o);
    const Eigen::MatrixXd K = kernel_matrix(X, model.beta, model.divide_by_n);
    for (int c = 0; c < 3; ++c) {
        const Eigen::VectorXd y = Y.col(c);
        auto cost = [&](const Eigen::VectorXd& a) { return ridge_cost(K, y, a, o.lambda); };
        const Eigen::VectorXd a = minimize_by_parabolas(cost, Eigen::VectorXd::Zero(5));
        CHECK((a - model.alpha.col(c)).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("singular systems are reported")
{
    Eigen::MatrixXd X(2, 3);
    X << 1, 2, 3, 1, 2, 3;
    Eigen::MatrixXd Y(2, 3);
    Y << 1, 0, 0, 0, 1, 0;
    FitOptions o;
    o.lambda = 0.0;
    o.beta = 1.0;
    CHECK_THROWS_WITH_AS(fit(X, Y, o), "singular system, increase lambda", NumericalError);
    o.lambda = 0.1;
    CHECK_NOTHROW(fit(X, Y, o));
}

TEST_CASE("property: ridge invariants on random problems")
{
    SplitMix64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(40));
        const Eigen::MatrixXd X = random_matrix(rng, n, 24, 20.0);
        const Eigen::MatrixXd Y = random_matrix(rng, n, 3, 5.0);
        FitOptions o;
        o.lambda = rng.uniform(0.01, 1.0);
        const auto model = fit(X, Y, o);
        const Eigen::MatrixXd K = kernel_matrix(X, model.beta, model.divide_by_n);

        // Symmetric, unit diagonal, min eigenvalue of K + lambda I >= lambda.
        REQUIRE((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((K.diagonal().array() == 1.0).all());
        Eigen::MatrixXd A = K;
        A.diagonal().array() += o.lambda;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        REQUIRE(es.eigenvalues().minCoeff() >= o.lambda - 1e-12);

        // Residual.
        REQUIRE((A * model.alpha - Y).norm() <= 1e-8 * Y.norm());

        // Local minimality along random directions.
        for (int c = 0; c < 3; ++c) {
            const Eigen::VectorXd a = model.alpha.col(c);
            const double e0 = ridge_cost(K, Y.col(c), a, o.lambda);
            for (int k = 0; k < 20; ++k) {
                Eigen::VectorXd d = random_matrix(rng, n, 1, 1.0);
                d /= d.norm();
                REQUIRE(e0 <= ridge_cost(K, Y.col(c), a + 1e-3 * d, o.lambda));
            }
        }

        // Monotone regularization.
        FitOptions o2 = o;
        o2.beta = model.beta;
        o2.lambda = 2.0 * o.lambda;
        const auto stiffer = fit(X, Y, o2);
        for (int c = 0; c < 3; ++c) REQUIRE(model.alpha.col(c).norm() >= stiffer.alpha.col(c).norm());
    }
}

TEST_CASE("exact interpolation at lambda zero")
{
    SplitMix64 rng(5);
    const Eigen::MatrixXd X = random_matrix(rng, 20, 96, 30.0);
    const Eigen::MatrixXd Y = random_matrix(rng, 20, 3, 10.0);
    FitOptions o;
    o.lambda = 0.0;
    const auto model = fit(X, Y, o);
    CHECK((predict_rows(model, X) - Y).cwiseAbs().maxCoeff() <= 1e-8);

    const Eigen::MatrixXd far = X.array() + 1e6;
    CHECK(predict_rows(model, far).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("training set sizes and self-reproduction")
{
    const auto syn = make_dataset(3, 5, {}, 500);
    const auto cases = cases_from(syn);
    const auto s = fixed_id_scheme(cases[0].inflated, 32);
    const auto region = build_training_set(cases, s, LearningMode::PerRegion);
    CHECK(region.X.rows() == 3 * static_cast<Eigen::Index>(cases[0].inflated.vertex_count()));
    CHECK(region.X.cols() == 96);
    const auto patient = build_training_set(cases, s, LearningMode::PerPatient);
    CHECK(patient.X.rows() == 3);

    // Neighboring vertex features are nearly collinear; at the heuristic width
    // K is singular to rounding, so interpolation uses a 16x narrower kernel.
    FitOptions o;
    o.lambda = 0.0;
    o.beta_scale = 16.0;
    const auto model = train({cases[0]}, s, LearningMode::PerRegion, o);
    const auto pred = predict(model, cases[0].inflated);
    double worst = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) worst = std::max(worst, (pred[i] - cases[0].displacement[i]).norm());
    CHECK(worst <= 1e-8);

    // Per-patient round trip on the training cases.
    o.beta_scale = 1.0;
    const auto pm = train(cases, s, LearningMode::PerPatient, o);
    const auto pp = predict(pm, cases[1].inflated);
    for (std::size_t i = 0; i < pp.size(); ++i) REQUIRE((pp[i] - cases[1].displacement[i]).norm() <= 1e-8);

    auto mismatched = cases;
    mismatched[1].inflated = generate_lung_like_mesh(3, 300);
    mismatched[1].displacement = DisplacementField::zeros(mismatched[1].inflated.vertex_count());
    CHECK_THROWS_AS(build_training_set(mismatched, s, LearningMode::PerRegion), ValidationError);
}

TEST_CASE("property: predictions are translation invariant")
{
    const auto syn = make_dataset(3, 9, {}, 300);
    const auto cases = cases_from(syn);
    const auto s = fixed_id_scheme(cases[0].inflated, 32);
    const auto model = train({cases[0], cases[1]}, s, LearningMode::PerRegion, FitOptions{});
    const auto a = predict(model, cases[2].inflated);
    const auto b = predict(model, rigid(cases[2].inflated, Eigen::Matrix3d::Identity(), Vec3(30, -20, 55)));
    for (std::size_t i = 0; i < a.size(); ++i) REQUIRE((a[i] - b[i]).norm() < 1e-9);
    CHECK_THROWS_AS(predict(model, generate_lung_like_mesh(1, 200)), ValidationError);
}

TEST_CASE("learning mode names round-trip")
{
    for (auto m : {LearningMode::PerRegion, LearningMode::PerPatient}) CHECK(learning_mode_from_string(to_string(m)) == m);
    for (auto m : {SamplingScheme::Mode::FixedIds, SamplingScheme::Mode::NearestK})
        CHECK(sampling_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(learning_mode_from_string("per-organ"), ValidationError);
}

TEST_CASE("interior interpolation examples")
{
    const SurfaceMesh m = generate_lung_like_mesh(2, 300);
    const Vec3 t(1, -2, 3);
    InteriorPointSet pts;
    pts.points = {Point3(0, 0, 0), Point3(5, 5, 5), m.vertex(7)};
    const auto out = interpolate_interior(m, DisplacementField(std::vector<Vec3>(m.vertex_count(), t)), pts);
    for (const auto& d : out) CHECK((d - t).norm() < 1e-12);

    std::vector<Vec3> f(m.vertex_count());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = Vec3(double(i), 0, 0);
    const auto snapped = interpolate_interior(m, DisplacementField(f), pts);
    CHECK(snapped[2] == f[7]);

    CHECK(interpolate_interior(m, DisplacementField(f), InteriorPointSet{}).empty());
}

TEST_CASE("linear surface field reaches the interior of a convex mesh")
{
    SurfaceMesh s = geodesic_sphere(7);
    std::vector<Point3> v = s.vertices();
    for (auto& p : v) p *= 60.0;
    s = s.with_vertices(v);
    SplitMix64 rng(5);
    Eigen::Matrix3d a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = rng.uniform(-0.1, 0.1);
    const Vec3 b(4, -3, 2);
    std::vector<Vec3> f;
    double magnitude = 0.0;
    for (const auto& p : v) {
        f.push_back(a * p + b);
        magnitude = std::max(magnitude, f.back().norm());
    }
    InteriorPointSet pts;
    while (pts.points.size() < 200) {
        const Vec3 p = random_vec(rng, 60.0);
        if (p.norm() < 54.0) pts.points.push_back(p);
    }
    const auto out = interpolate_interior(s, DisplacementField(f), pts);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        worst = std::max(worst, (out[i] - (a * pts.points[i] + b)).norm());
    }
    MESSAGE("worst interior error " << worst << " mm, field magnitude " << magnitude << " mm");
    CHECK(worst <= 0.1 * magnitude);
    CHECK_THROWS_AS(interpolate_interior(s, DisplacementField(f), pts, -1), ValidationError);
}

TEST_CASE("property: interior displacement is a convex combination of its neighbors")
{
    SplitMix64 rng(3);
    const SurfaceMesh m = generate_lung_like_mesh(6, 300);
    std::vector<Vec3> f(m.vertex_count());
    for (auto& v : f) v = random_vec(rng, 10.0);
    InteriorPointSet pts;
    for (int i = 0; i < 50; ++i) pts.points.push_back(random_vec(rng, 20.0));
    const int k = 8;
    const auto out = interpolate_interior(m, DisplacementField(f), pts, k);
    for (std::size_t p = 0; p < pts.points.size(); ++p) {
        // Recover the neighbors and check the result lies in their hull:
        // every linear functional is bounded by its extreme neighbor values.
        std::vector<int> idx(m.vertex_count());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            return (m.vertex(a) - pts.points[p]).squaredNorm() < (m.vertex(b) - pts.points[p]).squaredNorm();
        });
        for (int trial = 0; trial < 20; ++trial) {
            const Vec3 dir = random_vec(rng, 1.0);
            double lo = 1e300, hi = -1e300;
            for (int j = 0; j < k; ++j) {
                lo = std::min(lo, dir.dot(f[idx[j]]));
                hi = std::max(hi, dir.dot(f[idx[j]]));
            }
            const double v = dir.dot(out[p]);
            REQUIRE(v >= lo - 1e-12);
            REQUIRE(v <= hi + 1e-12);
        }
    }
}
TEST_SUITE_END();
