#include "lungdeform/kernel_deform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "lungdeform/errors.hpp"

namespace lungdeform {

void SamplingScheme::validate(std::size_t vertex_count) const
{
    if (n < 1) {
        throw ValidationError("sampling scheme needs n >= 1");
    }
    if (mode == Mode::NearestK) {
        if (static_cast<std::size_t>(n) + 1 > vertex_count) {
            throw ValidationError("nearest-k sampling needs more than n vertices");
        }
        return;
    }
    if (reference_ids.size() != static_cast<std::size_t>(n)) {
        throw ValidationError("fixed-ids scheme holds " + std::to_string(reference_ids.size()) +
                              " references, expected " + std::to_string(n));
    }
    auto check = [&](int id) {
        if (id < 0 || static_cast<std::size_t>(id) >= vertex_count) {
            throw ValidationError("sampled vertex index " + std::to_string(id) +
                                  " out of range for mesh with " + std::to_string(vertex_count) +
                                  " vertices");
        }
    };
    for (int id : reference_ids) check(id);
    check(spare_id);
    if (std::find(reference_ids.begin(), reference_ids.end(), spare_id) != reference_ids.end()) {
        throw ValidationError("spare vertex duplicates a reference vertex");
    }
}

SamplingScheme fixed_id_scheme(const SurfaceMesh& reference, int n)
{
    const auto count = reference.vertex_count();
    if (n < 1 || static_cast<std::size_t>(n) + 1 > count) {
        throw ValidationError("cannot pick " + std::to_string(n) + " references from " +
                              std::to_string(count) + " vertices");
    }
    const Point3 c = centroid(reference.vertices());
    std::vector<double> min_d(count, std::numeric_limits<double>::infinity());
    std::vector<int> picks;

    int next = 0;
    for (std::size_t i = 1; i < count; ++i) {
        if ((reference.vertex(i) - c).squaredNorm() > (reference.vertex(next) - c).squaredNorm()) {
            next = static_cast<int>(i);
        }
    }
    while (picks.size() < static_cast<std::size_t>(n) + 1) {
        picks.push_back(next);
        for (std::size_t i = 0; i < count; ++i) {
            min_d[i] = std::min(min_d[i], (reference.vertex(i) - reference.vertex(next)).squaredNorm());
        }
        next = 0;
        for (std::size_t i = 1; i < count; ++i) {
            if (min_d[i] > min_d[next]) next = static_cast<int>(i);
        }
    }

    SamplingScheme s;
    s.mode = SamplingScheme::Mode::FixedIds;
    s.n = n;
    s.reference_ids.assign(picks.begin(), picks.end() - 1);
    s.spare_id = picks.back();
    return s;
}

SamplingScheme nearest_k_scheme(int n)
{
    SamplingScheme s;
    s.mode = SamplingScheme::Mode::NearestK;
    s.n = n;
    return s;
}

std::vector<int> sampled_indices(const SurfaceMesh& m, const SamplingScheme& s, int owner)
{
    if (s.mode == SamplingScheme::Mode::FixedIds) {
        std::vector<int> ids = s.reference_ids;
        for (int& id : ids) {
            if (id == owner) id = s.spare_id;
        }
        return ids;
    }
    std::vector<int> others;
    others.reserve(m.vertex_count() - 1);
    for (std::size_t j = 0; j < m.vertex_count(); ++j) {
        if (static_cast<int>(j) != owner) others.push_back(static_cast<int>(j));
    }
    const Point3& v = m.vertex(static_cast<std::size_t>(owner));
    auto closer = [&](int a, int b) {
        const double da = (m.vertex(a) - v).squaredNorm();
        const double db = (m.vertex(b) - v).squaredNorm();
        return da < db || (da == db && a < b);
    };
    std::partial_sort(others.begin(), others.begin() + s.n, others.end(), closer);
    others.resize(static_cast<std::size_t>(s.n));
    return others;
}

FeatureSet extract_features(const SurfaceMesh& m, const SamplingScheme& s, const std::string& case_id)
{
    s.validate(m.vertex_count());
    const auto count = static_cast<Eigen::Index>(m.vertex_count());
    FeatureSet f;
    f.values.resize(count, 3 * s.n);
    f.owner_vertex.resize(static_cast<std::size_t>(count));
    f.owner_case.assign(static_cast<std::size_t>(count), case_id);
    for (Eigen::Index i = 0; i < count; ++i) {
        const int owner = static_cast<int>(i);
        const auto ids = sampled_indices(m, s, owner);
        const Point3& v = m.vertex(static_cast<std::size_t>(i));
        for (int k = 0; k < s.n; ++k) {
            f.values.block<1, 3>(i, 3 * k) = (v - m.vertex(static_cast<std::size_t>(ids[k]))).transpose();
        }
        f.owner_vertex[static_cast<std::size_t>(i)] = owner;
    }
    return f;
}

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& xi,
                       const Eigen::Ref<const Eigen::VectorXd>& xj, double beta, long N,
                       bool divide_by_n)
{
    if (xi.size() != xj.size()) {
        throw ValidationError("feature length mismatch: " + std::to_string(xi.size()) + " vs " +
                              std::to_string(xj.size()));
    }
    if (!(beta > 0.0) || N < 1) {
        throw ValidationError("gaussian kernel needs beta > 0 and N >= 1");
    }
    const double scale = divide_by_n ? beta / static_cast<double>(N) : beta;
    return std::exp(-scale * (xi - xj).squaredNorm());
}

std::string to_string(LearningMode mode)
{
    return mode == LearningMode::PerRegion ? "per-region" : "per-patient";
}

LearningMode learning_mode_from_string(const std::string& s)
{
    if (s == "per-region") return LearningMode::PerRegion;
    if (s == "per-patient") return LearningMode::PerPatient;
    throw ValidationError("unknown learning mode '" + s + "'");
}

std::string to_string(SamplingScheme::Mode mode)
{
    return mode == SamplingScheme::Mode::FixedIds ? "fixed-ids" : "nearest-k";
}

SamplingScheme::Mode sampling_mode_from_string(const std::string& s)
{
    if (s == "fixed-ids") return SamplingScheme::Mode::FixedIds;
    if (s == "nearest-k") return SamplingScheme::Mode::NearestK;
    throw ValidationError("unknown sampling mode '" + s + "'");
}

namespace {

// Squared distances between rows of A and rows of B via the Gram expansion.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B)
{
    const Eigen::VectorXd na = A.rowwise().squaredNorm();
    const Eigen::VectorXd nb = B.rowwise().squaredNorm();
    Eigen::MatrixXd D = -2.0 * (A * B.transpose());
    D.colwise() += na;
    D.rowwise() += nb.transpose();
    return D.cwiseMax(0.0);
}

double kernel_scale(double beta, Eigen::Index N, bool divide_by_n)
{
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ValidationError("kernel width beta must be > 0");
    }
    return divide_by_n ? beta / static_cast<double>(N) : beta;
}

} // namespace

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, double beta, bool divide_by_n)
{
    const Eigen::Index N = X.rows();
    const double scale = kernel_scale(beta, N, divide_by_n);
    Eigen::MatrixXd K = squared_distances(X, X);
    for (Eigen::Index j = 0; j < N; ++j) {
        K(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < N; ++i) {
            const double v = std::exp(-scale * K(i, j));
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& X, double beta,
                             bool divide_by_n)
{
    if (Q.cols() != X.cols()) {
        throw ValidationError("feature dimension mismatch: query " + std::to_string(Q.cols()) +
                              " vs model " + std::to_string(X.cols()));
    }
    const double scale = kernel_scale(beta, X.rows(), divide_by_n);
    return (-scale * squared_distances(Q, X)).array().exp().matrix();
}

double median_heuristic_beta(const Eigen::MatrixXd& X, bool divide_by_n, Eigen::Index max_samples)
{
    const Eigen::Index N = X.rows();
    if (N < 2) return 1.0;
    const Eigen::Index stride = std::max<Eigen::Index>(1, (N + max_samples - 1) / max_samples);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < N; i += stride) rows.push_back(i);
    std::vector<double> d2;
    d2.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t a = 0; a < rows.size(); ++a) {
        for (std::size_t b = a + 1; b < rows.size(); ++b) {
            d2.push_back((X.row(rows[a]) - X.row(rows[b])).squaredNorm());
        }
    }
    if (d2.empty()) return 1.0;
    auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
    std::nth_element(d2.begin(), mid, d2.end());
    const double median = *mid;
    if (!(median > 0.0)) return 1.0;
    return divide_by_n ? static_cast<double>(N) / median : 1.0 / median;
}

double ridge_cost(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& alpha,
                  double lambda)
{
    return (Y - K * alpha).squaredNorm() + lambda * (alpha.transpose() * K * alpha).trace();
}

KernelModel fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const FitOptions& options)
{
    const Eigen::Index N = X.rows();
    if (N < 1) {
        throw ValidationError("fit needs at least one training sample");
    }
    if (Y.rows() != N) {
        throw ValidationError("fit: " + std::to_string(N) + " features but " +
                              std::to_string(Y.rows()) + " targets");
    }
    if (!(options.lambda >= 0.0)) {
        throw ValidationError("lambda must be >= 0");
    }
    if (!X.allFinite() || !Y.allFinite()) {
        throw ValidationError("non-finite training data");
    }

    KernelModel model;
    model.lambda = options.lambda;
    model.divide_by_n = options.divide_by_n;
    model.beta = options.beta ? *options.beta
                              : options.beta_scale * median_heuristic_beta(X, options.divide_by_n);
    model.features = X;

    Eigen::MatrixXd A = kernel_matrix(X, model.beta, model.divide_by_n);
    A.diagonal().array() += options.lambda;

    const Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("singular system, increase lambda");
    }
    Eigen::MatrixXd alpha = llt.solve(Y);
    // One step of iterative refinement.
    alpha += llt.solve(Y - A * alpha);

    const double residual = (A * alpha - Y).norm();
    if (!alpha.allFinite() || residual > 1e-8 * Y.norm()) {
        throw NumericalError("singular system, increase lambda");
    }
    model.alpha = std::move(alpha);
    return model;
}

Eigen::MatrixXd predict_rows(const KernelModel& model, const Eigen::MatrixXd& queries)
{
    return cross_kernel(queries, model.features, model.beta, model.divide_by_n) * model.alpha;
}

namespace {

Eigen::MatrixXd flatten_rows(const Eigen::MatrixXd& m)
{
    // Row-major flattening: vertex 0's entries first.
    Eigen::MatrixXd out(1, m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.block(0, i * m.cols(), 1, m.cols()) = m.row(i);
    }
    return out;
}

} // namespace

DisplacementField predict(const KernelModel& model, const FeatureSet& features)
{
    std::vector<Vec3> out(static_cast<std::size_t>(features.size()));
    if (model.mode == LearningMode::PerRegion) {
        const Eigen::MatrixXd y = predict_rows(model, features.values);
        if (y.cols() != 3) {
            throw ValidationError("per-region model must predict 3 components");
        }
        for (Eigen::Index i = 0; i < y.rows(); ++i) out[static_cast<std::size_t>(i)] = y.row(i).transpose();
    } else {
        const Eigen::MatrixXd y = predict_rows(model, flatten_rows(features.values));
        if (y.cols() != 3 * features.size()) {
            throw ValidationError("per-patient model output does not match query vertex count");
        }
        for (Eigen::Index i = 0; i < features.size(); ++i) {
            out[static_cast<std::size_t>(i)] = y.block<1, 3>(0, 3 * i).transpose();
        }
    }
    return DisplacementField(std::move(out));
}

DisplacementField predict(const KernelModel& model, const SurfaceMesh& inflated)
{
    if (model.sampling.mode == SamplingScheme::Mode::FixedIds &&
        static_cast<int>(inflated.vertex_count()) != model.vertex_count) {
        throw ValidationError("mesh has " + std::to_string(inflated.vertex_count()) +
                              " vertices, model expects " + std::to_string(model.vertex_count));
    }
    return predict(model, extract_features(inflated, model.sampling));
}

TrainingSet build_training_set(const std::vector<TrainingCase>& cases, const SamplingScheme& s,
                               LearningMode mode)
{
    if (cases.empty()) {
        throw ValidationError("no training cases");
    }
    const auto v0 = cases.front().inflated.vertex_count();
    for (const auto& c : cases) {
        if (c.displacement.size() != c.inflated.vertex_count()) {
            throw ValidationError("case " + c.id + ": displacement length does not match mesh");
        }
        const bool needs_same_count =
            s.mode == SamplingScheme::Mode::FixedIds || mode == LearningMode::PerPatient;
        if (needs_same_count && c.inflated.vertex_count() != v0) {
            throw ValidationError("case " + c.id + " has " +
                                  std::to_string(c.inflated.vertex_count()) +
                                  " vertices; shared sampling needs " + std::to_string(v0));
        }
    }

    TrainingSet ts;
    if (mode == LearningMode::PerRegion) {
        Eigen::Index total = 0;
        for (const auto& c : cases) total += static_cast<Eigen::Index>(c.inflated.vertex_count());
        ts.X.resize(total, 3 * s.n);
        ts.Y.resize(total, 3);
        Eigen::Index row = 0;
        for (const auto& c : cases) {
            const FeatureSet f = extract_features(c.inflated, s, c.id);
            ts.X.middleRows(row, f.size()) = f.values;
            for (Eigen::Index i = 0; i < f.size(); ++i) {
                ts.Y.row(row + i) = c.displacement[static_cast<std::size_t>(i)].transpose();
                ts.sample_case.push_back(c.id);
            }
            row += f.size();
        }
    } else {
        const auto n = static_cast<Eigen::Index>(cases.size());
        const auto v = static_cast<Eigen::Index>(v0);
        ts.X.resize(n, 3 * s.n * v);
        ts.Y.resize(n, 3 * v);
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& c = cases[static_cast<std::size_t>(k)];
            ts.X.row(k) = flatten_rows(extract_features(c.inflated, s, c.id).values);
            for (Eigen::Index i = 0; i < v; ++i) {
                ts.Y.block<1, 3>(k, 3 * i) = c.displacement[static_cast<std::size_t>(i)].transpose();
            }
            ts.sample_case.push_back(c.id);
        }
    }
    return ts;
}

KernelModel train(const std::vector<TrainingCase>& cases, const SamplingScheme& s,
                  LearningMode mode, const FitOptions& options)
{
    const TrainingSet ts = build_training_set(cases, s, mode);
    KernelModel model = fit(ts.X, ts.Y, options);
    model.sampling = s;
    model.mode = mode;
    model.vertex_count = static_cast<int>(cases.front().inflated.vertex_count());
    return model;
}

std::vector<Vec3> interpolate_interior(const SurfaceMesh& surface_before,
                                       const DisplacementField& surface_disp,
                                       const InteriorPointSet& interior, int neighbors)
{
    if (surface_disp.size() != surface_before.vertex_count()) {
        throw ValidationError("surface displacement length does not match mesh");
    }
    if (neighbors < 0) {
        throw ValidationError("interpolate_interior neighbor count must be >= 0");
    }
    const auto count = surface_before.vertex_count();
    // Lumped vertex areas: a third of each incident triangle.
    std::vector<double> area(count, 0.0);
    for (const auto& t : surface_before.triangles()) {
        const double a = 0.5 * (surface_before.vertex(t[1]) - surface_before.vertex(t[0]))
                                   .cross(surface_before.vertex(t[2]) - surface_before.vertex(t[0]))
                                   .norm();
        for (int k = 0; k < 3; ++k) area[static_cast<std::size_t>(t[k])] += a / 3.0;
    }

    const auto m = neighbors == 0 ? count : std::min<std::size_t>(static_cast<std::size_t>(neighbors), count);
    std::vector<Vec3> out;
    out.reserve(interior.points.size());
    std::vector<int> idx(count);
    for (const auto& p : interior.points) {
        std::iota(idx.begin(), idx.end(), 0);
        auto closer = [&](int a, int b) {
            const double da = (surface_before.vertex(a) - p).squaredNorm();
            const double db = (surface_before.vertex(b) - p).squaredNorm();
            return da < db || (da == db && a < b);
        };
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(), closer);

        const double d0 = (surface_before.vertex(idx[0]) - p).norm();
        if (d0 <= 1e-12) {
            out.push_back(surface_disp[static_cast<std::size_t>(idx[0])]);
            continue;
        }
        double wsum = 0.0;
        Vec3 acc = Vec3::Zero();
        for (std::size_t k = 0; k < m; ++k) {
            const auto i = static_cast<std::size_t>(idx[k]);
            const double d = (surface_before.vertex(i) - p).norm();
            const double w = area[i] / (d * d * d);
            wsum += w;
            acc += w * surface_disp[i];
        }
        if (!(wsum > 0.0)) {
            throw ValidationError("interior point has no surface vertex with positive area nearby");
        }
        out.push_back(acc / wsum);
    }
    return out;
}

} // namespace lungdeform
