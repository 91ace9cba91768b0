#include "lungdeform/registration.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/SparseCholesky>

#include "lungdeform/mesh_ops.hpp"

namespace lungdeform {

VertexMatrix to_matrix(const DisplacementField& field)
{
    return to_matrix(field.vectors());
}

VertexMatrix to_matrix(const std::vector<Point3>& points)
{
    VertexMatrix m(static_cast<Eigen::Index>(points.size()), 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
    }
    return m;
}

DisplacementField to_field(const VertexMatrix& m)
{
    std::vector<Vec3> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        v[static_cast<std::size_t>(i)] = m.row(i).transpose();
    }
    return DisplacementField(std::move(v));
}

namespace {

std::vector<Point3> rows_to_points(const VertexMatrix& m)
{
    std::vector<Point3> pts(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        pts[static_cast<std::size_t>(i)] = m.row(i).transpose();
    }
    return pts;
}

Point3 anchor_position(const SurfaceAnchor& a, const std::vector<Triangle>& tris,
                       const VertexMatrix& x)
{
    const auto& t = tris[static_cast<std::size_t>(a.triangle)];
    return a.barycentric[0] * x.row(t[0]).transpose() + a.barycentric[1] * x.row(t[1]).transpose() +
           a.barycentric[2] * x.row(t[2]).transpose();
}

double kahan_mean(const std::vector<double>& xs)
{
    double sum = 0.0;
    double comp = 0.0;
    for (double x : xs) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

// Unit direction of a surface residual; the face normal when the residual
// is too short to define one.
Vec3 residual_normal(const Vec3& r, const SurfaceMesh& mesh, int triangle,
                     const std::vector<Point3>& positions)
{
    const double len = r.norm();
    if (len > 1e-9) return r / len;
    const auto& t = mesh.triangle(static_cast<std::size_t>(triangle));
    const Vec3 n = (positions[static_cast<std::size_t>(t[1])] - positions[static_cast<std::size_t>(t[0])])
                       .cross(positions[static_cast<std::size_t>(t[2])] - positions[static_cast<std::size_t>(t[0])]);
    const double nn = n.norm();
    return nn > 0.0 ? Vec3(n / nn) : Vec3::UnitZ();
}

bool finite_terms(const EnergyTerms& e)
{
    return std::isfinite(e.total) && std::isfinite(e.shape) && std::isfinite(e.clip) &&
           std::isfinite(e.laplacian);
}

} // namespace

LandmarkPair make_landmark(const SurfaceMesh& source, const Point3& source_pos,
                           const Point3& target_pos)
{
    if (!is_finite(source_pos) || !is_finite(target_pos)) {
        throw ValidationError("non-finite landmark coordinate");
    }
    const SurfacePoint sp = closest_point_on_surface(source_pos, source);
    if (sp.distance > 1e-3) {
        throw ValidationError("landmark is " + std::to_string(sp.distance) +
                              " mm from the source surface (limit 1e-3 mm)");
    }
    LandmarkPair lp;
    lp.source_pos = source_pos;
    lp.target_pos = target_pos;
    lp.source_anchor.triangle = sp.triangle;
    lp.source_anchor.barycentric = sp.barycentric;
    const auto& tri = source.triangle(static_cast<std::size_t>(sp.triangle));
    int nearest = tri[0];
    sp.barycentric.maxCoeff(&nearest);
    lp.source_anchor.nearest_vertex = tri[static_cast<std::size_t>(nearest)];
    return lp;
}

Point3 transport(const SurfaceAnchor& anchor, const SurfaceMesh& mesh)
{
    if (anchor.triangle < 0 || static_cast<std::size_t>(anchor.triangle) >= mesh.triangle_count()) {
        throw ValidationError("landmark anchor triangle out of range");
    }
    return evaluate_surface_point(mesh, anchor.triangle, anchor.barycentric);
}

void RegistrationParams::validate() const
{
    if (!(clip_weight >= 0.0) || !(laplacian_weight >= 0.0)) {
        throw ValidationError("registration weights must be non-negative");
    }
    if (max_iterations < 1) {
        throw ValidationError("max_iterations must be >= 1");
    }
    if (!(convergence_tol > 0.0)) {
        throw ValidationError("convergence_tol must be > 0");
    }
    if (!(armijo_c > 0.0 && armijo_c < 1.0) || !(backtrack_factor > 0.0 && backtrack_factor < 1.0) ||
        max_backtracks < 1 || !(distance_floor > 0.0)) {
        throw ValidationError("invalid line search parameters");
    }
}

RegistrationProblem::RegistrationProblem(SurfaceMesh source, SurfaceMesh target,
                                         std::vector<LandmarkPair> clips,
                                         RegistrationParams params)
    : source_(std::move(source)),
      target_(std::move(target)),
      clips_(std::move(clips)),
      params_(params)
{
    params_.validate();
    if (source_.vertex_count() < 4) {
        throw ValidationError("source mesh needs at least 4 vertices");
    }
    if (target_.empty()) {
        throw ValidationError("empty surface");
    }
    for (const auto& c : clips_) {
        if (c.source_anchor.triangle < 0 ||
            static_cast<std::size_t>(c.source_anchor.triangle) >= source_.triangle_count()) {
            throw ValidationError("landmark anchor triangle out of range");
        }
    }
    source_positions_ = to_matrix(source_.vertices());
    target_bvh_ = std::make_shared<TriangleBvh>(target_);
    laplacian_ = laplacian_matrix(source_);
    source_delta_ = laplacian_ * source_positions_;
}

double RegistrationProblem::laplacian_energy(const VertexMatrix& u, VertexMatrix* gradient) const
{
    if (params_.laplacian_weight == 0.0) return 0.0;
    // L is linear, so delta(S + u) - delta(S) = L u.
    const VertexMatrix residual = laplacian_ * u;
    const double scale = params_.laplacian_weight / static_cast<double>(source_.vertex_count());
    if (gradient) {
        *gradient += (2.0 * scale) * (laplacian_.transpose() * residual);
    }
    return scale * residual.squaredNorm();
}

EnergyTerms RegistrationProblem::energy(const VertexMatrix& u) const
{
    return linearize(u).energy;
}

RegistrationProblem::Linearization RegistrationProblem::linearize(const VertexMatrix& u) const
{
    const auto n_src = source_.vertex_count();
    const auto n_tgt = target_.vertex_count();
    if (static_cast<std::size_t>(u.rows()) != n_src) {
        throw ValidationError("displacement length does not match source vertex count");
    }
    Linearization lin;
    lin.displacement = u;
    lin.gradient = VertexMatrix::Zero(u.rows(), 3);
    const VertexMatrix x = source_positions_ + u;

    lin.forward_targets.resize(n_src);
    lin.forward_distance.resize(n_src);
    lin.forward_normal.resize(n_src);
    const double w_fwd = 0.5 / static_cast<double>(n_src);
    for (std::size_t i = 0; i < n_src; ++i) {
        const Point3 p = x.row(static_cast<Eigen::Index>(i)).transpose();
        const SurfacePoint sp = target_bvh_->closest_point(p);
        lin.forward_targets[i] = sp.point;
        lin.forward_distance[i] = sp.distance;
        lin.forward_normal[i] = residual_normal(p - sp.point, target_, sp.triangle, target_.vertices());
        if (sp.distance > 0.0) {
            lin.gradient.row(static_cast<Eigen::Index>(i)) +=
                (w_fwd / sp.distance) * (p - sp.point).transpose();
        }
    }

    const std::vector<Point3> x_points = rows_to_points(x);
    const TriangleBvh deformed_bvh(x_points, source_.triangles());
    lin.reverse_triangle.resize(n_tgt);
    lin.reverse_barycentric.resize(n_tgt);
    lin.reverse_distance.resize(n_tgt);
    lin.reverse_normal.resize(n_tgt);
    const double w_rev = 0.5 / static_cast<double>(n_tgt);
    for (std::size_t j = 0; j < n_tgt; ++j) {
        const Point3& w = target_.vertex(j);
        const SurfacePoint sp = deformed_bvh.closest_point(w);
        lin.reverse_triangle[j] = sp.triangle;
        lin.reverse_barycentric[j] = sp.barycentric;
        lin.reverse_distance[j] = sp.distance;
        lin.reverse_normal[j] = residual_normal(sp.point - w, source_, sp.triangle, x_points);
        if (sp.distance > 0.0) {
            const Vec3 dir = (sp.point - w) / sp.distance;
            const auto& tri = source_.triangle(static_cast<std::size_t>(sp.triangle));
            for (int k = 0; k < 3; ++k) {
                lin.gradient.row(tri[k]) += (w_rev * sp.barycentric[k]) * dir.transpose();
            }
        }
    }

    const double fwd = kahan_mean(lin.forward_distance);
    const double rev = kahan_mean(lin.reverse_distance);
    lin.energy.shape = 0.5 * (fwd + rev);

    lin.clip_distance.assign(clips_.size(), 0.0);
    if (params_.clip_weight > 0.0) {
        for (std::size_t k = 0; k < clips_.size(); ++k) {
            const auto& c = clips_[k];
            const Point3 p = anchor_position(c.source_anchor, source_.triangles(), x);
            const double dist = (p - c.target_pos).norm();
            lin.clip_distance[k] = dist;
            lin.energy.clip += params_.clip_weight * dist;
            if (dist > 0.0) {
                const Vec3 dir = (p - c.target_pos) / dist;
                const auto& tri = source_.triangle(static_cast<std::size_t>(c.source_anchor.triangle));
                for (int m = 0; m < 3; ++m) {
                    lin.gradient.row(tri[m]) +=
                        (params_.clip_weight * c.source_anchor.barycentric[m]) * dir.transpose();
                }
            }
        }
    }

    lin.energy.laplacian = laplacian_energy(u, &lin.gradient);
    lin.energy.total = lin.energy.shape + lin.energy.clip + lin.energy.laplacian;
    return lin;
}

EnergyTerms RegistrationProblem::frozen_energy(const Linearization& lin, const VertexMatrix& u) const
{
    const VertexMatrix x = source_positions_ + u;
    const auto n_src = source_.vertex_count();
    const auto n_tgt = target_.vertex_count();

    std::vector<double> fwd(n_src);
    for (std::size_t i = 0; i < n_src; ++i) {
        fwd[i] = (x.row(static_cast<Eigen::Index>(i)).transpose() - lin.forward_targets[i]).norm();
    }
    std::vector<double> rev(n_tgt);
    for (std::size_t j = 0; j < n_tgt; ++j) {
        const SurfaceAnchor a{-1, lin.reverse_triangle[j], lin.reverse_barycentric[j]};
        rev[j] = (anchor_position(a, source_.triangles(), x) - target_.vertex(j)).norm();
    }
    EnergyTerms e;
    e.shape = 0.5 * (kahan_mean(fwd) + kahan_mean(rev));
    if (params_.clip_weight > 0.0) {
        for (const auto& c : clips_) {
            e.clip += params_.clip_weight *
                      (anchor_position(c.source_anchor, source_.triangles(), x) - c.target_pos).norm();
        }
    }
    e.laplacian = laplacian_energy(u, nullptr);
    e.total = e.shape + e.clip + e.laplacian;
    return e;
}

VertexMatrix RegistrationProblem::descent_direction(const Linearization& lin) const
{
    const auto n_src = source_.vertex_count();
    const auto n_tgt = target_.vertex_count();
    const double floor = params_.distance_floor;
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(9 * n_src + 81 * (n_tgt + clips_.size()) + 3 * n_src);

    // Point-to-plane IRLS weights: |n.r| <= (n.r)^2 / (2 d) + d / 2. A small
    // isotropic share keeps H definite without pinning tangential motion.
    auto block = [](const Vec3& n, double w_normal, double w_iso) {
        Eigen::Matrix3d m = w_normal * (n * n.transpose());
        m.diagonal().array() += w_iso;
        return m;
    };
    auto add_block = [&](int r, int c, const Eigen::Matrix3d& m) {
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                if (m(a, b) != 0.0) entries.emplace_back(3 * r + a, 3 * c + b, m(a, b));
            }
        }
    };
    auto add_anchor = [&](const Triangle& tri, const Vec3& bary, const Eigen::Matrix3d& m) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                add_block(tri[r], tri[c], (bary[r] * bary[c]) * m);
            }
        }
    };
    constexpr double kTangentialShare = 1e-3;

    const double w_fwd = 0.5 / static_cast<double>(n_src);
    for (std::size_t i = 0; i < n_src; ++i) {
        const double w = w_fwd / std::max(lin.forward_distance[i], floor);
        add_block(static_cast<int>(i), static_cast<int>(i),
                  block(lin.forward_normal[i], w, kTangentialShare * w_fwd));
    }
    const double w_rev = 0.5 / static_cast<double>(n_tgt);
    for (std::size_t j = 0; j < n_tgt; ++j) {
        const double w = w_rev / std::max(lin.reverse_distance[j], floor);
        add_anchor(source_.triangle(static_cast<std::size_t>(lin.reverse_triangle[j])),
                   lin.reverse_barycentric[j],
                   block(lin.reverse_normal[j], w, kTangentialShare * w_rev));
    }
    if (params_.clip_weight > 0.0) {
        // Clips are point targets, so their majorizer stays isotropic.
        for (std::size_t k = 0; k < clips_.size(); ++k) {
            const auto& a = clips_[k].source_anchor;
            const double w = params_.clip_weight / std::max(lin.clip_distance[k], floor);
            add_anchor(source_.triangle(static_cast<std::size_t>(a.triangle)), a.barycentric,
                       Eigen::Matrix3d::Identity() * w);
        }
    }
    if (params_.laplacian_weight > 0.0) {
        const double scale = 2.0 * params_.laplacian_weight / static_cast<double>(n_src);
        const Eigen::SparseMatrix<double> ltl = laplacian_.transpose() * laplacian_;
        for (int k = 0; k < ltl.outerSize(); ++k) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(ltl, k); it; ++it) {
                for (int a = 0; a < 3; ++a) {
                    entries.emplace_back(3 * static_cast<int>(it.row()) + a,
                                         3 * static_cast<int>(it.col()) + a, scale * it.value());
                }
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(3 * n_src);
    Eigen::SparseMatrix<double> H(n, n);
    H.setFromTriplets(entries.begin(), entries.end());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(H);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("preconditioner factorization failed");
    }
    Eigen::VectorXd g(n);
    for (Eigen::Index i = 0; i < lin.gradient.rows(); ++i) {
        g.segment<3>(3 * i) = lin.gradient.row(i).transpose();
    }
    const Eigen::VectorXd step = solver.solve(-g);
    if (solver.info() != Eigen::Success || !step.allFinite()) {
        throw NumericalError("preconditioner solve failed");
    }
    VertexMatrix dir(lin.gradient.rows(), 3);
    for (Eigen::Index i = 0; i < dir.rows(); ++i) {
        dir.row(i) = step.segment<3>(3 * i).transpose();
    }
    return dir;
}

EnergyTerms registration_energy(const SurfaceMesh& source, const DisplacementField& u,
                                const SurfaceMesh& target, const std::vector<LandmarkPair>& clips,
                                const RegistrationParams& params)
{
    if (u.size() != source.vertex_count()) {
        throw ValidationError("displacement length " + std::to_string(u.size()) +
                              " does not match source vertex count " +
                              std::to_string(source.vertex_count()));
    }
    const RegistrationProblem problem(source, target, clips, params);
    return problem.energy(to_matrix(u));
}

RegistrationResult register_meshes(const SurfaceMesh& source, const SurfaceMesh& target,
                                   const std::vector<LandmarkPair>& clips,
                                   const RegistrationParams& params)
{
    const RegistrationProblem problem(source, target, clips, params);
    RegistrationResult result;
    result.source = source;

    VertexMatrix u = VertexMatrix::Zero(static_cast<Eigen::Index>(source.vertex_count()), 3);
    auto lin = problem.linearize(u);
    result.energy_trace.push_back({0, lin.energy});
    if (!finite_terms(lin.energy)) {
        throw DivergedError("diverged: non-finite initial energy", result.energy_trace);
    }

    for (int it = 1; it <= params.max_iterations; ++it) {
        const double e0 = lin.energy.total;
        if (e0 <= 0.0 || lin.gradient.isZero(0.0)) {
            result.converged = true;
            break;
        }
        const VertexMatrix dir = problem.descent_direction(lin);
        const double slope = (lin.gradient.array() * dir.array()).sum();
        if (!(slope < 0.0)) {
            result.converged = true;
            break;
        }

        // Armijo search on the full energy, closest points refreshed per trial.
        double step = 1.0;
        bool accepted = false;
        VertexMatrix trial;
        RegistrationProblem::Linearization next;
        for (int k = 0; k < params.max_backtracks; ++k) {
            trial = u + step * dir;
            next = problem.linearize(trial);
            if (!finite_terms(next.energy)) {
                result.energy_trace.push_back({it, next.energy});
                throw DivergedError("diverged at iteration " + std::to_string(it),
                                    result.energy_trace);
            }
            if (next.energy.total <= e0 + params.armijo_c * step * slope) {
                accepted = true;
                break;
            }
            step *= params.backtrack_factor;
        }
        if (!accepted) {
            // No decrease along the direction: numerically stationary.
            result.converged = true;
            break;
        }
        result.energy_trace.push_back({it, next.energy});
        u = std::move(trial);
        lin = std::move(next);
        if (e0 - lin.energy.total < params.convergence_tol * e0) {
            result.converged = true;
            break;
        }
    }

    result.displacement = to_field(u);
    result.deformed = apply_displacement(source, result.displacement);

    std::vector<Point3> moved;
    std::vector<Point3> truth;
    for (const auto& c : clips) {
        moved.push_back(transport(c.source_anchor, result.deformed));
        truth.push_back(c.target_pos);
    }
    result.metrics.md_mm = mean_distance(result.deformed, target);
    result.metrics.hd_mm = hausdorff_distance(result.deformed, target);
    if (!clips.empty()) result.metrics.tre_mm = target_registration_error(moved, truth);
    if (is_closed(source) && is_closed(result.deformed)) {
        result.metrics.volume_change_ratio = volume_change_ratio(source, result.deformed);
    } else {
        result.metrics.volume_change_ratio = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

DisplacementField correspondence_displacements(const RegistrationResult& result)
{
    return displacement_between(result.source, result.deformed);
}

} // namespace lungdeform
