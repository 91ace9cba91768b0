#include "lungdeform/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "lungdeform/closest_point.hpp"
#include "lungdeform/errors.hpp"
#include "lungdeform/mesh_ops.hpp"
#include "lungdeform/report.hpp"

namespace lungdeform {

namespace {

std::vector<double> vertex_to_surface(const SurfaceMesh& from, const TriangleBvh& to)
{
    std::vector<double> d(from.vertex_count());
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = to.closest_point(from.vertex(i)).distance;
    }
    return d;
}

// Kahan-compensated mean, summing in index order.
double mean_of(const std::vector<double>& xs)
{
    double sum = 0.0;
    double comp = 0.0;
    for (double x : xs) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    // The exact mean never exceeds the maximum; clamp away rounding overshoot.
    const double hi = *std::max_element(xs.begin(), xs.end());
    return std::min(sum / static_cast<double>(xs.size()), hi);
}

void require_nonempty(const SurfaceMesh& a, const SurfaceMesh& b)
{
    if (a.empty() || b.empty() || a.vertex_count() == 0 || b.vertex_count() == 0) {
        throw ValidationError("empty surface");
    }
}

} // namespace

DirectedDistances directed_distances(const SurfaceMesh& a, const SurfaceMesh& b)
{
    require_nonempty(a, b);
    const TriangleBvh bvh_a(a);
    const TriangleBvh bvh_b(b);
    return {vertex_to_surface(a, bvh_b), vertex_to_surface(b, bvh_a)};
}

double mean_distance(const SurfaceMesh& a, const SurfaceMesh& b)
{
    const auto d = directed_distances(a, b);
    // Adding the two halves in a fixed order keeps MD(a,b) == MD(b,a) exactly.
    const double ma = mean_of(d.a_to_b);
    const double mb = mean_of(d.b_to_a);
    return 0.5 * (std::min(ma, mb) + std::max(ma, mb));
}

double hausdorff_distance(const SurfaceMesh& a, const SurfaceMesh& b)
{
    const auto d = directed_distances(a, b);
    const double ha = *std::max_element(d.a_to_b.begin(), d.a_to_b.end());
    const double hb = *std::max_element(d.b_to_a.begin(), d.b_to_a.end());
    return std::max(ha, hb);
}

std::vector<double> target_registration_error(std::span<const Point3> predicted,
                                              std::span<const Point3> truth)
{
    if (predicted.size() != truth.size()) {
        throw ValidationError("landmark count mismatch: " + std::to_string(predicted.size()) +
                              " predicted vs " + std::to_string(truth.size()) + " true");
    }
    if (predicted.empty()) {
        throw ValidationError("no landmarks");
    }
    std::vector<double> tre(predicted.size());
    for (std::size_t k = 0; k < tre.size(); ++k) {
        tre[k] = (predicted[k] - truth[k]).norm();
    }
    return tre;
}

double volume_change_ratio(const SurfaceMesh& inflated, const SurfaceMesh& deflated)
{
    const double v_in = mesh_volume(inflated).value;
    if (!(v_in > 0.0)) {
        throw ValidationError("inflated volume is zero");
    }
    return mesh_volume(deflated).value / v_in;
}

MetricsReport evaluate(const SurfaceMesh& inflated, const SurfaceMesh& predicted,
                       const SurfaceMesh& truth, std::span<const Point3> predicted_landmarks,
                       std::span<const Point3> true_landmarks)
{
    MetricsReport r;
    const auto d = directed_distances(predicted, truth);
    const double ma = mean_of(d.a_to_b);
    const double mb = mean_of(d.b_to_a);
    r.md_mm = 0.5 * (std::min(ma, mb) + std::max(ma, mb));
    r.hd_mm = std::max(*std::max_element(d.a_to_b.begin(), d.a_to_b.end()),
                       *std::max_element(d.b_to_a.begin(), d.b_to_a.end()));
    if (!predicted_landmarks.empty() || !true_landmarks.empty()) {
        r.tre_mm = target_registration_error(predicted_landmarks, true_landmarks);
    }
    r.volume_change_ratio = volume_change_ratio(inflated, predicted);
    return r;
}

std::string to_json(const MetricsReport& report)
{
    nlohmann::ordered_json j;
    j["md_mm"] = round_for_report(report.md_mm);
    j["hd_mm"] = round_for_report(report.hd_mm);
    auto tre = nlohmann::ordered_json::array();
    for (double t : report.tre_mm) tre.push_back(round_for_report(t));
    j["tre_mm"] = tre;
    j["volume_change_ratio"] = round_for_report(report.volume_change_ratio);
    return j.dump(2);
}

} // namespace lungdeform
