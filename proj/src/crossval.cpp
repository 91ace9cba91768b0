#include "lungdeform/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

#include <json.hpp>

#include "lungdeform/errors.hpp"
#include "lungdeform/mesh_ops.hpp"
#include "lungdeform/metrics.hpp"
#include "lungdeform/procrustes.hpp"

namespace lungdeform {

using nlohmann::ordered_json;

namespace {

// A case expressed in the common frame.
struct PreparedCase {
    const CaseData* data = nullptr;
    RigidTransform to_frame; // identity unless normalize_frame
    SurfaceMesh inflated;    // in frame
    DisplacementField displacement; // in frame
};

DisplacementField rotate_field(const DisplacementField& f, const Eigen::Matrix3d& r)
{
    std::vector<Vec3> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = r * f[i];
    return DisplacementField(std::move(v));
}

std::vector<double> all_values(const std::vector<FoldResult>& folds,
                               const std::vector<double> FoldResult::*member)
{
    std::vector<double> out;
    for (const auto& f : folds) {
        const auto& v = f.*member;
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

bool same(const Summary& a, const Summary& b)
{
    auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.count == b.count && eq(a.mean, b.mean) && eq(a.min, b.min) && eq(a.max, b.max);
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn)
{
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t count = std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// Re-throws the active exception with the fold id prepended, keeping the
// error category.
[[noreturn]] void rethrow_for_fold(const std::string& id)
{
    try {
        throw;
    } catch (const NumericalError& e) {
        throw NumericalError("fold " + id + ": " + e.what());
    } catch (const std::exception& e) {
        throw ValidationError("fold " + id + ": " + e.what());
    }
}

} // namespace

void CrossValReport::aggregate()
{
    std::vector<double> ratio, md, hd, interior;
    for (const auto& f : folds) {
        ratio.push_back(f.volume_ratio_error);
        md.push_back(f.md_mm);
        hd.push_back(f.hd_mm);
        if (f.interior_error_mm) interior.push_back(*f.interior_error_mm);
    }
    volume_ratio_error = summarize(ratio);
    md_mm = summarize(md);
    hd_mm = summarize(hd);
    interior_error_mm = summarize(interior);
    clip_tre_mm = summarize(all_values(folds, &FoldResult::clip_tre_mm));
    clip_displacement_mm = summarize(all_values(folds, &FoldResult::clip_displacement_mm));
}

bool CrossValReport::consistent() const
{
    CrossValReport r;
    r.folds = folds;
    r.aggregate();
    return same(r.volume_ratio_error, volume_ratio_error) && same(r.md_mm, md_mm) &&
           same(r.hd_mm, hd_mm) && same(r.interior_error_mm, interior_error_mm) &&
           same(r.clip_tre_mm, clip_tre_mm) && same(r.clip_displacement_mm, clip_displacement_mm);
}

DisplacementField training_displacement(const CaseData& c, const Config& config)
{
    if (config.crossval.correspondence == CorrespondenceSource::Truth && c.truth_field) {
        return *c.truth_field;
    }
    const auto result = register_meshes(c.inflated, c.deflated, c.clips, config.registration);
    return correspondence_displacements(result);
}

CrossValReport run_crossval(const std::vector<CaseData>& input, const Config& config)
{
    if (input.size() < 2) {
        throw ValidationError("cross-validation needs at least 2 cases");
    }
    config.registration.validate();

    // Deterministic order regardless of how the dataset was listed.
    std::vector<const CaseData*> cases;
    for (const auto& c : input) cases.push_back(&c);
    std::sort(cases.begin(), cases.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < cases.size(); ++i) {
        if (cases[i]->id == cases[i - 1]->id) {
            throw ValidationError("duplicate case id " + cases[i]->id);
        }
    }

    CrossValReport report;
    const int threads = config.crossval.threads;
    const std::size_t n = cases.size();
    std::vector<PreparedCase> prepared(n);
    std::size_t registered = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool use_truth =
            config.crossval.correspondence == CorrespondenceSource::Truth && cases[i]->truth_field;
        if (!use_truth) ++registered;
    }
    if (registered > 0) {
        report.notes.push_back(std::to_string(registered) +
                               " training field(s) from registration");
    }

    parallel_for(n, threads, [&](std::size_t i) {
        const CaseData& c = *cases[i];
        PreparedCase& p = prepared[i];
        p.data = &c;
        try {
            const DisplacementField disp = training_displacement(c, config);
            if (config.crossval.normalize_frame) {
                const SurfaceMesh& ref = cases.front()->inflated;
                if (ref.vertex_count() != c.inflated.vertex_count()) {
                    throw ValidationError("normalize_frame needs equal vertex counts");
                }
                p.to_frame = fit_rigid(ref.vertices(), c.inflated.vertices());
                p.inflated = transform_mesh(c.inflated, p.to_frame);
                p.displacement = rotate_field(disp, p.to_frame.rotation);
            } else {
                p.inflated = c.inflated;
                p.displacement = disp;
            }
        } catch (...) {
            rethrow_for_fold(c.id);
        }
    });

    report.folds.resize(n);
    parallel_for(n, threads, [&](std::size_t k) {
        const PreparedCase& held = prepared[k];
        const CaseData& c = *held.data;
        FoldResult& fold = report.folds[k];
        fold.held_out = c.id;
        try {
            std::vector<TrainingCase> training;
            for (std::size_t i = 0; i < n; ++i) {
                if (i == k) continue;
                training.push_back({prepared[i].data->id, prepared[i].inflated, prepared[i].displacement});
                fold.training_ids.push_back(prepared[i].data->id);
            }
            // Leakage audit.
            if (std::find(fold.training_ids.begin(), fold.training_ids.end(), c.id) !=
                fold.training_ids.end()) {
                throw ValidationError("held-out case found in its own training set");
            }

            SamplingScheme scheme = config.kernel.sampling_mode == SamplingScheme::Mode::FixedIds
                                        ? fixed_id_scheme(training.front().inflated, config.kernel.sampling_n)
                                        : nearest_k_scheme(config.kernel.sampling_n);
            const KernelModel model =
                train(training, scheme, config.kernel.mode, config.kernel.fit_options());

            DisplacementField predicted = predict(model, held.inflated);
            if (config.crossval.normalize_frame) {
                predicted = rotate_field(predicted, held.to_frame.rotation.transpose());
            }
            const SurfaceMesh predicted_mesh = apply_displacement(c.inflated, predicted);

            std::vector<Point3> pred_clips, true_clips;
            for (const auto& clip : c.clips) {
                pred_clips.push_back(transport(clip.source_anchor, predicted_mesh));
                true_clips.push_back(clip.target_pos);
                fold.clip_displacement_mm.push_back((clip.target_pos - clip.source_pos).norm());
            }
            const MetricsReport m = evaluate(c.inflated, predicted_mesh, c.deflated, pred_clips, true_clips);
            fold.md_mm = m.md_mm;
            fold.hd_mm = m.hd_mm;
            fold.clip_tre_mm = m.tre_mm;
            fold.volume_ratio_predicted = m.volume_change_ratio;
            fold.volume_ratio_true = volume_change_ratio(c.inflated, c.deflated);
            fold.volume_ratio_error = std::abs(fold.volume_ratio_predicted - fold.volume_ratio_true);

            if (c.interior && !c.interior->points.empty() &&
                c.interior_deflated.size() == c.interior->points.size()) {
                const auto disp = interpolate_interior(c.inflated, predicted, *c.interior,
                                                       config.kernel.interior_neighbors);
                double sum = 0.0;
                for (std::size_t i = 0; i < disp.size(); ++i) {
                    sum += (c.interior->points[i] + disp[i] - c.interior_deflated[i]).norm();
                }
                fold.interior_error_mm = sum / static_cast<double>(disp.size());
            }
        } catch (...) {
            rethrow_for_fold(c.id);
        }
    });

    std::size_t without_interior = 0;
    for (const auto& f : report.folds) {
        if (!f.interior_error_mm) ++without_interior;
    }
    if (without_interior > 0) {
        report.notes.push_back(std::to_string(without_interior) +
                               " case(s) without interior points; nodule error skipped");
    }
    report.aggregate();
    return report;
}

namespace {

ordered_json summary_json(const Summary& s)
{
    ordered_json j;
    j["mean"] = round_for_report(s.mean);
    j["min"] = round_for_report(s.min);
    j["max"] = round_for_report(s.max);
    j["count"] = s.count;
    return j;
}

ordered_json rounded(const std::vector<double>& v)
{
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(round_for_report(x));
    return a;
}

std::string fixed(double x, int decimals)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    return buf;
}

} // namespace

std::string to_json(const CrossValReport& r)
{
    ordered_json j;
    j["format"] = "lungdeform.crossval/v1";
    ordered_json folds = ordered_json::array();
    for (const auto& f : r.folds) {
        ordered_json o;
        o["held_out"] = f.held_out;
        o["training_ids"] = f.training_ids;
        o["volume_ratio_true"] = round_for_report(f.volume_ratio_true);
        o["volume_ratio_predicted"] = round_for_report(f.volume_ratio_predicted);
        o["volume_ratio_error"] = round_for_report(f.volume_ratio_error);
        o["clip_tre_mm"] = rounded(f.clip_tre_mm);
        o["clip_displacement_mm"] = rounded(f.clip_displacement_mm);
        o["md_mm"] = round_for_report(f.md_mm);
        o["hd_mm"] = round_for_report(f.hd_mm);
        o["interior_error_mm"] =
            f.interior_error_mm ? ordered_json(round_for_report(*f.interior_error_mm)) : ordered_json();
        folds.push_back(std::move(o));
    }
    j["folds"] = std::move(folds);
    ordered_json agg;
    agg["volume_ratio_error"] = summary_json(r.volume_ratio_error);
    agg["clip_tre_mm"] = summary_json(r.clip_tre_mm);
    agg["clip_displacement_mm"] = summary_json(r.clip_displacement_mm);
    agg["md_mm"] = summary_json(r.md_mm);
    agg["hd_mm"] = summary_json(r.hd_mm);
    agg["interior_error_mm"] = summary_json(r.interior_error_mm);
    j["aggregate"] = std::move(agg);
    j["consistent"] = r.consistent();
    j["notes"] = r.notes;
    return j.dump(2) + "\n";
}

std::string to_text(const CrossValReport& r)
{
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"case", "ratio true", "ratio pred", "ratio err [pp]", "MD [mm]", "HD [mm]", "clip TRE [mm]",
                    "nodule [mm]"});
    for (const auto& f : r.folds) {
        std::string tre;
        for (std::size_t i = 0; i < f.clip_tre_mm.size(); ++i) {
            tre += (i ? " / " : "") + fixed(f.clip_tre_mm[i], 2);
        }
        rows.push_back({f.held_out, fixed(f.volume_ratio_true, 3), fixed(f.volume_ratio_predicted, 3),
                        fixed(100.0 * f.volume_ratio_error, 2), fixed(f.md_mm, 2), fixed(f.hd_mm, 2), tre,
                        f.interior_error_mm ? fixed(*f.interior_error_mm, 2) : "-"});
    }
    std::string out = format_table(rows);

    Summary pp = r.volume_ratio_error;
    pp.mean *= 100.0;
    pp.min *= 100.0;
    pp.max *= 100.0;
    std::vector<std::vector<std::string>> agg;
    agg.push_back({"metric", "mean (min - max)"});
    agg.push_back({"volume ratio error [pp]", format_summary(pp)});
    agg.push_back({"clip TRE [mm]", format_summary(r.clip_tre_mm)});
    agg.push_back({"clip displacement [mm]", format_summary(r.clip_displacement_mm)});
    agg.push_back({"MD [mm]", format_summary(r.md_mm)});
    agg.push_back({"HD [mm]", format_summary(r.hd_mm)});
    if (r.interior_error_mm.count > 0) {
        agg.push_back({"nodule error [mm]", format_summary(r.interior_error_mm)});
    }
    out += "\n" + format_table(agg);
    for (const auto& note : r.notes) out += "note: " + note + "\n";
    return out;
}

} // namespace lungdeform
