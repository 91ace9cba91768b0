// lungdeform command-line interface. Every verb reads and writes files only.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lungdeform/case_io.hpp"
#include "lungdeform/config.hpp"
#include "lungdeform/crossval.hpp"
#include "lungdeform/errors.hpp"
#include "lungdeform/kernel_deform.hpp"
#include "lungdeform/mesh_io.hpp"
#include "lungdeform/metrics.hpp"
#include "lungdeform/registration.hpp"
#include "lungdeform/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lungdeform;

namespace {

struct Overrides {
    std::optional<double> lambda;
    std::optional<double> beta;
    std::optional<double> clip_weight;
    std::optional<double> laplacian_weight;
    std::optional<int> max_iterations;
    std::optional<int> threads;
    std::optional<int> n_cases;
    std::optional<std::uint64_t> seed;
    std::optional<int> vertex_budget;
    std::optional<std::string> mode;
    std::optional<std::string> correspondence;
    bool normalize_frame = false;
};

Config make_config(const std::string& path, const Overrides& o)
{
    Config cfg = path.empty() ? Config{} : load_config(path);
    if (o.lambda) cfg.kernel.lambda = *o.lambda;
    if (o.beta) cfg.kernel.beta = *o.beta;
    if (o.clip_weight) cfg.registration.clip_weight = *o.clip_weight;
    if (o.laplacian_weight) cfg.registration.laplacian_weight = *o.laplacian_weight;
    if (o.max_iterations) cfg.registration.max_iterations = *o.max_iterations;
    if (o.threads) cfg.crossval.threads = *o.threads;
    if (o.n_cases) cfg.synthetic.n_cases = *o.n_cases;
    if (o.seed) cfg.synthetic.base_seed = *o.seed;
    if (o.vertex_budget) cfg.synthetic.vertex_budget = *o.vertex_budget;
    if (o.mode) cfg.kernel.mode = learning_mode_from_string(*o.mode);
    if (o.correspondence) {
        if (*o.correspondence == "truth") cfg.crossval.correspondence = CorrespondenceSource::Truth;
        else if (*o.correspondence == "registration")
            cfg.crossval.correspondence = CorrespondenceSource::Registration;
        else throw ValidationError("--correspondence must be truth or registration");
    }
    if (o.normalize_frame) cfg.crossval.normalize_frame = true;
    cfg.registration.validate();
    if (cfg.crossval.threads < 1) throw ValidationError("--threads must be >= 1");
    return cfg;
}

std::vector<Point3> clip_targets(const std::vector<LandmarkPair>& clips)
{
    std::vector<Point3> out;
    for (const auto& c : clips) out.push_back(c.target_pos);
    return out;
}

void emit(const std::string& text, const std::string& out_path)
{
    if (out_path.empty()) std::cout << text;
    else write_text_file(out_path, text);
}

int run_generate(const Config& cfg, const std::string& out)
{
    const auto cases = make_dataset(cfg.synthetic.n_cases, cfg.synthetic.base_seed, cfg.synthetic.ranges,
                                    cfg.synthetic.vertex_budget);
    save_dataset(cases, out);
    std::cout << "wrote " << cases.size() << " cases to " << out << "\n";
    return 0;
}

int run_register(const Config& cfg, const std::string& case_dir, const std::string& source_path,
                 const std::string& target_path, const std::string& clips_path, const std::string& out)
{
    SurfaceMesh source, target;
    std::vector<LandmarkPair> clips;
    if (!case_dir.empty()) {
        const CaseData c = load_case(case_dir);
        source = c.inflated;
        target = c.deflated;
        clips = c.clips;
    } else {
        if (source_path.empty() || target_path.empty()) {
            throw ValidationError("register needs --case or both --source and --target");
        }
        source = load_mesh(source_path);
        target = load_mesh(target_path);
        if (!clips_path.empty()) clips = load_clips(clips_path, source);
    }

    RegistrationResult result;
    try {
        result = register_meshes(source, target, clips, cfg.registration);
    } catch (const DivergedError& e) {
        save_energy_trace_csv(e.trace(), fs::path(out) / "energy_trace.csv");
        throw;
    }
    const fs::path dir(out);
    fs::create_directories(dir);
    save_mesh(result.deformed, dir / "deformed.off");
    save_displacement_csv(result.displacement, dir / "displacement.csv");
    save_energy_trace_csv(result.energy_trace, dir / "energy_trace.csv");

    std::vector<Point3> moved;
    for (const auto& c : clips) moved.push_back(transport(c.source_anchor, result.deformed));
    MetricsReport m = result.metrics;
    m.tre_mm = clips.empty() ? std::vector<double>{} : target_registration_error(moved, clip_targets(clips));
    write_text_file(dir / "metrics.json", to_json(m));
    std::cout << to_json(m);
    if (!result.converged) {
        std::cerr << "warning: stopped at max_iterations without meeting the tolerance\n";
    }
    return 0;
}

int run_fit(const Config& cfg, const std::string& dataset, const std::vector<std::string>& exclude,
            const std::string& out)
{
    const auto cases = load_dataset(dataset);
    std::vector<TrainingCase> training;
    for (const auto& c : cases) {
        if (std::find(exclude.begin(), exclude.end(), c.id) != exclude.end()) continue;
        training.push_back({c.id, c.inflated, training_displacement(c, cfg)});
    }
    if (training.empty()) throw ValidationError("no training cases left");
    const SamplingScheme scheme = cfg.kernel.sampling_mode == SamplingScheme::Mode::FixedIds
                                      ? fixed_id_scheme(training.front().inflated, cfg.kernel.sampling_n)
                                      : nearest_k_scheme(cfg.kernel.sampling_n);
    const KernelModel model = train(training, scheme, cfg.kernel.mode, cfg.kernel.fit_options());
    save_kernel_model(model, out);
    std::cout << "trained on " << training.size() << " cases, " << model.sample_count()
              << " samples, beta " << model.beta << "\n";
    return 0;
}

int run_predict(const Config& cfg, const std::string& model_path, const std::string& mesh_path,
                const std::string& case_dir, const std::string& out)
{
    const KernelModel model = load_kernel_model(model_path);
    std::optional<CaseData> c;
    SurfaceMesh inflated;
    if (!case_dir.empty()) {
        c = load_case(case_dir);
        inflated = c->inflated;
    } else if (!mesh_path.empty()) {
        inflated = load_mesh(mesh_path);
    } else {
        throw ValidationError("predict needs --mesh or --case");
    }
    const DisplacementField field = predict(model, inflated);
    const SurfaceMesh predicted = apply_displacement(inflated, field);
    const fs::path dir(out);
    fs::create_directories(dir);
    save_mesh(predicted, dir / "predicted.off");
    save_displacement_csv(field, dir / "displacement.csv");

    nlohmann::ordered_json j;
    j["volume_change_ratio_predicted"] = round_for_report(volume_change_ratio(inflated, predicted));
    if (c) {
        std::vector<Point3> moved;
        for (const auto& clip : c->clips) moved.push_back(transport(clip.source_anchor, predicted));
        const auto m = evaluate(inflated, predicted, c->deflated, moved, clip_targets(c->clips));
        j["metrics"] = nlohmann::ordered_json::parse(to_json(m));
        if (c->interior) {
            const auto disp = interpolate_interior(inflated, field, *c->interior, cfg.kernel.interior_neighbors);
            nlohmann::ordered_json pts = nlohmann::ordered_json::array();
            for (std::size_t i = 0; i < disp.size(); ++i) {
                const Point3 p = c->interior->points[i] + disp[i];
                pts.push_back({round_for_report(p.x()), round_for_report(p.y()), round_for_report(p.z())});
            }
            j["interior_predicted"] = std::move(pts);
        } else {
            j["note"] = "case has no interior points";
        }
    }
    const std::string text = j.dump(2) + "\n";
    write_text_file(dir / "prediction.json", text);
    std::cout << text;
    return 0;
}

int run_crossval_verb(const Config& cfg, const std::string& dataset, const std::string& out)
{
    const auto cases = load_dataset(dataset);
    const CrossValReport report = run_crossval(cases, cfg);
    const fs::path dir(out);
    write_text_file(dir / "crossval.json", to_json(report));
    const std::string text = to_text(report);
    write_text_file(dir / "crossval.txt", text);
    std::cout << text;
    return 0;
}

int run_metrics(const std::string& a_path, const std::string& b_path, const std::string& inflated_path,
                const std::string& out)
{
    const SurfaceMesh a = load_mesh(a_path);
    const SurfaceMesh b = load_mesh(b_path);
    MetricsReport m;
    m.md_mm = mean_distance(a, b);
    m.hd_mm = hausdorff_distance(a, b);
    m.volume_change_ratio = inflated_path.empty() ? volume_change_ratio(a, b)
                                                  : volume_change_ratio(load_mesh(inflated_path), b);
    emit(to_json(m), out);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"lungdeform: pneumothorax lung deformation toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    Overrides o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "YAML configuration file")->check(CLI::ExistingFile);
    };
    auto add_kernel = [&](CLI::App* sub) {
        sub->add_option("--lambda", o.lambda, "ridge regularization");
        sub->add_option("--beta", o.beta, "kernel width (default: median heuristic)");
        sub->add_option("--mode", o.mode, "per-region or per-patient");
        sub->add_option("--correspondence", o.correspondence, "truth or registration");
    };
    auto add_registration = [&](CLI::App* sub) {
        sub->add_option("--clip-weight", o.clip_weight, "clip term weight");
        sub->add_option("--laplacian-weight", o.laplacian_weight, "Laplacian term weight");
        sub->add_option("--max-iterations", o.max_iterations, "iteration cap");
    };

    std::string out, dataset, case_dir, source, target, clips, model, mesh, a, b, inflated;
    std::vector<std::string> exclude;

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    add_common(gen);
    gen->add_option("--out", out, "output directory")->required();
    gen->add_option("--n-cases", o.n_cases, "number of cases");
    gen->add_option("--seed", o.seed, "base seed");
    gen->add_option("--vertex-budget", o.vertex_budget, "approximate vertices per mesh");

    auto* reg = app.add_subcommand("register", "deformable registration of one pair");
    add_common(reg);
    add_registration(reg);
    reg->add_option("--case", case_dir, "case directory (inflated, deflated, clips)");
    reg->add_option("--source", source, "source mesh");
    reg->add_option("--target", target, "target mesh");
    reg->add_option("--clips", clips, "clips.json anchored on the source");
    reg->add_option("--out", out, "output directory")->required();

    auto* fit_cmd = app.add_subcommand("fit", "train a kernel model on a dataset");
    add_common(fit_cmd);
    add_kernel(fit_cmd);
    add_registration(fit_cmd);
    fit_cmd->add_option("--dataset", dataset, "dataset directory")->required();
    fit_cmd->add_option("--exclude", exclude, "case ids to leave out");
    fit_cmd->add_option("--out", out, "model file (.json)")->required();

    auto* pred = app.add_subcommand("predict", "predict the deflated state of an inflated mesh");
    add_common(pred);
    pred->add_option("--model", model, "model file")->required();
    pred->add_option("--mesh", mesh, "inflated mesh");
    pred->add_option("--case", case_dir, "case directory; adds metrics against its deflated mesh");
    pred->add_option("--out", out, "output directory")->required();

    auto* cv = app.add_subcommand("crossval", "leave-one-out cross-validation");
    add_common(cv);
    add_kernel(cv);
    add_registration(cv);
    cv->add_option("--dataset", dataset, "dataset directory")->required();
    cv->add_option("--threads", o.threads, "parallel folds");
    cv->add_flag("--normalize-frame", o.normalize_frame, "rigidly align cases to a common frame");
    cv->add_option("--out", out, "output directory")->required();

    auto* met = app.add_subcommand("metrics", "compare two meshes");
    met->add_option("--a", a, "first mesh (volume reference unless --inflated)")->required();
    met->add_option("--b", b, "second mesh")->required();
    met->add_option("--inflated", inflated, "volume reference mesh");
    met->add_option("--out", out, "JSON output (default stdout)");

    auto* cfg_cmd = app.add_subcommand("config", "print every configuration key with its default");
    cfg_cmd->add_option("--out", out, "YAML output (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*met) return run_metrics(a, b, inflated, out);
        if (*cfg_cmd) {
            if (out.empty()) {
                std::cout << default_config_yaml();
            } else {
                write_text_file(out, default_config_yaml());
            }
            return 0;
        }
        const Config cfg = make_config(config_path, o);
        if (*gen) return run_generate(cfg, out);
        if (*reg) return run_register(cfg, case_dir, source, target, clips, out);
        if (*fit_cmd) return run_fit(cfg, dataset, exclude, out);
        if (*pred) return run_predict(cfg, model, mesh, case_dir, out);
        if (*cv) return run_crossval_verb(cfg, dataset, out);
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
