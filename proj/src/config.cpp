#include "lungdeform/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lungdeform/errors.hpp"

namespace lungdeform {

namespace {

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed)
{
    if (!node.IsMap()) {
        throw ValidationError("config: '" + section + "' must be a mapping");
    }
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) {
            throw ValidationError("config: unknown key '" + section + "." + key + "'");
        }
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out)
{
    if (const auto v = node[key]) {
        try {
            out = v.as<T>();
        } catch (const YAML::Exception& e) {
            throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
        }
    }
}

void read_range(const YAML::Node& node, const char* key, ParamRange& out)
{
    if (const auto v = node[key]) {
        if (!v.IsSequence() || v.size() != 2) {
            throw ValidationError(std::string("config: '") + key + "' must be [lo, hi]");
        }
        out.lo = v[0].as<double>();
        out.hi = v[1].as<double>();
    }
}

} // namespace

Config parse_config(const std::string& yaml_text)
{
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    Config cfg;
    if (!root || root.IsNull()) return cfg;
    check_keys(root, "<root>", {"registration", "kernel", "synthetic", "crossval"});

    if (const auto r = root["registration"]) {
        check_keys(r, "registration",
                   {"clip_weight", "laplacian_weight", "max_iterations", "convergence_tol",
                    "armijo_c", "backtrack_factor", "max_backtracks", "distance_floor"});
        auto& p = cfg.registration;
        read(r, "clip_weight", p.clip_weight);
        read(r, "laplacian_weight", p.laplacian_weight);
        read(r, "max_iterations", p.max_iterations);
        read(r, "convergence_tol", p.convergence_tol);
        read(r, "armijo_c", p.armijo_c);
        read(r, "backtrack_factor", p.backtrack_factor);
        read(r, "max_backtracks", p.max_backtracks);
        read(r, "distance_floor", p.distance_floor);
        p.validate();
    }
    if (const auto k = root["kernel"]) {
        check_keys(k, "kernel",
                   {"lambda", "beta", "beta_scale", "divide_by_n", "sampling", "mode",
                    "interior_neighbors"});
        auto& c = cfg.kernel;
        read(k, "lambda", c.lambda);
        if (const auto b = k["beta"]; b && !b.IsNull()) {
            const std::string s = b.as<std::string>();
            if (s != "auto") c.beta = b.as<double>();
        }
        read(k, "beta_scale", c.beta_scale);
        read(k, "divide_by_n", c.divide_by_n);
        read(k, "interior_neighbors", c.interior_neighbors);
        if (const auto m = k["mode"]) c.mode = learning_mode_from_string(m.as<std::string>());
        if (const auto s = k["sampling"]) {
            check_keys(s, "kernel.sampling", {"mode", "n"});
            if (const auto m = s["mode"]) c.sampling_mode = sampling_mode_from_string(m.as<std::string>());
            read(s, "n", c.sampling_n);
        }
        if (!(c.lambda >= 0.0)) throw ValidationError("config: kernel.lambda must be >= 0");
        if (c.beta && !(*c.beta > 0.0)) throw ValidationError("config: kernel.beta must be > 0");
        if (!(c.beta_scale > 0.0)) throw ValidationError("config: kernel.beta_scale must be > 0");
        if (c.sampling_n < 1) throw ValidationError("config: kernel.sampling.n must be >= 1");
        if (c.interior_neighbors < 0) throw ValidationError("config: kernel.interior_neighbors must be >= 0");
    }
    if (const auto s = root["synthetic"]) {
        check_keys(s, "synthetic",
                   {"n_cases", "base_seed", "vertex_budget", "contraction_ratio", "rotation_deg", "sag_mm"});
        auto& c = cfg.synthetic;
        read(s, "n_cases", c.n_cases);
        read(s, "base_seed", c.base_seed);
        read(s, "vertex_budget", c.vertex_budget);
        read_range(s, "contraction_ratio", c.ranges.contraction_ratio);
        read_range(s, "rotation_deg", c.ranges.rotation_deg);
        read_range(s, "sag_mm", c.ranges.sag_mm);
    }
    if (const auto x = root["crossval"]) {
        check_keys(x, "crossval", {"correspondence", "normalize_frame", "threads"});
        auto& c = cfg.crossval;
        if (const auto v = x["correspondence"]) {
            const auto s = v.as<std::string>();
            if (s == "truth") c.correspondence = CorrespondenceSource::Truth;
            else if (s == "registration") c.correspondence = CorrespondenceSource::Registration;
            else throw ValidationError("config: crossval.correspondence must be truth or registration");
        }
        read(x, "normalize_frame", c.normalize_frame);
        read(x, "threads", c.threads);
        if (c.threads < 1) throw ValidationError("config: crossval.threads must be >= 1");
    }
    return cfg;
}

Config load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string default_config_yaml()
{
    return R"(# lungdeform configuration. Every key is optional; values shown are defaults.

registration:
  clip_weight: 1.0        # weight of the clip landmark term (0 = no clips)
  laplacian_weight: 1.0   # weight of the Laplacian-preservation term
  max_iterations: 300
  convergence_tol: 1.0e-6 # stop when the relative energy decrease falls below this
  armijo_c: 1.0e-4        # sufficient-decrease constant of the line search
  backtrack_factor: 0.5   # step shrink factor per backtracking trial
  max_backtracks: 40
  distance_floor: 1.0e-9  # mm; distances are clamped to this in preconditioner weights

kernel:
  lambda: 0.1             # ridge regularization
  beta: auto              # kernel width; auto = median heuristic
  beta_scale: 1.0         # multiplies the median-heuristic beta
  divide_by_n: true       # divide the squared feature distance by the sample count
  mode: per-region        # per-region | per-patient
  interior_neighbors: 0   # surface vertices used to move each interior point; 0 = all
  sampling:
    mode: fixed-ids       # fixed-ids (farthest-point references) | nearest-k
    n: 32                 # reference vertices per feature vector

synthetic:
  n_cases: 12
  base_seed: 1
  vertex_budget: 500
  contraction_ratio: [0.3, 0.6]   # deflated / inflated volume
  rotation_deg: [5.0, 25.0]       # rotation about the hilum axis
  sag_mm: [2.0, 10.0]             # gravity sag amplitude

crossval:
  correspondence: truth   # truth | registration (training displacement source)
  normalize_frame: false  # rigidly align cases to the reference case first
  threads: 1              # folds run in parallel; results do not depend on this
)";
}

} // namespace lungdeform
