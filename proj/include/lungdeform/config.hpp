#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "lungdeform/kernel_deform.hpp"
#include "lungdeform/registration.hpp"
#include "lungdeform/synthetic.hpp"

namespace lungdeform {

struct KernelConfig {
    double lambda = 0.1;
    std::optional<double> beta; // unset: median heuristic
    double beta_scale = 1.0;
    bool divide_by_n = true;
    SamplingScheme::Mode sampling_mode = SamplingScheme::Mode::FixedIds;
    int sampling_n = 32;
    LearningMode mode = LearningMode::PerRegion;
    int interior_neighbors = 0; // 0: all surface vertices

    FitOptions fit_options() const { return {beta, beta_scale, lambda, divide_by_n}; }
};

struct SyntheticConfig {
    int n_cases = 12;
    std::uint64_t base_seed = 1;
    int vertex_budget = 500;
    DatasetRanges ranges;
};

enum class CorrespondenceSource { Truth, Registration };

struct CrossvalConfig {
    // Where training displacement fields come from. `truth` falls back to
    // registration for cases that ship no truth field.
    CorrespondenceSource correspondence = CorrespondenceSource::Truth;
    bool normalize_frame = false;
    int threads = 1;
};

struct Config {
    RegistrationParams registration;
    KernelConfig kernel;
    SyntheticConfig synthetic;
    CrossvalConfig crossval;
};

// YAML file; any key left out keeps its default. Unknown keys are errors.
Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& yaml_text);

// Every key with its default value and a comment.
std::string default_config_yaml();

} // namespace lungdeform
