#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lungdeform/mesh.hpp"

namespace lungdeform {

// How the n reference vertices of a feature vector are chosen.
struct SamplingScheme {
    enum class Mode { NearestK, FixedIds };

    Mode mode = Mode::FixedIds;
    int n = 32;
    // FixedIds: n shared reference vertex indices, plus a spare that stands
    // in for a reference when the owner vertex is that reference itself.
    std::vector<int> reference_ids;
    int spare_id = -1;

    void validate(std::size_t vertex_count) const;
};

// Farthest-point sampling of n + 1 vertices (n references and the spare),
// seeded at the vertex farthest from the centroid.
SamplingScheme fixed_id_scheme(const SurfaceMesh& reference, int n);
SamplingScheme nearest_k_scheme(int n);

// Reference vertex indices used for `owner`, in scheme order. Never contains
// the owner itself.
std::vector<int> sampled_indices(const SurfaceMesh& m, const SamplingScheme& s, int owner);

// Row-major bundle of feature vectors: row i is
// [v_i - v_j1, v_i - v_j2, ..., v_i - v_jn] flattened to 3n entries.
struct FeatureSet {
    Eigen::MatrixXd values;
    std::vector<int> owner_vertex;
    std::vector<std::string> owner_case;

    Eigen::Index size() const { return values.rows(); }
    Eigen::Index dimension() const { return values.cols(); }
};

FeatureSet extract_features(const SurfaceMesh& m, const SamplingScheme& s,
                            const std::string& case_id = {});

// k(x_i, x_j) = exp(-beta * |x_i - x_j|^2 / N). With divide_by_n false the
// /N factor is dropped.
double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& xi,
                       const Eigen::Ref<const Eigen::VectorXd>& xj, double beta, long N,
                       bool divide_by_n = true);

enum class LearningMode { PerRegion, PerPatient };

std::string to_string(LearningMode mode);
LearningMode learning_mode_from_string(const std::string& s);
std::string to_string(SamplingScheme::Mode mode);
SamplingScheme::Mode sampling_mode_from_string(const std::string& s);

// Fitted kernel ridge regressor. Targets are rows of `targets`; per-region
// models have 3 columns (one displacement), per-patient models 3V.
struct KernelModel {
    Eigen::MatrixXd features; // N x 3n (per-patient: N x 3nV)
    Eigen::MatrixXd alpha;    // N x outputs
    double beta = 1.0;
    double lambda = 0.1;
    bool divide_by_n = true;
    SamplingScheme sampling;
    LearningMode mode = LearningMode::PerRegion;
    int vertex_count = 0; // mesh size the model was trained on

    Eigen::Index sample_count() const { return features.rows(); }
};

// Gram matrix K_ij = k(x_i, x_j) over the rows of X.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, double beta, bool divide_by_n = true);

// Cross kernel between query rows Q and training rows X, using N = X.rows().
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& X, double beta,
                             bool divide_by_n = true);

// Median heuristic: beta = N / median |x_i - x_j|^2 (divide_by_n) or
// 1 / median |x_i - x_j|^2 otherwise. The median is over pairs drawn from at
// most `max_samples` evenly strided rows.
double median_heuristic_beta(const Eigen::MatrixXd& X, bool divide_by_n = true,
                             Eigen::Index max_samples = 1000);

struct FitOptions {
    std::optional<double> beta; // unset: median heuristic
    double beta_scale = 1.0;    // multiplies the heuristic value
    double lambda = 0.1;
    bool divide_by_n = true;
};

// Closed-form weights alpha = (K + lambda I)^{-1} Y, all output columns
// sharing one Cholesky factorization. Throws NumericalError
// "singular system, increase lambda" when K + lambda I is not positive definite.
KernelModel fit(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const FitOptions& options);

// y(x) = sum_j alpha_j k(x, x_j) for each row of `queries`.
Eigen::MatrixXd predict_rows(const KernelModel& model, const Eigen::MatrixXd& queries);

// Displacement field of a mesh, from its own features.
DisplacementField predict(const KernelModel& model, const FeatureSet& features);
DisplacementField predict(const KernelModel& model, const SurfaceMesh& inflated);

// Ridge cost ||Y - K alpha||^2 + lambda * tr(alpha^T K alpha).
double ridge_cost(const Eigen::MatrixXd& K, const Eigen::MatrixXd& Y, const Eigen::MatrixXd& alpha,
                  double lambda);

// A registered (or ground-truth) pair: inflated mesh and its per-vertex
// displacement to the deflated state.
struct TrainingCase {
    std::string id;
    SurfaceMesh inflated;
    DisplacementField displacement;
};

struct TrainingSet {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Y;
    std::vector<std::string> sample_case; // provenance, one per row
};

// Per-region: one sample per vertex per case (N = total vertices).
// Per-patient: one concatenated sample per case (N = case count).
TrainingSet build_training_set(const std::vector<TrainingCase>& cases, const SamplingScheme& s,
                               LearningMode mode);

// Fits on a training set and attaches the sampling scheme and mode.
KernelModel train(const std::vector<TrainingCase>& cases, const SamplingScheme& s,
                  LearningMode mode, const FitOptions& options);

// Displacement of interior points: normalized weights area_i / d_i^3 over
// the m nearest surface vertices, m = 0 meaning all of them. Over the whole
// surface this is a discrete Poisson integral, exact for linear fields on a
// sphere. A point within 1e-12 mm of a vertex takes that vertex's
// displacement exactly.
std::vector<Vec3> interpolate_interior(const SurfaceMesh& surface_before,
                                       const DisplacementField& surface_disp,
                                       const InteriorPointSet& interior, int neighbors = 0);

} // namespace lungdeform
