#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "climreg/grid_store.hpp"
#include "climreg/numeric.hpp"

namespace climreg {

// One diagonal-covariance Gaussian. Parameters live in the standardized
// space of the owning model.
struct GaussianComponent {
    double weight = 1.0;
    Vector mean;
    Vector variance;
};

struct MixtureModel {
    std::vector<GaussianComponent> components;
    Scaler scaler;  // applied to raw points before any density evaluation
    double final_log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;

    int k() const noexcept { return static_cast<int>(components.size()); }
    Eigen::Index dim() const noexcept { return scaler.dim(); }
};

struct EmConfig {
    int max_iter = 200;
    double rel_tol = 1e-7;
    double variance_floor = 1e-6;
    std::uint64_t seed = 0;
    int n_init = 5;
};

// Per-restart log-likelihood traces (one value per EM iteration, evaluated at
// the parameters entering that iteration, followed by the final value).
struct EmDiagnostics {
    std::vector<std::vector<double>> traces;
    std::vector<bool> failed;
};

struct KMeansModel {
    Matrix centroids;  // standardized space, one per row
    Scaler scaler;
    double inertia = 0.0;
    int iterations = 0;

    int k() const noexcept { return static_cast<int>(centroids.rows()); }
};

struct KMeansConfig {
    int max_iter = 300;
    double tol = 1e-9;
    std::uint64_t seed = 0;
    int n_init = 10;
};

struct KMeansDiagnostics {
    std::vector<std::vector<double>> inertia_traces;
};

struct SelectKConfig {
    int k_min = 1;
    int k_max = 12;
    std::size_t folds = 10;
    std::uint64_t seed = 0;
    double abs_improve_tol = 0.0;
    EmConfig em{};
    unsigned threads = 1;
};

struct SelectKResult {
    int k = 1;
    std::vector<double> mean_heldout_log_likelihood;  // index i -> k_min + i
};

// --- mixture primitives; `points` are raw and standardized with model.scaler ---

Matrix e_step(const Matrix& points, const MixtureModel& model);
double log_likelihood(const Matrix& points, const MixtureModel& model);

// Responsibility-weighted parameter update. Points are in standardized space.
std::vector<GaussianComponent> m_step(const Matrix& standardized_points, const Matrix& responsibilities,
                                      double variance_floor = 1e-6);

// Log of w_j N(x_i | mu_j, diag var_j) for standardized points.
Matrix log_weighted_densities(const Matrix& standardized_points,
                              const std::vector<GaussianComponent>& components);

// Runs EM from the given starting components on standardized points.
MixtureModel em_iterate(const Matrix& standardized_points, std::vector<GaussianComponent> init,
                        const EmConfig& config, std::vector<double>* trace = nullptr);

MixtureModel em_fit(const Matrix& points, int k, const EmConfig& config = {},
                    EmDiagnostics* diagnostics = nullptr);

SelectKResult select_k_cv(const Matrix& points, const SelectKConfig& config = {});

RegionAssignment assign_hard(const Matrix& points, const MixtureModel& model);

KMeansModel kmeans_fit(const Matrix& points, int k, const KMeansConfig& config = {},
                       KMeansDiagnostics* diagnostics = nullptr);
RegionAssignment kmeans_assign(const Matrix& points, const KMeansModel& model);

// Stacks climatology vectors into a points matrix (one row per cell).
Matrix climatology_matrix(std::span<const ClimatologyVector> climatology);

nlohmann::json to_json(const MixtureModel& model);
MixtureModel mixture_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const KMeansModel& model);
KMeansModel kmeans_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Scaler& scaler);
Scaler scaler_from_json(const nlohmann::json& doc);

}  // namespace climreg
