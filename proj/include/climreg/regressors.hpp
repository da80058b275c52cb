#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "climreg/numeric.hpp"

namespace climreg {

enum class KernelKind { Rbf, Linear };

struct KernelSpec {
    KernelKind kind = KernelKind::Rbf;
    double gamma = 1.0;  // rbf only, > 0

    double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                      const Eigen::Ref<const Eigen::RowVectorXd>& b) const;
};

Matrix kernel_matrix(const KernelSpec& kernel, const Matrix& x);

struct SvrParams {
    double C = 10.0;
    double epsilon = 0.1;  // in standardized target units
    KernelSpec kernel{};
    std::uint64_t seed = 0;
    double kkt_tol = 1e-3;
    long max_iter = 10'000'000;
};

// Solution of the epsilon-SVR dual
//   max  -1/2 b'Kb - eps * sum|b_i| + y'b   s.t.  sum b_i = 0,  |b_i| <= C
// with decision function f(x) = sum_i b_i K(x_i, x) + bias.
struct SvrDualSolution {
    Vector beta;
    double bias = 0.0;
    double max_violation = 0.0;  // maximal KKT violating-pair gap at exit
    long iterations = 0;
    bool converged = false;
};

SvrDualSolution solve_svr_dual(const Matrix& kernel, const Vector& y, double C, double epsilon,
                               double tol = 1e-3, long max_iter = 10'000'000);

double svr_dual_objective(const Matrix& kernel, const Vector& y, double epsilon, const Vector& beta);

struct SvrModel {
    KernelSpec kernel;
    double C = 10.0;
    double epsilon = 0.1;
    Matrix support_vectors;  // standardized feature space
    Vector dual_coefs;       // beta_i for each stored vector, never zero
    double bias = 0.0;
    Scaler feature_scaler;
    double target_mean = 0.0;
    double target_scale = 1.0;
    double max_violation = 0.0;
    long iterations = 0;
    bool converged = true;

    Eigen::Index dim() const noexcept { return feature_scaler.dim(); }
};

SvrModel svr_train(const Matrix& x, const Vector& y, const SvrParams& params = {});
double svr_predict(const SvrModel& model, const Vector& x);
// Decision value in standardized target units for an already standardized x.
double svr_decision(const SvrModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& z);

// Affine model fitted on standardized features:
// y = intercept + coefficients . ((x - mean) / scale).
struct LinearModel {
    Vector coefficients;
    double intercept = 0.0;
    Scaler feature_scaler;

    Eigen::Index dim() const noexcept { return coefficients.size(); }
    Vector raw_coefficients() const;
    double raw_intercept() const;
};

LinearModel ols_fit(const Matrix& x, const Vector& y, double ridge_jitter = 1e-10);
double ols_predict(const LinearModel& model, const Vector& x);

// Fitted model reduced to a batch predictor.
using Predictor = std::function<double(const Vector&)>;
using Trainer = std::function<Predictor(const Matrix&, const Vector&)>;

struct CvReport {
    std::vector<double> per_fold_rmse;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;  // population standard deviation across folds
    nlohmann::json chosen_hyperparams = nlohmann::json::object();
};

double rmse(const Vector& predicted, const Vector& actual);

CvReport cv_rmse(const Matrix& x, const Vector& y, const Trainer& trainer, std::size_t folds = 10,
                 std::uint64_t seed = 0);

std::vector<SvrParams> default_svr_grid(Eigen::Index feature_dim);

struct GridSearchResult {
    SvrParams best;
    std::size_t best_index = 0;
    CvReport report;
    std::vector<double> mean_rmse;  // per grid point, in grid order
};

GridSearchResult grid_search(const Matrix& x, const Vector& y, const std::vector<SvrParams>& grid,
                             std::size_t folds = 10, std::uint64_t seed = 0, unsigned threads = 1);

nlohmann::json to_json(const SvrParams& params);
nlohmann::json to_json(const SvrModel& model);
SvrModel svr_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const LinearModel& model);
LinearModel linear_from_json(const nlohmann::json& doc);

}  // namespace climreg
