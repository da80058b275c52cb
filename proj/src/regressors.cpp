#include "climreg/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "climreg/errors.hpp"

namespace climreg {

double KernelSpec::operator()(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                              const Eigen::Ref<const Eigen::RowVectorXd>& b) const {
    switch (kind) {
        case KernelKind::Linear: return a.dot(b);
        case KernelKind::Rbf: return std::exp(-gamma * (a - b).squaredNorm());
    }
    return 0.0;
}

Matrix kernel_matrix(const KernelSpec& kernel, const Matrix& x) {
    const Eigen::Index n = x.rows();
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            k(i, j) = kernel(x.row(i), x.row(j));
            k(j, i) = k(i, j);
        }
    }
    return k;
}

namespace {

// LIBSVM-style formulation over 2n variables a = (alpha, alpha*), with
// sign s_t = +1 for alpha and -1 for alpha*. beta = alpha - alpha*.
class SvrSmo {
public:
    SvrSmo(const Matrix& kernel, const Vector& y, double C, double epsilon)
        : k_(kernel), n_(y.size()), c_(C), a_(Vector::Zero(2 * y.size())), g_(2 * y.size()) {
        for (Eigen::Index t = 0; t < n_; ++t) {
            g_(t) = epsilon - y(t);
            g_(t + n_) = epsilon + y(t);
        }
    }

    double sign(Eigen::Index t) const { return t < n_ ? 1.0 : -1.0; }
    double q(Eigen::Index t, Eigen::Index u) const { return sign(t) * sign(u) * k_(t % n_, u % n_); }
    bool in_up(Eigen::Index t) const { return t < n_ ? a_(t) < c_ : a_(t) > 0.0; }
    bool in_low(Eigen::Index t) const { return t < n_ ? a_(t) > 0.0 : a_(t) < c_; }

    // Maximal violating pair; returns the gap m(a) - M(a).
    double select(Eigen::Index& i, Eigen::Index& j) const {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmin = std::numeric_limits<double>::infinity();
        i = j = -1;
        for (Eigen::Index t = 0; t < 2 * n_; ++t) {
            const double v = -sign(t) * g_(t);
            if (in_up(t) && v > gmax) {
                gmax = v;
                i = t;
            }
            if (in_low(t) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        if (i < 0 || j < 0) return 0.0;
        return gmax - gmin;
    }

    void update(Eigen::Index i, Eigen::Index j) {
        constexpr double tau = 1e-12;
        const double old_ai = a_(i);
        const double old_aj = a_(j);
        double ai = old_ai;
        double aj = old_aj;
        if (sign(i) != sign(j)) {
            double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if (quad <= 0.0) quad = tau;
            const double delta = (-g_(i) - g_(j)) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0.0) {
                if (aj < 0.0) {
                    aj = 0.0;
                    ai = diff;
                }
            } else if (ai < 0.0) {
                ai = 0.0;
                aj = -diff;
            }
            if (diff > 0.0) {
                if (ai > c_) {
                    ai = c_;
                    aj = c_ - diff;
                }
            } else if (aj > c_) {
                aj = c_;
                ai = c_ + diff;
            }
        } else {
            double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if (quad <= 0.0) quad = tau;
            const double delta = (g_(i) - g_(j)) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > c_) {
                if (ai > c_) {
                    ai = c_;
                    aj = sum - c_;
                }
            } else if (aj < 0.0) {
                aj = 0.0;
                ai = sum;
            }
            if (sum > c_) {
                if (aj > c_) {
                    aj = c_;
                    ai = sum - c_;
                }
            } else if (ai < 0.0) {
                ai = 0.0;
                aj = sum;
            }
        }
        a_(i) = ai;
        a_(j) = aj;
        const double di = ai - old_ai;
        const double dj = aj - old_aj;
        for (Eigen::Index t = 0; t < 2 * n_; ++t) g_(t) += q(t, i) * di + q(t, j) * dj;
    }

    // Offset rho with f(x) = sum beta K - rho.
    double rho() const {
        double ub = std::numeric_limits<double>::infinity();
        double lb = -std::numeric_limits<double>::infinity();
        double sum_free = 0.0;
        int n_free = 0;
        for (Eigen::Index t = 0; t < 2 * n_; ++t) {
            const double yg = sign(t) * g_(t);
            if (a_(t) >= c_) {
                if (sign(t) < 0) ub = std::min(ub, yg);
                else lb = std::max(lb, yg);
            } else if (a_(t) <= 0.0) {
                if (sign(t) > 0) ub = std::min(ub, yg);
                else lb = std::max(lb, yg);
            } else {
                ++n_free;
                sum_free += yg;
            }
        }
        return n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;
    }

    Vector beta() const { return a_.head(n_) - a_.tail(n_); }

private:
    const Matrix& k_;
    Eigen::Index n_;
    double c_;
    Vector a_;
    Vector g_;
};

void check_finite(const Matrix& x, const Vector& y) {
    if (!x.allFinite() || !y.allFinite()) fail(Errc::NonFiniteInput, "non-finite training data");
    if (x.rows() != y.size()) fail(Errc::DimensionMismatch, "feature rows != target count");
}

}  // namespace

SvrDualSolution solve_svr_dual(const Matrix& kernel, const Vector& y, double C, double epsilon,
                               double tol, long max_iter) {
    if (kernel.rows() != y.size() || kernel.cols() != y.size()) {
        fail(Errc::DimensionMismatch, "kernel matrix does not match target count");
    }
    if (!(C > 0.0) || !(epsilon >= 0.0)) fail(Errc::InvalidArgument, "require C > 0 and epsilon >= 0");
    SvrSmo smo(kernel, y, C, epsilon);
    SvrDualSolution out;
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    for (;;) {
        out.max_violation = smo.select(i, j);
        if (out.max_violation <= tol) {
            out.converged = true;
            break;
        }
        if (out.iterations >= max_iter) break;
        smo.update(i, j);
        ++out.iterations;
    }
    out.beta = smo.beta();
    out.bias = -smo.rho();
    return out;
}

double svr_dual_objective(const Matrix& kernel, const Vector& y, double epsilon, const Vector& beta) {
    return -0.5 * beta.dot(kernel * beta) - epsilon * beta.cwiseAbs().sum() + y.dot(beta);
}

SvrModel svr_train(const Matrix& x, const Vector& y, const SvrParams& params) {
    check_finite(x, y);
    if (x.rows() < 2) fail(Errc::TooFewSamples, "SVR needs at least 2 samples");
    if (params.kernel.kind == KernelKind::Rbf && !(params.kernel.gamma > 0.0)) {
        fail(Errc::InvalidArgument, "RBF gamma must be positive");
    }
    SvrModel model;
    model.kernel = params.kernel;
    model.C = params.C;
    model.epsilon = params.epsilon;
    auto [z, scaler] = standardize(x);
    model.feature_scaler = std::move(scaler);

    const double n = static_cast<double>(y.size());
    model.target_mean = y.mean();
    const double sd = std::sqrt((y.array() - model.target_mean).square().sum() / n);
    model.target_scale = sd > 1e-12 * std::max(1.0, std::abs(model.target_mean)) ? sd : 1.0;
    const Vector yz = (y.array() - model.target_mean) / model.target_scale;

    const Matrix k = kernel_matrix(params.kernel, z);
    const auto sol = solve_svr_dual(k, yz, params.C, params.epsilon, params.kkt_tol, params.max_iter);
    model.bias = sol.bias;
    model.max_violation = sol.max_violation;
    model.iterations = sol.iterations;
    model.converged = sol.converged;

    std::vector<std::size_t> keep;
    for (Eigen::Index i = 0; i < sol.beta.size(); ++i) {
        if (sol.beta(i) != 0.0) keep.push_back(static_cast<std::size_t>(i));
    }
    model.support_vectors = select_rows(z, keep);
    model.dual_coefs = select_rows(sol.beta, keep);
    return model;
}

double svr_decision(const SvrModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& z) {
    double f = model.bias;
    for (Eigen::Index i = 0; i < model.support_vectors.rows(); ++i) {
        f += model.dual_coefs(i) * model.kernel(model.support_vectors.row(i), z);
    }
    return f;
}

double svr_predict(const SvrModel& model, const Vector& x) {
    if (x.size() != model.dim()) {
        fail(Errc::DimensionMismatch, "expected " + std::to_string(model.dim()) + " features, got " +
                                          std::to_string(x.size()));
    }
    const Vector z = model.feature_scaler.transform(x);
    return svr_decision(model, z.transpose()) * model.target_scale + model.target_mean;
}

Vector LinearModel::raw_coefficients() const {
    return (coefficients.array() / feature_scaler.scale.array()).matrix();
}

double LinearModel::raw_intercept() const {
    return intercept - raw_coefficients().dot(feature_scaler.mean);
}

LinearModel ols_fit(const Matrix& x, const Vector& y, double ridge_jitter) {
    check_finite(x, y);
    if (x.rows() < x.cols() + 1 || x.rows() < 2) {
        fail(Errc::TooFewSamples, std::to_string(x.rows()) + " samples for " + std::to_string(x.cols()) +
                                      " features");
    }
    LinearModel model;
    auto [z, scaler] = standardize(x);
    model.feature_scaler = std::move(scaler);
    model.intercept = y.mean();
    const Vector yc = y.array() - model.intercept;
    Matrix gram = z.transpose() * z;
    gram.diagonal().array() += ridge_jitter;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        fail(Errc::SingularSystem, "normal equations are not positive definite");
    }
    model.coefficients = ldlt.solve(z.transpose() * yc);
    if (!model.coefficients.allFinite()) fail(Errc::SingularSystem, "normal equations have no finite solution");
    return model;
}

double ols_predict(const LinearModel& model, const Vector& x) {
    if (x.size() != model.dim()) {
        fail(Errc::DimensionMismatch, "expected " + std::to_string(model.dim()) + " features, got " +
                                          std::to_string(x.size()));
    }
    return model.intercept + model.coefficients.dot(model.feature_scaler.transform(x));
}

double rmse(const Vector& predicted, const Vector& actual) {
    if (predicted.size() != actual.size() || predicted.size() == 0) {
        fail(Errc::DimensionMismatch, "rmse needs equal-length nonempty vectors");
    }
    return std::sqrt((predicted - actual).squaredNorm() / static_cast<double>(predicted.size()));
}

CvReport cv_rmse(const Matrix& x, const Vector& y, const Trainer& trainer, std::size_t folds,
                 std::uint64_t seed) {
    if (x.rows() != y.size()) fail(Errc::DimensionMismatch, "feature rows != target count");
    const auto parts = make_folds(static_cast<std::size_t>(y.size()), folds, seed);
    CvReport report;
    for (std::size_t f = 0; f < parts.size(); ++f) {
        const auto train = training_indices(parts, f);
        Predictor predict;
        try {
            predict = trainer(select_rows(x, train), select_rows(y, train));
        } catch (const Error& e) {
            fail(e.code(), "fold " + std::to_string(f) + ": " + e.what());
        }
        Vector pred(static_cast<Eigen::Index>(parts[f].size()));
        for (std::size_t i = 0; i < parts[f].size(); ++i) {
            pred(static_cast<Eigen::Index>(i)) = predict(x.row(static_cast<Eigen::Index>(parts[f][i])).transpose());
        }
        report.per_fold_rmse.push_back(rmse(pred, select_rows(y, parts[f])));
    }
    double sum = 0.0;
    for (double r : report.per_fold_rmse) sum += r;
    report.mean_rmse = sum / static_cast<double>(report.per_fold_rmse.size());
    double ss = 0.0;
    for (double r : report.per_fold_rmse) ss += (r - report.mean_rmse) * (r - report.mean_rmse);
    report.std_rmse = std::sqrt(ss / static_cast<double>(report.per_fold_rmse.size()));
    return report;
}

std::vector<SvrParams> default_svr_grid(Eigen::Index feature_dim) {
    const double d = static_cast<double>(std::max<Eigen::Index>(feature_dim, 1));
    std::vector<SvrParams> grid;
    for (double c : {1.0, 10.0, 100.0}) {
        for (double eps : {0.01, 0.1, 0.5}) {
            for (double g : {0.1 / d, 1.0 / d, 10.0 / d}) {
                SvrParams p;
                p.C = c;
                p.epsilon = eps;
                p.kernel = {KernelKind::Rbf, g};
                grid.push_back(p);
            }
        }
    }
    return grid;
}

GridSearchResult grid_search(const Matrix& x, const Vector& y, const std::vector<SvrParams>& grid,
                             std::size_t folds, std::uint64_t seed, unsigned threads) {
    if (grid.empty()) fail(Errc::EmptyGrid, "hyperparameter grid is empty");
    std::vector<CvReport> reports(grid.size());
    parallel_for(grid.size(), threads, [&](std::size_t g) {
        const SvrParams params = grid[g];
        reports[g] = cv_rmse(
            x, y,
            [params](const Matrix& xt, const Vector& yt) -> Predictor {
                auto model = std::make_shared<SvrModel>(svr_train(xt, yt, params));
                return [model](const Vector& v) { return svr_predict(*model, v); };
            },
            folds, seed);
        reports[g].chosen_hyperparams = to_json(params);
    });
    GridSearchResult result;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        result.mean_rmse.push_back(reports[g].mean_rmse);
        if (reports[g].mean_rmse < reports[result.best_index].mean_rmse) result.best_index = g;
    }
    result.best = grid[result.best_index];
    result.report = reports[result.best_index];
    return result;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_vector(const nlohmann::json& a) {
    const auto values = a.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

nlohmann::json scaler_json(const Scaler& s) { return {{"mean", to_std(s.mean)}, {"scale", to_std(s.scale)}}; }

Scaler scaler_parse(const nlohmann::json& doc) {
    Scaler s{to_vector(doc.at("mean")), to_vector(doc.at("scale"))};
    if (s.mean.size() != s.scale.size()) fail(Errc::InvalidSpec, "scaler mean/scale length mismatch");
    return s;
}

}  // namespace

nlohmann::json to_json(const SvrParams& params) {
    return {{"C", params.C},
            {"epsilon", params.epsilon},
            {"kernel", params.kernel.kind == KernelKind::Rbf ? "rbf" : "linear"},
            {"gamma", params.kernel.gamma}};
}

nlohmann::json to_json(const SvrModel& model) {
    nlohmann::json svs = nlohmann::json::array();
    for (Eigen::Index i = 0; i < model.support_vectors.rows(); ++i) {
        svs.push_back(to_std(model.support_vectors.row(i).transpose()));
    }
    return {{"type", "svr"},
            {"kernel", model.kernel.kind == KernelKind::Rbf ? "rbf" : "linear"},
            {"gamma", model.kernel.gamma},
            {"C", model.C},
            {"epsilon", model.epsilon},
            {"support_vectors", svs},
            {"dual_coefs", to_std(model.dual_coefs)},
            {"bias", model.bias},
            {"feature_scaler", scaler_json(model.feature_scaler)},
            {"target_scaler", {{"mean", model.target_mean}, {"scale", model.target_scale}}},
            {"max_violation", model.max_violation},
            {"converged", model.converged}};
}

SvrModel svr_from_json(const nlohmann::json& doc) {
    try {
        SvrModel m;
        const auto kind = doc.at("kernel").get<std::string>();
        if (kind != "rbf" && kind != "linear") fail(Errc::InvalidSpec, "unknown kernel '" + kind + "'");
        m.kernel = {kind == "rbf" ? KernelKind::Rbf : KernelKind::Linear, doc.at("gamma").get<double>()};
        m.C = doc.at("C").get<double>();
        m.epsilon = doc.at("epsilon").get<double>();
        m.feature_scaler = scaler_parse(doc.at("feature_scaler"));
        const auto& svs = doc.at("support_vectors");
        m.support_vectors.resize(static_cast<Eigen::Index>(svs.size()), m.feature_scaler.dim());
        for (std::size_t i = 0; i < svs.size(); ++i) {
            const Vector v = to_vector(svs[i]);
            if (v.size() != m.feature_scaler.dim()) fail(Errc::InvalidSpec, "support vector dimension mismatch");
            m.support_vectors.row(static_cast<Eigen::Index>(i)) = v.transpose();
        }
        m.dual_coefs = to_vector(doc.at("dual_coefs"));
        if (m.dual_coefs.size() != m.support_vectors.rows()) {
            fail(Errc::InvalidSpec, "dual coefficient count mismatch");
        }
        m.bias = doc.at("bias").get<double>();
        m.target_mean = doc.at("target_scaler").at("mean").get<double>();
        m.target_scale = doc.at("target_scaler").at("scale").get<double>();
        m.max_violation = doc.value("max_violation", 0.0);
        m.converged = doc.value("converged", true);
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("SVR model JSON: ") + e.what());
    }
}

nlohmann::json to_json(const LinearModel& model) {
    return {{"type", "ols"},
            {"coefficients", to_std(model.coefficients)},
            {"intercept", model.intercept},
            {"feature_scaler", scaler_json(model.feature_scaler)}};
}

LinearModel linear_from_json(const nlohmann::json& doc) {
    try {
        LinearModel m;
        m.coefficients = to_vector(doc.at("coefficients"));
        m.intercept = doc.at("intercept").get<double>();
        m.feature_scaler = scaler_parse(doc.at("feature_scaler"));
        if (m.feature_scaler.dim() != m.coefficients.size()) {
            fail(Errc::InvalidSpec, "coefficient count does not match scaler");
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("linear model JSON: ") + e.what());
    }
}

}  // namespace climreg
