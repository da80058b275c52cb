#include "climreg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "climreg/errors.hpp"

namespace climreg {

namespace {

constexpr double kMinWeight = 1e-12;

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    const double m = row.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((row.array() - m).exp().sum());
}

Vector row_log_sum_exp(const Matrix& log_dens) {
    Vector out(log_dens.rows());
    for (Eigen::Index i = 0; i < log_dens.rows(); ++i) out(i) = log_sum_exp(log_dens.row(i));
    return out;
}

Matrix responsibilities_from(const Matrix& log_dens, const Vector& lse) {
    Matrix r(log_dens.rows(), log_dens.cols());
    for (Eigen::Index i = 0; i < log_dens.rows(); ++i) {
        r.row(i) = (log_dens.row(i).array() - lse(i)).exp();
    }
    return r;
}

void check_points(const Matrix& points, Eigen::Index dim) {
    if (points.cols() != dim) {
        fail(Errc::DimensionMismatch, "points have " + std::to_string(points.cols()) +
                                          " columns, model expects " + std::to_string(dim));
    }
    if (!points.allFinite()) fail(Errc::NonFiniteInput, "non-finite value in points");
}

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                        const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    return (a - b).squaredNorm();
}

// Nearest centroid per row; ties go to the lowest index.
std::vector<int> nearest(const Matrix& z, const Matrix& centroids, Vector* distances = nullptr) {
    std::vector<int> labels(static_cast<std::size_t>(z.rows()));
    if (distances) distances->resize(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        int best = 0;
        double best_d = squared_distance(z.row(i), centroids.row(0));
        for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
            const double d = squared_distance(z.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = best;
        if (distances) (*distances)(i) = best_d;
    }
    return labels;
}

Matrix kmeans_plus_plus(const Matrix& z, int k, std::mt19937_64& rng) {
    const Eigen::Index n = z.rows();
    Matrix centroids(k, z.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centroids.row(0) = z.row(pick(rng));
    Vector d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = squared_distance(z.row(i), centroids.row(0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target && d2(i) > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centroids.row(c) = z.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) {
            d2(i) = std::min(d2(i), squared_distance(z.row(i), centroids.row(c)));
        }
    }
    return centroids;
}

struct LloydResult {
    Matrix centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

LloydResult lloyd(const Matrix& z, Matrix centroids, const KMeansConfig& config) {
    const Eigen::Index n = z.rows();
    const int k = static_cast<int>(centroids.rows());
    LloydResult res;
    Vector dist;
    res.labels = nearest(z, centroids, &dist);
    res.inertia = dist.sum();
    res.trace.push_back(res.inertia);

    for (int it = 1; it <= config.max_iter; ++it) {
        Matrix next = Matrix::Zero(k, z.cols());
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = res.labels[static_cast<std::size_t>(i)];
            next.row(c) += z.row(i);
            ++counts[static_cast<std::size_t>(c)];
        }
        bool reseeded = false;
        Vector taken = dist;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
            }
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) {
                // Empty cluster: move it onto the point farthest from its centroid.
                Eigen::Index far = 0;
                taken.maxCoeff(&far);
                next.row(c) = z.row(far);
                taken(far) = -1.0;
                reseeded = true;
            }
        }
        const double shift = (next - centroids).squaredNorm();
        centroids = std::move(next);
        auto labels = nearest(z, centroids, &dist);
        const bool unchanged = labels == res.labels;
        res.labels = std::move(labels);
        res.inertia = dist.sum();
        res.trace.push_back(res.inertia);
        res.iterations = it;
        if ((unchanged && !reseeded) || shift <= config.tol) break;
    }
    res.centroids = std::move(centroids);
    return res;
}

// Single-point transfers (Hartigan): move a point when doing so lowers the
// total inertia. Leaves a Lloyd fixed point that no one-point move improves.
void refine_transfers(const Matrix& z, LloydResult& res) {
    const Eigen::Index n = z.rows();
    const auto k = static_cast<int>(res.centroids.rows());
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (int c : res.labels) counts[static_cast<std::size_t>(c)] += 1.0;
    bool moved = true;
    while (moved) {
        moved = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int a = res.labels[static_cast<std::size_t>(i)];
            const double na = counts[static_cast<std::size_t>(a)];
            if (na <= 1.0) continue;
            const double remove = na / (na - 1.0) * squared_distance(z.row(i), res.centroids.row(a));
            int best = a;
            double best_gain = 0.0;
            for (int b = 0; b < k; ++b) {
                if (b == a) continue;
                const double nb = counts[static_cast<std::size_t>(b)];
                const double add = nb / (nb + 1.0) * squared_distance(z.row(i), res.centroids.row(b));
                const double gain = remove - add;
                if (gain > best_gain * (1.0 + 1e-12) + 1e-12 * remove) {
                    best_gain = gain;
                    best = b;
                }
            }
            if (best == a) continue;
            const double nb = counts[static_cast<std::size_t>(best)];
            res.centroids.row(a) = (res.centroids.row(a) * na - z.row(i)) / (na - 1.0);
            res.centroids.row(best) = (res.centroids.row(best) * nb + z.row(i)) / (nb + 1.0);
            counts[static_cast<std::size_t>(a)] -= 1.0;
            counts[static_cast<std::size_t>(best)] += 1.0;
            res.labels[static_cast<std::size_t>(i)] = best;
            moved = true;
        }
    }
    // Exact centroids and inertia for the final partition.
    Matrix exact = Matrix::Zero(k, z.cols());
    for (Eigen::Index i = 0; i < n; ++i) exact.row(res.labels[static_cast<std::size_t>(i)]) += z.row(i);
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0.0) {
            exact.row(c) /= counts[static_cast<std::size_t>(c)];
        } else {
            exact.row(c) = res.centroids.row(c);
        }
    }
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        inertia += squared_distance(z.row(i), exact.row(res.labels[static_cast<std::size_t>(i)]));
    }
    res.centroids = std::move(exact);
    if (inertia < res.inertia) {
        res.inertia = inertia;
        res.trace.push_back(inertia);
    }
}

LloydResult kmeans_standardized(const Matrix& z, int k, const KMeansConfig& config,
                                KMeansDiagnostics* diagnostics) {
    LloydResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, config.n_init); ++r) {
        std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(r)));
        auto run = lloyd(z, kmeans_plus_plus(z, k, rng), config);
        refine_transfers(z, run);
        if (diagnostics) diagnostics->inertia_traces.push_back(run.trace);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    return best;
}

std::vector<GaussianComponent> init_from_kmeans(const Matrix& z, int k, std::uint64_t seed,
                                                double variance_floor) {
    KMeansConfig kc;
    kc.seed = seed;
    kc.n_init = 1;
    const auto km = kmeans_standardized(z, k, kc, nullptr);
    const double n = static_cast<double>(z.rows());
    const Vector global_mean = z.colwise().mean().transpose();
    const Vector global_var =
        ((z.rowwise() - global_mean.transpose()).array().square().colwise().sum() / n).transpose();

    std::vector<GaussianComponent> comps(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < km.labels.size(); ++i) {
            if (km.labels[i] == c) members.push_back(i);
        }
        auto& g = comps[static_cast<std::size_t>(c)];
        g.mean = km.centroids.row(c).transpose();
        if (members.size() >= 2) {
            const Matrix m = select_rows(z, members);
            g.variance = ((m.rowwise() - g.mean.transpose()).array().square().colwise().sum() /
                          static_cast<double>(members.size()))
                             .transpose();
        } else {
            g.variance = global_var;
        }
        g.variance = g.variance.cwiseMax(variance_floor);
        g.weight = std::max<double>(static_cast<double>(members.size()), 1.0);
    }
    double total = 0.0;
    for (const auto& g : comps) total += g.weight;
    for (auto& g : comps) g.weight /= total;
    return comps;
}

MixtureModel fit_standardized(const Matrix& z, int k, const EmConfig& config,
                              EmDiagnostics* diagnostics) {
    if (k < 1) fail(Errc::InvalidArgument, "component count must be at least 1");
    if (z.rows() < k) {
        fail(Errc::TooFewPoints, std::to_string(z.rows()) + " points cannot support " +
                                     std::to_string(k) + " components");
    }
    MixtureModel best;
    bool have = false;
    std::string last_failure;
    for (int r = 0; r < std::max(1, config.n_init); ++r) {
        std::vector<double> trace;
        try {
            auto init = init_from_kmeans(z, k, derive_seed(config.seed, static_cast<std::uint64_t>(r)),
                                         config.variance_floor);
            auto model = em_iterate(z, std::move(init), config, &trace);
            if (diagnostics) {
                diagnostics->traces.push_back(trace);
                diagnostics->failed.push_back(false);
            }
            if (!have || model.final_log_likelihood > best.final_log_likelihood) {
                best = std::move(model);
                have = true;
            }
        } catch (const Error& e) {
            if (e.code() != Errc::DegenerateComponent) throw;
            last_failure = e.what();
            if (diagnostics) {
                diagnostics->traces.push_back(trace);
                diagnostics->failed.push_back(true);
            }
        }
    }
    if (!have) fail(Errc::DegenerateComponent, "every EM restart degenerated (" + last_failure + ")");
    return best;
}

}  // namespace

Matrix log_weighted_densities(const Matrix& z, const std::vector<GaussianComponent>& components) {
    const Eigen::Index n = z.rows();
    const auto k = static_cast<Eigen::Index>(components.size());
    const double log2pi = std::log(2.0 * std::numbers::pi);
    Matrix out(n, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto& g = components[static_cast<std::size_t>(j)];
        if (g.mean.size() != z.cols() || g.variance.size() != z.cols()) {
            fail(Errc::DimensionMismatch, "component dimension does not match points");
        }
        const double log_norm = std::log(g.weight) -
                                0.5 * (static_cast<double>(z.cols()) * log2pi +
                                       g.variance.array().log().sum());
        const Eigen::RowVectorXd inv_var = g.variance.cwiseInverse().transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double maha = ((z.row(i) - g.mean.transpose()).array().square() * inv_var.array()).sum();
            out(i, j) = log_norm - 0.5 * maha;
        }
    }
    return out;
}

Matrix e_step(const Matrix& points, const MixtureModel& model) {
    check_points(points, model.dim());
    const Matrix z = model.scaler.transform(points);
    const Matrix log_dens = log_weighted_densities(z, model.components);
    return responsibilities_from(log_dens, row_log_sum_exp(log_dens));
}

double log_likelihood(const Matrix& points, const MixtureModel& model) {
    check_points(points, model.dim());
    const Matrix z = model.scaler.transform(points);
    return row_log_sum_exp(log_weighted_densities(z, model.components)).sum();
}

std::vector<GaussianComponent> m_step(const Matrix& z, const Matrix& resp, double variance_floor) {
    if (resp.rows() != z.rows()) fail(Errc::DimensionMismatch, "responsibility rows != point count");
    const double n = static_cast<double>(z.rows());
    std::vector<GaussianComponent> comps(static_cast<std::size_t>(resp.cols()));
    for (Eigen::Index j = 0; j < resp.cols(); ++j) {
        const double nj = resp.col(j).sum();
        if (!(nj / n >= kMinWeight)) {
            fail(Errc::DegenerateComponent, "component " + std::to_string(j) + " weight " +
                                                format_double(nj / n) + " underflows");
        }
        auto& g = comps[static_cast<std::size_t>(j)];
        g.weight = nj / n;
        g.mean = (z.transpose() * resp.col(j)) / nj;
        const Matrix centered = z.rowwise() - g.mean.transpose();
        g.variance = (centered.array().square().matrix().transpose() * resp.col(j)) / nj;
        g.variance = g.variance.cwiseMax(variance_floor);
    }
    return comps;
}

MixtureModel em_iterate(const Matrix& z, std::vector<GaussianComponent> comps, const EmConfig& config,
                        std::vector<double>* trace) {
    MixtureModel model;
    model.scaler = Scaler::identity(z.cols());
    double prev = -std::numeric_limits<double>::infinity();
    double ll = prev;
    bool converged = false;
    int it = 0;
    for (; it < config.max_iter; ++it) {
        const Matrix log_dens = log_weighted_densities(z, comps);
        const Vector lse = row_log_sum_exp(log_dens);
        ll = lse.sum();
        if (trace) trace->push_back(ll);
        if (it > 0 && ll - prev < config.rel_tol * std::abs(prev)) {
            converged = true;
            break;
        }
        comps = m_step(z, responsibilities_from(log_dens, lse), config.variance_floor);
        prev = ll;
    }
    if (!converged) {
        ll = row_log_sum_exp(log_weighted_densities(z, comps)).sum();
        if (trace) trace->push_back(ll);
    }
    model.components = std::move(comps);
    model.final_log_likelihood = ll;
    model.iterations = it;
    model.converged = converged;
    return model;
}

MixtureModel em_fit(const Matrix& points, int k, const EmConfig& config, EmDiagnostics* diagnostics) {
    if (k < 1) fail(Errc::InvalidArgument, "component count must be at least 1");
    if (points.rows() < std::max<Eigen::Index>(k, 2)) {
        fail(Errc::TooFewPoints, std::to_string(points.rows()) + " points cannot support " +
                                     std::to_string(k) + " components");
    }
    auto [z, scaler] = standardize(points);
    auto model = fit_standardized(z, k, config, diagnostics);
    model.scaler = std::move(scaler);
    return model;
}

SelectKResult select_k_cv(const Matrix& points, const SelectKConfig& config) {
    if (config.k_min < 1 || config.k_max < config.k_min) {
        fail(Errc::InvalidArgument, "invalid k range");
    }
    if (points.rows() < static_cast<Eigen::Index>(std::max<std::size_t>(config.folds, 2))) {
        fail(Errc::TooFewPoints, std::to_string(points.rows()) + " points for " +
                                     std::to_string(config.folds) + " folds");
    }
    const Matrix z = standardize(points).points;
    const auto folds = make_folds(static_cast<std::size_t>(z.rows()), config.folds, config.seed);

    // Mean held-out log-likelihood; nullopt when some fold cannot be fitted.
    auto score = [&](int k) -> std::optional<double> {
        std::vector<double> per_fold(folds.size(), 0.0);
        std::vector<char> ok(folds.size(), 1);
        parallel_for(folds.size(), config.threads, [&](std::size_t f) {
            const Matrix train = select_rows(z, training_indices(folds, f));
            const Matrix test = select_rows(z, folds[f]);
            EmConfig em = config.em;
            em.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k) * 1000 + f);
            try {
                const auto model = fit_standardized(train, k, em, nullptr);
                per_fold[f] = row_log_sum_exp(log_weighted_densities(test, model.components)).sum();
            } catch (const Error& e) {
                if (e.code() != Errc::DegenerateComponent && e.code() != Errc::TooFewPoints) throw;
                ok[f] = 0;
            }
        });
        if (std::find(ok.begin(), ok.end(), 0) != ok.end()) return std::nullopt;
        double total = 0.0;
        for (double v : per_fold) total += v;
        return total / static_cast<double>(folds.size());
    };

    SelectKResult result;
    result.k = config.k_min;
    auto first = score(config.k_min);
    if (!first) fail(Errc::DegenerateComponent, "cannot fit k=" + std::to_string(config.k_min) + " on every fold");
    result.mean_heldout_log_likelihood.push_back(*first);
    for (int k = config.k_min + 1; k <= config.k_max; ++k) {
        const auto s = score(k);
        if (!s) break;
        result.mean_heldout_log_likelihood.push_back(*s);
        if (!(*s > result.mean_heldout_log_likelihood[result.mean_heldout_log_likelihood.size() - 2] +
                       config.abs_improve_tol)) {
            break;
        }
        result.k = k;
    }
    return result;
}

RegionAssignment assign_hard(const Matrix& points, const MixtureModel& model) {
    const Matrix resp = e_step(points, model);
    RegionAssignment out;
    out.region_count = model.k();
    out.region_of.resize(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < resp.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < resp.cols(); ++j) {
            if (resp(i, j) > resp(i, best)) best = static_cast<int>(j);
        }
        out.region_of[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

KMeansModel kmeans_fit(const Matrix& points, int k, const KMeansConfig& config,
                       KMeansDiagnostics* diagnostics) {
    if (k < 1) fail(Errc::InvalidArgument, "cluster count must be at least 1");
    if (points.rows() < std::max<Eigen::Index>(k, 2)) {
        fail(Errc::TooFewPoints, std::to_string(points.rows()) + " points cannot support " +
                                     std::to_string(k) + " clusters");
    }
    auto [z, scaler] = standardize(points);
    auto best = kmeans_standardized(z, k, config, diagnostics);
    KMeansModel model;
    model.centroids = std::move(best.centroids);
    model.scaler = std::move(scaler);
    model.inertia = best.inertia;
    model.iterations = best.iterations;
    return model;
}

RegionAssignment kmeans_assign(const Matrix& points, const KMeansModel& model) {
    check_points(points, model.scaler.dim());
    RegionAssignment out;
    out.region_count = model.k();
    out.region_of = nearest(model.scaler.transform(points), model.centroids);
    return out;
}

Matrix climatology_matrix(std::span<const ClimatologyVector> climatology) {
    Matrix m(static_cast<Eigen::Index>(climatology.size()), static_cast<Eigen::Index>(kNumVariables));
    for (std::size_t i = 0; i < climatology.size(); ++i) {
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = climatology[i].means[v];
        }
    }
    return m;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_vector(const nlohmann::json& a) {
    const auto values = a.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

nlohmann::json to_json(const Scaler& scaler) {
    return {{"mean", to_std(scaler.mean)}, {"scale", to_std(scaler.scale)}};
}

Scaler scaler_from_json(const nlohmann::json& doc) {
    Scaler s{to_vector(doc.at("mean")), to_vector(doc.at("scale"))};
    if (s.mean.size() != s.scale.size()) fail(Errc::InvalidSpec, "scaler mean/scale length mismatch");
    return s;
}

nlohmann::json to_json(const MixtureModel& model) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& g : model.components) {
        comps.push_back({{"weight", g.weight}, {"mean", to_std(g.mean)}, {"variance", to_std(g.variance)}});
    }
    return {{"type", "gaussian_mixture"},
            {"k", model.k()},
            {"scaler", to_json(model.scaler)},
            {"components", comps},
            {"final_log_likelihood", model.final_log_likelihood}};
}

MixtureModel mixture_from_json(const nlohmann::json& doc) {
    try {
        MixtureModel m;
        m.scaler = scaler_from_json(doc.at("scaler"));
        for (const auto& c : doc.at("components")) {
            m.components.push_back({c.at("weight").get<double>(), to_vector(c.at("mean")),
                                    to_vector(c.at("variance"))});
        }
        m.final_log_likelihood = doc.at("final_log_likelihood").get<double>();
        if (doc.at("k").get<int>() != m.k()) fail(Errc::InvalidSpec, "k does not match component count");
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("mixture model JSON: ") + e.what());
    }
}

nlohmann::json to_json(const KMeansModel& model) {
    nlohmann::json centroids = nlohmann::json::array();
    for (Eigen::Index c = 0; c < model.centroids.rows(); ++c) {
        centroids.push_back(to_std(model.centroids.row(c).transpose()));
    }
    return {{"type", "kmeans"},
            {"k", model.k()},
            {"scaler", to_json(model.scaler)},
            {"centroids", centroids},
            {"inertia", model.inertia}};
}

KMeansModel kmeans_from_json(const nlohmann::json& doc) {
    try {
        KMeansModel m;
        m.scaler = scaler_from_json(doc.at("scaler"));
        const auto& cs = doc.at("centroids");
        m.centroids.resize(static_cast<Eigen::Index>(cs.size()), m.scaler.dim());
        for (std::size_t c = 0; c < cs.size(); ++c) {
            const Vector v = to_vector(cs[c]);
            if (v.size() != m.scaler.dim()) fail(Errc::InvalidSpec, "centroid dimension mismatch");
            m.centroids.row(static_cast<Eigen::Index>(c)) = v.transpose();
        }
        m.inertia = doc.at("inertia").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("k-means model JSON: ") + e.what());
    }
}

}  // namespace climreg
