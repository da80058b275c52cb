#include "climreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <ostream>

#include "climreg/csv_table.hpp"
#include "climreg/errors.hpp"

namespace climreg {

namespace {

// Stage seeds derived from the master seed; shared by one-shot and staged runs.
constexpr std::uint64_t kSelectKStream = 1;
constexpr std::uint64_t kClusterStream = 2;
constexpr std::uint64_t kRegionStreamBase = 100;

RegionAssignment compact(const RegionAssignment& raw, std::vector<int>& region_of_component) {
    const auto sizes = raw.region_sizes();
    region_of_component.assign(sizes.size(), -1);
    int next = 0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        if (sizes[c] > 0) region_of_component[c] = next++;
    }
    RegionAssignment out;
    out.region_count = next;
    out.region_of.reserve(raw.region_of.size());
    for (int r : raw.region_of) out.region_of.push_back(region_of_component[static_cast<std::size_t>(r)]);
    return out;
}

void check_assignment(const Dataset& ds, const RegionAssignment& assignment) {
    if (assignment.region_of.size() != ds.cell_count()) {
        fail(Errc::UnassignedCell, "assignment covers " + std::to_string(assignment.region_of.size()) +
                                       " cells, dataset has " + std::to_string(ds.cell_count()));
    }
    for (int r : assignment.region_of) {
        if (r < 0 || r >= assignment.region_count) fail(Errc::UnassignedCell, "cell without a valid region");
    }
}

}  // namespace

std::string_view method_label(Method m) noexcept { return m == Method::EmSvr ? "EM+SVM" : "KM+LR"; }
std::string_view method_key(Method m) noexcept { return m == Method::EmSvr ? "em_svr" : "km_lr"; }

std::vector<ClimateVariable> feature_layout(ClimateVariable target) {
    std::vector<ClimateVariable> out;
    for (auto v : kAllVariables) {
        if (v != target) out.push_back(v);
    }
    return out;
}

Regionalization regionalize(const Dataset& ds, const PipelineConfig& cfg) {
    const auto split = split_years(ds, cfg.p);
    const Matrix points = climatology_matrix(long_term_means(ds, split.train));

    Regionalization out;
    if (cfg.k_override) {
        out.k = *cfg.k_override;
        if (out.k < 1) fail(Errc::InvalidArgument, "k must be at least 1");
    } else {
        SelectKConfig sk;
        sk.k_min = cfg.k_min;
        sk.k_max = std::min<int>(cfg.k_max, static_cast<int>(points.rows()));
        sk.folds = cfg.folds;
        sk.seed = derive_seed(cfg.seed, kSelectKStream);
        sk.em = cfg.em;
        sk.threads = cfg.threads;
        const auto sel = select_k_cv(points, sk);
        out.k = sel.k;
        out.cv_log_likelihood = sel.mean_heldout_log_likelihood;
    }

    RegionAssignment raw;
    if (ds.cell_count() == 1) {
        // A single cell cannot be standardized; it forms its own region.
        if (out.k != 1) fail(Errc::TooFewPoints, "a single cell supports only k=1");
        raw.region_count = 1;
        raw.region_of = {0};
        out.cluster_model = {{"type", cfg.method == Method::EmSvr ? "gaussian_mixture" : "kmeans"}, {"k", 1}};
    } else if (cfg.method == Method::EmSvr) {
        EmConfig em = cfg.em;
        em.seed = derive_seed(cfg.seed, kClusterStream);
        const auto model = em_fit(points, out.k, em);
        raw = assign_hard(points, model);
        out.cluster_model = to_json(model);
    } else {
        KMeansConfig km = cfg.kmeans;
        km.seed = derive_seed(cfg.seed, kClusterStream);
        const auto model = kmeans_fit(points, out.k, km);
        raw = kmeans_assign(points, model);
        out.cluster_model = to_json(model);
    }
    std::vector<int> region_of_component;
    out.assignment = compact(raw, region_of_component);
    out.cluster_model["region_of_component"] = region_of_component;
    out.cluster_model["train_years"] = {split.train.front(), split.train.back()};
    return out;
}

RegionModels build_region_models(const Dataset& ds, const RegionAssignment& assignment,
                                 const PipelineConfig& cfg) {
    check_assignment(ds, assignment);
    const auto split = split_years(ds, cfg.p);
    const auto means = regional_annual_means(ds, assignment, split.train);

    RegionModels models;
    models.assignment = assignment;
    models.method = cfg.method;
    models.target = cfg.target;
    models.feature_layout = feature_layout(cfg.target);
    models.include_year_feature = cfg.include_year_feature;
    models.first_year = ds.first_year();
    models.p = cfg.p;

    const std::size_t rows = split.train.size();
    const std::size_t min_rows = std::max<std::size_t>(10, cfg.folds);
    if (rows < min_rows) {
        fail(Errc::RegionTooSmall, "regions have " + std::to_string(rows) + " training years, need at least " +
                                       std::to_string(min_rows));
    }

    const auto dim = models.feature_dim();
    models.per_region.resize(static_cast<std::size_t>(assignment.region_count));
    parallel_for(models.per_region.size(), cfg.threads, [&](std::size_t r) {
        Matrix x(static_cast<Eigen::Index>(rows), dim);
        Vector y(static_cast<Eigen::Index>(rows));
        for (std::size_t i = 0; i < rows; ++i) {
            const int year = split.train[i];
            const auto& v = means.at({static_cast<int>(r), year});
            const auto row = static_cast<Eigen::Index>(i);
            for (std::size_t f = 0; f < models.feature_layout.size(); ++f) {
                x(row, static_cast<Eigen::Index>(f)) = v[index_of(models.feature_layout[f])];
            }
            if (models.include_year_feature) x(row, dim - 1) = static_cast<double>(year - models.first_year);
            y(row) = v[index_of(cfg.target)];
        }
        const std::uint64_t seed = derive_seed(cfg.seed, kRegionStreamBase + r);
        auto& out = models.per_region[r];
        out.training_rows = rows;
        try {
            if (cfg.method == Method::EmSvr) {
                const auto grid = cfg.svr_grid.empty() ? default_svr_grid(dim) : cfg.svr_grid;
                auto search = grid_search(x, y, grid, cfg.folds, seed, 1);
                SvrParams best = search.best;
                best.seed = seed;
                out.model = svr_train(x, y, best);
                out.cv = std::move(search.report);
            } else {
                out.model = ols_fit(x, y);
                out.cv = cv_rmse(
                    x, y,
                    [](const Matrix& xt, const Vector& yt) -> Predictor {
                        auto m = std::make_shared<LinearModel>(ols_fit(xt, yt));
                        return [m](const Vector& v) { return ols_predict(*m, v); };
                    },
                    cfg.folds, seed);
                out.cv.chosen_hyperparams = {{"ridge_jitter", 1e-10}};
            }
        } catch (const Error& e) {
            fail(e.code(), "region " + std::to_string(r) + ": " + e.what());
        }
    });
    return models;
}

double predict_region(const RegionModels& models, int region, const Vector& features) {
    if (region < 0 || static_cast<std::size_t>(region) >= models.per_region.size()) {
        fail(Errc::UnassignedCell, "no model for region " + std::to_string(region));
    }
    return std::visit(
        [&](const auto& m) {
            if constexpr (std::is_same_v<std::decay_t<decltype(m)>, SvrModel>) {
                return svr_predict(m, features);
            } else {
                return ols_predict(m, features);
            }
        },
        models.per_region[static_cast<std::size_t>(region)].model);
}

Vector cell_features(const Dataset& ds, const RegionModels& models, CellId cell, int year) {
    const auto& v = ds.values(cell, year);
    Vector x(models.feature_dim());
    for (std::size_t f = 0; f < models.feature_layout.size(); ++f) {
        x(static_cast<Eigen::Index>(f)) = v[index_of(models.feature_layout[f])];
    }
    if (models.include_year_feature) x(x.size() - 1) = static_cast<double>(year - models.first_year);
    return x;
}

PredictionSet predict_cells(const Dataset& ds, const RegionModels& models, std::span<const int> test_years) {
    check_assignment(ds, models.assignment);
    if (models.per_region.size() != static_cast<std::size_t>(models.assignment.region_count)) {
        fail(Errc::UnassignedCell, "model count does not match region count");
    }
    for (int y : test_years) {
        if (y < ds.first_year() || y > ds.last_year()) {
            fail(Errc::MissingTestRecord, "dataset has no records for test year " + std::to_string(y));
        }
    }
    PredictionSet out;
    out.target = models.target;
    for (const auto& cell : ds.cells()) {
        for (int y : test_years) {
            const double pred = predict_region(models, models.assignment.region(cell.id),
                                               cell_features(ds, models, cell.id, y));
            if (!std::isfinite(pred)) fail(Errc::NonFiniteInput, "non-finite prediction");
            out.entries.push_back({cell.id, y, pred, ds.values(cell.id, y)[index_of(models.target)]});
        }
    }
    return out;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

EvaluationReport evaluate(const PredictionSet& preds, const RegionAssignment& assignment, std::string label) {
    if (preds.entries.empty()) fail(Errc::EmptyPredictions, "no predictions to evaluate");
    const auto regions = static_cast<std::size_t>(assignment.region_count);
    EvaluationReport report;
    report.method = std::move(label);
    std::vector<std::vector<double>> pred(regions);
    std::vector<std::vector<double>> actual(regions);
    std::vector<double> sse(regions, 0.0);
    double total = 0.0;
    for (const auto& e : preds.entries) {
        if (e.cell.value >= assignment.region_of.size()) fail(Errc::UnassignedCell, "prediction for unknown cell");
        const auto r = static_cast<std::size_t>(assignment.region(e.cell));
        const double err = e.predicted - e.actual;
        sse[r] += err * err;
        total += err * err;
        pred[r].push_back(e.predicted);
        actual[r].push_back(e.actual);
        report.per_cell_abs_error.push_back({e.cell, e.year, std::abs(err)});
    }
    for (std::size_t r = 0; r < regions; ++r) {
        const auto count = pred[r].size();
        report.per_region_entries.push_back(count);
        report.per_region_rmse.push_back(count ? std::sqrt(sse[r] / static_cast<double>(count)) : 0.0);
        report.per_region_correlation.push_back(pearson(pred[r], actual[r]));
    }
    report.per_region_cells = assignment.region_sizes();
    report.overall_rmse = std::sqrt(total / static_cast<double>(preds.entries.size()));
    return report;
}

PipelineRun run_pipeline(const Dataset& ds, const PipelineConfig& cfg) {
    PipelineRun run;
    run.regions = regionalize(ds, cfg);
    run.models = build_region_models(ds, run.regions.assignment, cfg);
    run.predictions = predict_cells(ds, run.models, split_years(ds, cfg.p).test);
    run.report = evaluate(run.predictions, run.regions.assignment, std::string(method_label(cfg.method)));
    return run;
}

ComparisonTable compare_methods(const Dataset& ds, const PipelineConfig& em_cfg, const PipelineConfig& km_cfg) {
    if (em_cfg.target != km_cfg.target || em_cfg.p != km_cfg.p || em_cfg.seed != km_cfg.seed) {
        fail(Errc::InvalidArgument, "compared configurations must share target, p and seed");
    }
    ComparisonTable table;
    table.em = run_pipeline(ds, em_cfg);
    table.km = run_pipeline(ds, km_cfg);
    const auto& a = table.em.regions.assignment;
    const auto& b = table.km.regions.assignment;

    std::vector<std::vector<std::size_t>> overlap(static_cast<std::size_t>(a.region_count),
                                                  std::vector<std::size_t>(static_cast<std::size_t>(b.region_count), 0));
    for (std::size_t c = 0; c < a.region_of.size(); ++c) {
        ++overlap[static_cast<std::size_t>(a.region_of[c])][static_cast<std::size_t>(b.region_of[c])];
    }
    const auto sizes = a.region_sizes();
    std::size_t matched_cells = 0;
    for (int r = 0; r < a.region_count; ++r) {
        const auto& row = overlap[static_cast<std::size_t>(r)];
        const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        const auto shared = row[static_cast<std::size_t>(best)];
        matched_cells += shared;
        ComparisonRow out;
        out.region_label = "region_" + std::to_string(r);
        out.em_region = r;
        out.km_region = best;
        out.em_svm_rmse = table.em.report.per_region_rmse[static_cast<std::size_t>(r)];
        out.km_lr_rmse = table.km.report.per_region_rmse[static_cast<std::size_t>(best)];
        out.overlap_fraction = static_cast<double>(shared) / static_cast<double>(sizes[static_cast<std::size_t>(r)]);
        table.rows.push_back(out);
    }
    ComparisonRow summary;
    summary.region_label = "overall";
    summary.em_svm_rmse = table.em.report.overall_rmse;
    summary.km_lr_rmse = table.km.report.overall_rmse;
    summary.overlap_fraction = static_cast<double>(matched_cells) / static_cast<double>(a.region_of.size());
    table.rows.push_back(summary);
    return table;
}

void write_regions_csv(std::ostream& out, const Dataset& ds, const RegionAssignment& assignment) {
    check_assignment(ds, assignment);
    out << "lat,lon,region_id\n";
    for (const auto& cell : ds.cells()) {
        out << format_double(cell.lat) << ',' << format_double(cell.lon) << ',' << assignment.region(cell.id) << '\n';
    }
}

RegionAssignment read_regions_csv(std::istream& in, const Dataset& ds) {
    const auto table = read_csv_table(in);
    const auto lat_col = table.require_column("lat");
    const auto lon_col = table.require_column("lon");
    const auto region_col = table.require_column("region_id");
    RegionAssignment out;
    out.region_of.assign(ds.cell_count(), -1);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const auto line = table.lines[i];
        const double lat = parse_double_field(row[lat_col], line, "lat");
        const double lon = parse_double_field(row[lon_col], line, "lon");
        const auto region = parse_int_field(row[region_col], line, "region_id");
        if (region < 0 || region > 1'000'000) {
            fail(Errc::MalformedRow, "line " + std::to_string(line) + ": region_id out of range");
        }
        const auto cell = ds.find_cell(lat, lon);
        if (!cell) {
            fail(Errc::KeyMismatch, "line " + std::to_string(line) + ": cell (lat " + format_double(lat) + ", lon " +
                                        format_double(lon) + ") is not in the dataset");
        }
        if (out.region_of[cell->value] != -1) {
            fail(Errc::DuplicateRecord, "line " + std::to_string(line) + ": cell listed twice");
        }
        out.region_of[cell->value] = static_cast<int>(region);
        out.region_count = std::max(out.region_count, static_cast<int>(region) + 1);
    }
    for (const auto& cell : ds.cells()) {
        if (out.region_of[cell.id.value] < 0) {
            fail(Errc::UnassignedCell, "cell (lat " + format_double(cell.lat) + ", lon " + format_double(cell.lon) +
                                           ") has no region");
        }
    }
    const auto sizes = out.region_sizes();
    for (std::size_t r = 0; r < sizes.size(); ++r) {
        if (sizes[r] == 0) fail(Errc::EmptyRegion, "region " + std::to_string(r) + " has no cells");
    }
    return out;
}

nlohmann::json to_json(const RegionModels& models) {
    nlohmann::json layout = nlohmann::json::array();
    for (auto v : models.feature_layout) layout.push_back(std::string(variable_name(v)));
    if (models.include_year_feature) layout.push_back("year_index");
    nlohmann::json regions = nlohmann::json::array();
    for (std::size_t r = 0; r < models.per_region.size(); ++r) {
        const auto& rm = models.per_region[r];
        nlohmann::json model = std::visit([](const auto& m) { return to_json(m); }, rm.model);
        regions.push_back({{"region_id", r},
                           {"training_rows", rm.training_rows},
                           {"model", model},
                           {"cv",
                            {{"per_fold_rmse", rm.cv.per_fold_rmse},
                             {"mean_rmse", rm.cv.mean_rmse},
                             {"std_rmse", rm.cv.std_rmse},
                             {"chosen_hyperparams", rm.cv.chosen_hyperparams}}}});
    }
    return {{"method", std::string(method_key(models.method))},
            {"target", std::string(variable_name(models.target))},
            {"p", models.p},
            {"first_year", models.first_year},
            {"include_year_feature", models.include_year_feature},
            {"feature_layout", layout},
            {"region_count", models.per_region.size()},
            {"regions", regions}};
}

RegionModels region_models_from_json(const nlohmann::json& doc, const RegionAssignment& assignment) {
    try {
        RegionModels models;
        models.assignment = assignment;
        const auto method = doc.at("method").get<std::string>();
        if (method == "em_svr") models.method = Method::EmSvr;
        else if (method == "km_lr") models.method = Method::KmLr;
        else fail(Errc::InvalidSpec, "unknown method '" + method + "'");
        const auto target = parse_variable(doc.at("target").get<std::string>());
        if (!target) fail(Errc::InvalidSpec, "unknown target variable");
        models.target = *target;
        models.feature_layout = feature_layout(*target);
        models.include_year_feature = doc.at("include_year_feature").get<bool>();
        models.first_year = doc.at("first_year").get<int>();
        models.p = doc.at("p").get<int>();
        for (const auto& r : doc.at("regions")) {
            RegionModel rm;
            const auto& m = r.at("model");
            const auto type = m.at("type").get<std::string>();
            if (type == "svr") rm.model = svr_from_json(m);
            else if (type == "ols") rm.model = linear_from_json(m);
            else fail(Errc::InvalidSpec, "unknown model type '" + type + "'");
            rm.training_rows = r.at("training_rows").get<std::size_t>();
            rm.cv.per_fold_rmse = r.at("cv").at("per_fold_rmse").get<std::vector<double>>();
            rm.cv.mean_rmse = r.at("cv").at("mean_rmse").get<double>();
            rm.cv.std_rmse = r.at("cv").at("std_rmse").get<double>();
            rm.cv.chosen_hyperparams = r.at("cv").at("chosen_hyperparams");
            const auto dim = std::visit([](const auto& mm) { return mm.dim(); }, rm.model);
            if (dim != models.feature_dim()) fail(Errc::InvalidSpec, "model feature dimension mismatch");
            models.per_region.push_back(std::move(rm));
        }
        if (static_cast<int>(models.per_region.size()) != assignment.region_count) {
            fail(Errc::KeyMismatch, "models cover " + std::to_string(models.per_region.size()) +
                                        " regions, regions file has " + std::to_string(assignment.region_count));
        }
        return models;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("models JSON: ") + e.what());
    }
}

void write_cv_report_csv(std::ostream& out, const RegionModels& models) {
    out << "region_id,model,training_rows,C,epsilon,gamma,cv_mean_rmse,cv_std_rmse\n";
    for (std::size_t r = 0; r < models.per_region.size(); ++r) {
        const auto& rm = models.per_region[r];
        out << r << ',' << (models.method == Method::EmSvr ? "svr" : "ols") << ',' << rm.training_rows << ',';
        const auto& hp = rm.cv.chosen_hyperparams;
        for (const char* key : {"C", "epsilon", "gamma"}) {
            if (hp.contains(key)) out << format_double(hp.at(key).get<double>());
            out << ',';
        }
        out << format_double(rm.cv.mean_rmse) << ',' << format_double(rm.cv.std_rmse) << '\n';
    }
}

void write_report_csv(std::ostream& out, const EvaluationReport& report) {
    out << "region_id,region_size,rmse,correlation\n";
    for (std::size_t r = 0; r < report.per_region_rmse.size(); ++r) {
        out << r << ',' << report.per_region_cells[r] << ',' << format_double(report.per_region_rmse[r]) << ',';
        if (report.per_region_correlation[r]) out << format_double(*report.per_region_correlation[r]);
        out << '\n';
    }
}

void write_predictions_csv(std::ostream& out, const Dataset& ds, const PredictionSet& preds) {
    out << "lat,lon,year,predicted,actual,abs_error\n";
    for (const auto& e : preds.entries) {
        const auto& cell = ds.cell(e.cell);
        out << format_double(cell.lat) << ',' << format_double(cell.lon) << ',' << e.year << ','
            << format_double(e.predicted) << ',' << format_double(e.actual) << ','
            << format_double(std::abs(e.predicted - e.actual)) << '\n';
    }
}

void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
    out << "region_label,em_svm_rmse,km_lr_rmse,overlap_fraction\n";
    for (const auto& row : table.rows) {
        out << row.region_label << ',' << format_double(row.em_svm_rmse) << ',' << format_double(row.km_lr_rmse)
            << ',' << format_double(row.overlap_fraction) << '\n';
    }
}

}  // namespace climreg
