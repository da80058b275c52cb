#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "climreg/clustering.hpp"
#include "climreg/grid_store.hpp"
#include "climreg/regressors.hpp"

namespace climreg {

enum class Method { EmSvr, KmLr };

std::string_view method_label(Method m) noexcept;  // "EM+SVM" / "KM+LR"
std::string_view method_key(Method m) noexcept;    // "em_svr" / "km_lr"

struct PipelineConfig {
    Method method = Method::EmSvr;
    ClimateVariable target = ClimateVariable::AirTemperature;
    int p = 1;
    std::optional<int> k_override;
    bool include_year_feature = false;
    std::uint64_t seed = 0;
    std::vector<SvrParams> svr_grid;  // empty: default grid for the feature dimension
    std::size_t folds = 10;
    int k_min = 1;
    int k_max = 12;
    EmConfig em{};
    KMeansConfig kmeans{};
    unsigned threads = 1;
};

struct Regionalization {
    RegionAssignment assignment;
    nlohmann::json cluster_model;
    int k = 1;                                     // fitted component count
    std::vector<double> cv_log_likelihood;        // empty when k was overridden
};

struct RegionModel {
    std::variant<SvrModel, LinearModel> model;
    CvReport cv;
    std::size_t training_rows = 0;
};

struct RegionModels {
    RegionAssignment assignment;
    Method method = Method::EmSvr;
    ClimateVariable target = ClimateVariable::AirTemperature;
    std::vector<ClimateVariable> feature_layout;
    bool include_year_feature = false;
    int first_year = 0;  // origin of the year-index feature
    int p = 1;
    std::vector<RegionModel> per_region;

    Eigen::Index feature_dim() const noexcept {
        return static_cast<Eigen::Index>(feature_layout.size() + (include_year_feature ? 1 : 0));
    }
};

struct PredictionEntry {
    CellId cell;
    int year = 0;
    double predicted = 0.0;
    double actual = 0.0;
};

struct PredictionSet {
    ClimateVariable target = ClimateVariable::AirTemperature;
    std::vector<PredictionEntry> entries;
};

struct CellError {
    CellId cell;
    int year = 0;
    double abs_error = 0.0;
};

struct EvaluationReport {
    std::string method;
    std::vector<double> per_region_rmse;                       // indexed by region
    std::vector<std::size_t> per_region_entries;
    std::vector<std::size_t> per_region_cells;
    std::vector<std::optional<double>> per_region_correlation;  // absent on zero variance
    double overall_rmse = 0.0;
    std::vector<CellError> per_cell_abs_error;
};

struct ComparisonRow {
    std::string region_label;
    double em_svm_rmse = 0.0;
    double km_lr_rmse = 0.0;
    double overlap_fraction = 0.0;
    int em_region = -1;
    int km_region = -1;
};

struct PipelineRun {
    Regionalization regions;
    RegionModels models;
    PredictionSet predictions;
    EvaluationReport report;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // one per EM region, then the "overall" summary row
    PipelineRun em;
    PipelineRun km;
};

// The six non-target variables in canonical order.
std::vector<ClimateVariable> feature_layout(ClimateVariable target);

Regionalization regionalize(const Dataset& ds, const PipelineConfig& cfg);
RegionModels build_region_models(const Dataset& ds, const RegionAssignment& assignment,
                                 const PipelineConfig& cfg);
double predict_region(const RegionModels& models, int region, const Vector& features);
Vector cell_features(const Dataset& ds, const RegionModels& models, CellId cell, int year);
PredictionSet predict_cells(const Dataset& ds, const RegionModels& models, std::span<const int> test_years);
EvaluationReport evaluate(const PredictionSet& preds, const RegionAssignment& assignment,
                          std::string method_label = {});

PipelineRun run_pipeline(const Dataset& ds, const PipelineConfig& cfg);
ComparisonTable compare_methods(const Dataset& ds, const PipelineConfig& em_cfg, const PipelineConfig& km_cfg);

std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// --- file formats ---

void write_regions_csv(std::ostream& out, const Dataset& ds, const RegionAssignment& assignment);
RegionAssignment read_regions_csv(std::istream& in, const Dataset& ds);

nlohmann::json to_json(const RegionModels& models);
// The assignment is not part of the document; pass the one the models were built on.
RegionModels region_models_from_json(const nlohmann::json& doc, const RegionAssignment& assignment);

void write_cv_report_csv(std::ostream& out, const RegionModels& models);
void write_report_csv(std::ostream& out, const EvaluationReport& report);
void write_predictions_csv(std::ostream& out, const Dataset& ds, const PredictionSet& preds);
void write_comparison_csv(std::ostream& out, const ComparisonTable& table);

}  // namespace climreg
