#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "climreg/grid_store.hpp"

namespace climreg {

struct SynthComponent {
    std::string name;
    ClimateVector mean{};
    ClimateVector sd{};  // spread of per-cell climatologies around `mean`
    int cells = 1;
};

enum class TargetRelationKind { None, Linear, Sinusoidal };

// target = intercept + sum_v coefficients[v] * x_v          (linear; target's own slot ignored)
// target = amplitude * sin(2 pi frequency * x_predictor)     (sinusoidal)
// Both are followed by N(0, noise_sigma^2) observation noise.
struct TargetRelation {
    TargetRelationKind kind = TargetRelationKind::None;
    ClimateVector coefficients{};
    double intercept = 0.0;
    double amplitude = 1.0;
    double frequency = 1.0;
    ClimateVariable predictor = ClimateVariable::Precipitation;
};

struct GridLayout {
    double lat0 = 7.5;
    double lon0 = 67.5;
    double resolution = kDefaultResolution;
    int columns = 13;  // cells per latitude row
};

struct GeneratorSpec {
    std::vector<SynthComponent> components;
    int first_year = 1948;
    int last_year = 2012;
    ClimateVariable target = ClimateVariable::AirTemperature;
    TargetRelation relation{};
    double noise_sigma = 0.0;
    // Independent per-cell, per-year noise, as a multiple of the component sd.
    double year_noise_scale = 0.5;
    // Year anomaly shared by every cell of a component, as a multiple of the
    // component sd. Zero keeps year noise fully independent across cells.
    double shared_year_scale = 0.0;
    GridLayout grid{};
    std::uint64_t seed = 0;
};

struct LabeledDataset {
    Dataset dataset;
    std::vector<int> true_labels;  // indexed by CellId::value
    GeneratorSpec generator;
};

// Mixture centroids reported for the seven Indian climate regions.
std::vector<SynthComponent> seven_region_components();
// 169-cell, 1948-2012 spec seeded from the seven centroids.
GeneratorSpec seven_region_spec(std::uint64_t seed = 0);

// Three well-separated regions whose air temperature is a sinusoid of
// precipitation. Year-to-year variation is mostly a region-wide anomaly, so
// regional annual means span more than a full period of the sinusoid.
GeneratorSpec sinusoidal_target_spec(std::uint64_t seed = 0, double noise_sigma = 0.1);

// Seven-region default geometry with air temperature an exact linear function of the
// other six variables.
GeneratorSpec linear_target_spec(std::uint64_t seed = 0, double noise_sigma = 0.0);

void validate_spec(const GeneratorSpec& spec);
LabeledDataset generate(const GeneratorSpec& spec);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& doc);

void write_labels_csv(std::ostream& out, const LabeledDataset& data);

}  // namespace climreg
