#include "climreg/synth.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <random>

#include "climreg/errors.hpp"

namespace climreg {

std::vector<SynthComponent> seven_region_components() {
    // Columns: air temperature, precipitable water, precipitation, relative
    // humidity, sea level pressure, zonal wind, meridional wind.
    std::vector<SynthComponent> comps = {
        {"Montanenew", {12.44, 18.86, 4.8, 81.96, 1011.07, 0.69, 1.02}, {}, 12},
        {"Semi Arid", {27.04, 41.32, 3.1, 76.73, 1008.87, 0.94, 1.63}, {}, 30},
        {"Tropical Wet and Dry", {25.79, 29.19, 2.57, 53.05, 1008.08, 0.57, -0.36}, {}, 40},
        {"Arid", {25.81, 22.02, 0.67, 35.19, 1007.8, 1.1, 0.88}, {}, 20},
        {"Montane", {-2.54, 6.31, 2.36, 78.81, 1015.22, 2.99, 1.82}, {}, 15},
        {"Tropical Wet", {26.83, 38.01, 3.03, 75.51, 1009.76, 2.67, -1.01}, {}, 22},
        {"Humid Sub Tropical", {24.8, 37.61, 6.4, 74.5, 1009.43, 0.69, 0.54}, {}, 30},
    };
    // Spread: a quarter of the across-centroid sample standard deviation.
    for (std::size_t v = 0; v < kNumVariables; ++v) {
        double mean = 0.0;
        for (const auto& c : comps) mean += c.mean[v];
        mean /= static_cast<double>(comps.size());
        double ss = 0.0;
        for (const auto& c : comps) ss += (c.mean[v] - mean) * (c.mean[v] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(comps.size() - 1));
        for (auto& c : comps) c.sd[v] = 0.25 * sd;
    }
    return comps;
}

GeneratorSpec seven_region_spec(std::uint64_t seed) {
    GeneratorSpec spec;
    spec.components = seven_region_components();
    spec.seed = seed;
    return spec;
}

GeneratorSpec sinusoidal_target_spec(std::uint64_t seed, double noise_sigma) {
    const auto table = seven_region_components();
    GeneratorSpec spec;
    for (std::size_t idx : {1, 3, 4}) {
        auto c = table[idx];
        for (auto& sd : c.sd) sd *= 0.2;
        c.cells = 20;
        spec.components.push_back(c);
    }
    spec.year_noise_scale = 1.0;
    spec.shared_year_scale = 6.0;
    spec.relation.kind = TargetRelationKind::Sinusoidal;
    spec.relation.predictor = ClimateVariable::Precipitation;
    spec.relation.amplitude = 1.0;
    spec.relation.frequency = 0.4;
    spec.noise_sigma = noise_sigma;
    spec.grid.columns = 10;
    spec.seed = seed;
    return spec;
}

GeneratorSpec linear_target_spec(std::uint64_t seed, double noise_sigma) {
    GeneratorSpec spec = seven_region_spec(seed);
    spec.relation.kind = TargetRelationKind::Linear;
    spec.relation.coefficients = {0.0, 0.1, 2.0, 0.5, -0.02, 0.3, -0.4};
    spec.relation.intercept = 1.0;
    spec.noise_sigma = noise_sigma;
    return spec;
}

void validate_spec(const GeneratorSpec& spec) {
    auto bad = [](const std::string& msg) { fail(Errc::InvalidSpec, msg); };
    if (spec.components.empty()) bad("at least one component is required");
    std::size_t total = 0;
    for (const auto& c : spec.components) {
        if (c.cells < 1) bad("component '" + c.name + "' needs at least one cell");
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            if (!std::isfinite(c.mean[v])) bad("component '" + c.name + "' has a non-finite mean");
            if (!std::isfinite(c.sd[v]) || c.sd[v] < 0.0) {
                bad("component '" + c.name + "' has a negative or non-finite standard deviation");
            }
        }
        total += static_cast<std::size_t>(c.cells);
    }
    if (spec.first_year > spec.last_year) bad("first_year after last_year");
    if (!(spec.noise_sigma >= 0.0) || !(spec.year_noise_scale >= 0.0) || !(spec.shared_year_scale >= 0.0)) {
        bad("noise parameters must be non-negative");
    }
    const auto& g = spec.grid;
    if (!(g.resolution > 0.0) || g.columns < 1) bad("grid needs positive resolution and columns");
    auto on_lattice = [&](double x) {
        const double q = x / g.resolution;
        return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
    };
    if (!on_lattice(g.lat0) || !on_lattice(g.lon0)) bad("grid origin is not on the lattice");
    const std::size_t rows = (total + static_cast<std::size_t>(g.columns) - 1) / static_cast<std::size_t>(g.columns);
    const double top = g.lat0 + static_cast<double>(rows - 1) * g.resolution;
    if (g.lat0 < -90.0 || top > 90.0) bad("grid rows run past the poles");
    if (static_cast<double>(g.columns) * g.resolution > 360.0) bad("grid wraps in longitude");
    if (spec.relation.kind == TargetRelationKind::Sinusoidal && spec.relation.predictor == spec.target) {
        bad("sinusoidal predictor must differ from the target");
    }
}

LabeledDataset generate(const GeneratorSpec& spec) {
    validate_spec(spec);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int years = spec.last_year - spec.first_year + 1;
    const std::size_t t = index_of(spec.target);

    std::vector<std::vector<ClimateVector>> shared(spec.components.size());
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
        shared[c].resize(static_cast<std::size_t>(years));
        for (auto& a : shared[c]) {
            for (std::size_t v = 0; v < kNumVariables; ++v) {
                a[v] = spec.shared_year_scale * spec.components[c].sd[v] * normal(rng);
            }
        }
    }

    std::vector<RawRecord> rows;
    std::vector<std::pair<std::pair<double, double>, int>> labels;
    std::size_t cell_index = 0;
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
        const auto& comp = spec.components[c];
        for (int k = 0; k < comp.cells; ++k, ++cell_index) {
            const auto row = static_cast<double>(cell_index / static_cast<std::size_t>(spec.grid.columns));
            const auto col = static_cast<double>(cell_index % static_cast<std::size_t>(spec.grid.columns));
            const double lat = spec.grid.lat0 + row * spec.grid.resolution;
            const double lon = spec.grid.lon0 + col * spec.grid.resolution;
            ClimateVector cell_mean{};
            for (std::size_t v = 0; v < kNumVariables; ++v) cell_mean[v] = comp.mean[v] + comp.sd[v] * normal(rng);
            labels.push_back({{lat, lon}, static_cast<int>(c)});
            for (int y = 0; y < years; ++y) {
                RawRecord r;
                r.lat = lat;
                r.lon = lon;
                r.year = spec.first_year + y;
                for (std::size_t v = 0; v < kNumVariables; ++v) {
                    r.values[v] = cell_mean[v] + shared[c][static_cast<std::size_t>(y)][v] +
                                  spec.year_noise_scale * comp.sd[v] * normal(rng);
                }
                const auto& rel = spec.relation;
                if (rel.kind != TargetRelationKind::None) {
                    double target = 0.0;
                    if (rel.kind == TargetRelationKind::Linear) {
                        target = rel.intercept;
                        for (std::size_t v = 0; v < kNumVariables; ++v) {
                            if (v != t) target += rel.coefficients[v] * r.values[v];
                        }
                    } else {
                        target = rel.amplitude * std::sin(2.0 * std::numbers::pi * rel.frequency *
                                                          r.values[index_of(rel.predictor)]);
                    }
                    r.values[t] = target + spec.noise_sigma * normal(rng);
                }
                rows.push_back(r);
            }
        }
    }

    LabeledDataset out{Dataset::from_records(rows, spec.grid.resolution), {}, spec};
    out.true_labels.assign(out.dataset.cell_count(), -1);
    for (const auto& [pos, label] : labels) {
        const auto id = out.dataset.find_cell(pos.first, pos.second);
        out.true_labels[id->value] = label;
    }
    return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) {
        fail(Errc::KeyMismatch, "labelings cover " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " items");
    }
    if (a.size() < 2) fail(Errc::InvalidArgument, "adjusted Rand index needs at least 2 items");
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows;
    std::map<int, double> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto pairs = [](double m) { return m * (m - 1.0) / 2.0; };
    double index = 0.0;
    for (const auto& [key, m] : table) index += pairs(m);
    double sum_rows = 0.0;
    for (const auto& [key, m] : rows) sum_rows += pairs(m);
    double sum_cols = 0.0;
    for (const auto& [key, m] : cols) sum_cols += pairs(m);
    const double expected = sum_rows * sum_cols / pairs(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

namespace {

nlohmann::json vec_json(const ClimateVector& v) { return std::vector<double>(v.begin(), v.end()); }

ClimateVector vec_parse(const nlohmann::json& j, const std::string& what) {
    const auto values = j.get<std::vector<double>>();
    if (values.size() != kNumVariables) {
        fail(Errc::InvalidSpec, what + " must have " + std::to_string(kNumVariables) + " entries");
    }
    ClimateVector out{};
    std::copy(values.begin(), values.end(), out.begin());
    return out;
}

ClimateVariable variable_parse(const nlohmann::json& j) {
    const auto name = j.get<std::string>();
    const auto v = parse_variable(name);
    if (!v) fail(Errc::InvalidSpec, "unknown variable '" + name + "'");
    return *v;
}

}  // namespace

nlohmann::json to_json(const GeneratorSpec& spec) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : spec.components) {
        comps.push_back({{"name", c.name}, {"mean", vec_json(c.mean)}, {"sd", vec_json(c.sd)}, {"cells", c.cells}});
    }
    nlohmann::json rel;
    switch (spec.relation.kind) {
        case TargetRelationKind::None: rel = {{"kind", "none"}}; break;
        case TargetRelationKind::Linear:
            rel = {{"kind", "linear"},
                   {"coefficients", vec_json(spec.relation.coefficients)},
                   {"intercept", spec.relation.intercept}};
            break;
        case TargetRelationKind::Sinusoidal:
            rel = {{"kind", "sinusoidal"},
                   {"amplitude", spec.relation.amplitude},
                   {"frequency", spec.relation.frequency},
                   {"predictor", std::string(variable_name(spec.relation.predictor))}};
            break;
    }
    return {{"components", comps},
            {"first_year", spec.first_year},
            {"last_year", spec.last_year},
            {"target", std::string(variable_name(spec.target))},
            {"target_relation", rel},
            {"noise_sigma", spec.noise_sigma},
            {"year_noise_scale", spec.year_noise_scale},
            {"shared_year_scale", spec.shared_year_scale},
            {"grid",
             {{"lat0", spec.grid.lat0},
              {"lon0", spec.grid.lon0},
              {"resolution", spec.grid.resolution},
              {"columns", spec.grid.columns}}},
            {"seed", spec.seed}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& doc) {
    try {
        GeneratorSpec spec;
        for (const auto& c : doc.at("components")) {
            spec.components.push_back({c.value("name", std::string{}), vec_parse(c.at("mean"), "mean"),
                                       vec_parse(c.at("sd"), "sd"), c.at("cells").get<int>()});
        }
        spec.first_year = doc.value("first_year", spec.first_year);
        spec.last_year = doc.value("last_year", spec.last_year);
        if (doc.contains("target")) spec.target = variable_parse(doc.at("target"));
        if (doc.contains("target_relation")) {
            const auto& rel = doc.at("target_relation");
            const auto kind = rel.at("kind").get<std::string>();
            if (kind == "none") {
                spec.relation.kind = TargetRelationKind::None;
            } else if (kind == "linear") {
                spec.relation.kind = TargetRelationKind::Linear;
                spec.relation.coefficients = vec_parse(rel.at("coefficients"), "coefficients");
                spec.relation.intercept = rel.value("intercept", 0.0);
            } else if (kind == "sinusoidal") {
                spec.relation.kind = TargetRelationKind::Sinusoidal;
                spec.relation.amplitude = rel.at("amplitude").get<double>();
                spec.relation.frequency = rel.at("frequency").get<double>();
                spec.relation.predictor = variable_parse(rel.at("predictor"));
            } else {
                fail(Errc::InvalidSpec, "unknown target_relation kind '" + kind + "'");
            }
        }
        spec.noise_sigma = doc.value("noise_sigma", spec.noise_sigma);
        spec.year_noise_scale = doc.value("year_noise_scale", spec.year_noise_scale);
        spec.shared_year_scale = doc.value("shared_year_scale", spec.shared_year_scale);
        if (doc.contains("grid")) {
            const auto& g = doc.at("grid");
            spec.grid.lat0 = g.value("lat0", spec.grid.lat0);
            spec.grid.lon0 = g.value("lon0", spec.grid.lon0);
            spec.grid.resolution = g.value("resolution", spec.grid.resolution);
            spec.grid.columns = g.value("columns", spec.grid.columns);
        }
        spec.seed = doc.value("seed", std::uint64_t{0});
        validate_spec(spec);
        return spec;
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::InvalidSpec, std::string("generator spec JSON: ") + e.what());
    }
}

void write_labels_csv(std::ostream& out, const LabeledDataset& data) {
    out << "lat,lon,true_region\n";
    for (const auto& cell : data.dataset.cells()) {
        out << format_double(cell.lat) << ',' << format_double(cell.lon) << ','
            << data.true_labels[cell.id.value] << '\n';
    }
}

}  // namespace climreg
