#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "climreg/errors.hpp"
#include "climreg/synth.hpp"
#include "support.hpp"

using namespace climreg;

namespace {

Errc spec_error(const GeneratorSpec& spec) {
    try {
        generate(spec);
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::InvalidArgument;
}

// Standardized errors of every (component, variable) sample mean.
std::vector<double> centroid_z_scores(std::uint64_t seed) {
    const auto spec = seven_region_spec(seed);
    const auto data = generate(spec);
    const auto years = static_cast<double>(data.dataset.year_count());
    const auto clim = long_term_means(data.dataset, data.dataset.years());
    std::vector<double> z;
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
        const auto& comp = spec.components[k];
        ClimateVector sum{};
        int n = 0;
        for (const auto& cv : clim) {
            if (data.true_labels[cv.cell.value] != static_cast<int>(k)) continue;
            for (std::size_t v = 0; v < kNumVariables; ++v) sum[v] += cv.means[v];
            ++n;
        }
        REQUIRE(n == comp.cells);
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            // Per-cell spread plus the year noise averaged over the record.
            const double se = comp.sd[v] *
                              std::sqrt(1.0 + spec.year_noise_scale * spec.year_noise_scale / years) /
                              std::sqrt(static_cast<double>(n));
            z.push_back((sum[v] / n - comp.mean[v]) / se);
        }
    }
    return z;
}

}  // namespace

TEST_CASE("centroid table") {
    const auto comps = seven_region_components();
    REQUIRE(comps.size() == 7);
    int cells = 0;
    for (const auto& c : comps) cells += c.cells;
    CHECK(cells == 169);
    const auto& montane = comps[4];
    CHECK(montane.name == "Montane");
    CHECK(montane.mean[index_of(ClimateVariable::AirTemperature)] == -2.54);
    CHECK(comps[3].name == "Arid");
    CHECK(comps[3].mean[index_of(ClimateVariable::Precipitation)] == 0.67);
    for (const auto& c : comps) {
        const double slp = c.mean[index_of(ClimateVariable::SeaLevelPressure)];
        CHECK(slp > 1007.0);
        CHECK(slp < 1016.0);
        for (double sd : c.sd) CHECK(sd > 0.0);
    }
}

TEST_CASE("degenerate generator reproduces the mean exactly") {
    GeneratorSpec spec;
    SynthComponent c{"only", {1, 2, 3, 4, 1000, 0.5, -0.5}, {}, 4};
    spec.components = {c};
    spec.first_year = 2000;
    spec.last_year = 2004;
    const auto data = generate(spec);
    CHECK(data.dataset.record_count() == 20);
    for (const auto& rec : data.dataset.records()) CHECK(rec.values == c.mean);
    CHECK(data.true_labels == std::vector<int>(4, 0));
}

TEST_CASE("default spec passes ingestion and matches the centroids") {
    const auto data = generate(seven_region_spec(21));
    const auto& ds = data.dataset;
    CHECK(ds.cell_count() == 169);
    CHECK(ds.year_count() == 65);
    CHECK(ds.first_year() == 1948);
    CHECK(ds.last_year() == 2012);
    std::istringstream in(testing::csv_of(ds));
    CHECK(ingest_csv(in).record_count() == 10985);
}

TEST_CASE("component sample means sit within three standard errors") {
    // 49 simultaneous checks: allow the couple of 3-sigma excursions chance predicts.
    const auto z = centroid_z_scores(21);
    CHECK(z.size() == 49);
    CHECK(std::count_if(z.begin(), z.end(), [](double v) { return std::abs(v) > 3.0; }) <= 2);
    for (double v : z) CHECK(std::abs(v) <= 5.0);

    double sum = 0.0;
    double sum_sq = 0.0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        for (double v : centroid_z_scores(seed)) {
            sum += v;
            sum_sq += v * v;
            ++n;
        }
    }
    CHECK(std::abs(sum / n) < 0.15);
    CHECK(sum_sq / n == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("sample means tighten as the component grows") {
    auto spec_of = [](int cells) {
        GeneratorSpec spec;
        SynthComponent c{"c", {10, 20, 3, 50, 1000, 1, 1}, {}, cells};
        c.sd.fill(2.0);
        spec.components = {c};
        spec.first_year = 2000;
        spec.last_year = 2001;
        spec.grid.columns = 50;
        spec.grid.lat0 = -40;
        spec.seed = 4;
        return spec;
    };
    auto error = [&](int cells) {
        const auto spec = spec_of(cells);
        const auto data = generate(spec);
        const auto clim = long_term_means(data.dataset, data.dataset.years());
        double total = 0.0;
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            double m = 0.0;
            for (const auto& cv : clim) m += cv.means[v];
            total += std::abs(m / static_cast<double>(clim.size()) - spec.components[0].mean[v]);
        }
        return total;
    };
    CHECK(error(1000) < error(10));
}

TEST_CASE("linear relation is exact without noise") {
    const auto spec = linear_target_spec(3, 0.0);
    const auto data = generate(spec);
    const auto t = index_of(spec.target);
    for (const auto& rec : data.dataset.records()) {
        double expect = spec.relation.intercept;
        for (std::size_t v = 0; v < kNumVariables; ++v) {
            if (v != t) expect += spec.relation.coefficients[v] * rec.values[v];
        }
        CHECK(std::abs(rec.values[t] - expect) <= 1e-9);
    }
}

TEST_CASE("sinusoidal relation is exact without noise") {
    const auto spec = sinusoidal_target_spec(3, 0.0);
    const auto data = generate(spec);
    const auto t = index_of(spec.target);
    const auto p = index_of(spec.relation.predictor);
    for (const auto& rec : data.dataset.records()) {
        const double expect = spec.relation.amplitude *
                              std::sin(2.0 * std::numbers::pi * spec.relation.frequency * rec.values[p]);
        CHECK(std::abs(rec.values[t] - expect) <= 1e-12);
    }
}

TEST_CASE("generation is deterministic") {
    CHECK(testing::csv_of(generate(seven_region_spec(7)).dataset) ==
          testing::csv_of(generate(seven_region_spec(7)).dataset));
    CHECK(testing::csv_of(generate(seven_region_spec(7)).dataset) !=
          testing::csv_of(generate(seven_region_spec(8)).dataset));
}

TEST_CASE("labels sidecar has one row per cell") {
    const auto data = generate(seven_region_spec(1));
    std::ostringstream out;
    write_labels_csv(out, data);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "lat,lon,true_region");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 169);
}

TEST_CASE("spec JSON round-trip") {
    const auto spec = sinusoidal_target_spec(12, 0.3);
    const auto back = generator_spec_from_json(nlohmann::json::parse(to_json(spec).dump()));
    CHECK(to_json(back) == to_json(spec));
    CHECK(testing::csv_of(generate(back).dataset) == testing::csv_of(generate(spec).dataset));
}

TEST_CASE("invalid specs") {
    GeneratorSpec empty;
    CHECK(spec_error(empty) == Errc::InvalidSpec);

    auto spec = seven_region_spec(0);
    spec.components[0].cells = 0;
    CHECK(spec_error(spec) == Errc::InvalidSpec);

    spec = seven_region_spec(0);
    spec.components[2].sd[1] = -1.0;
    CHECK(spec_error(spec) == Errc::InvalidSpec);

    spec = seven_region_spec(0);
    spec.first_year = 2020;
    CHECK(spec_error(spec) == Errc::InvalidSpec);

    spec = seven_region_spec(0);
    spec.grid.lat0 = 88.0;
    CHECK(spec_error(spec) == Errc::InvalidSpec);

    spec = sinusoidal_target_spec(0);
    spec.relation.predictor = spec.target;
    CHECK(spec_error(spec) == Errc::InvalidSpec);

    try {
        generator_spec_from_json(nlohmann::json::parse(R"({"components": [{"mean": [1, 2]}]})"));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidSpec);
    } catch (const nlohmann::json::exception&) {
    }
}

TEST_CASE("adjusted Rand index") {
    const std::vector<int> a = {0, 0, 0, 1, 1, 1};
    const std::vector<int> b = {0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    CHECK(adjusted_rand_index(a, std::vector<int>{5, 5, 5, 2, 2, 2}) == 1.0);
    // Contingency pairs 2, row pairs 6, column pairs 3, total pairs 15.
    CHECK(std::abs(adjusted_rand_index(a, b) - 8.0 / 33.0) <= 1e-12);
    CHECK(adjusted_rand_index(a, b) == adjusted_rand_index(b, a));

    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> lab(0, 4);
    for (int t = 0; t < 20; ++t) {
        std::vector<int> x(40);
        std::vector<int> y(40);
        for (auto& v : x) v = lab(rng);
        for (auto& v : y) v = lab(rng);
        CHECK(adjusted_rand_index(x, y) == adjusted_rand_index(y, x));
        CHECK(adjusted_rand_index(x, y) < 0.5);
    }
    try {
        adjusted_rand_index(a, std::vector<int>{0, 1});
        FAIL("expected KeyMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::KeyMismatch);
    }
}
