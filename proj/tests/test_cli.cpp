#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "climreg/cli.hpp"
#include "climreg/csv_table.hpp"
#include "climreg/pipeline.hpp"
#include "climreg/synth.hpp"
#include "support.hpp"

using namespace climreg;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

CsvTable table_of(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return read_csv_table(in);
}

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

// Root-mean-square of the abs_error column.
double rmse_of_predictions(const std::string& path) {
    const auto t = table_of(path);
    const auto col = t.require_column("abs_error");
    double sq = 0.0;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double e = std::stod(t.rows[i][col]);
        sq += e * e;
    }
    return std::sqrt(sq / static_cast<double>(t.rows.size()));
}

std::string synth_default(const testing::TempDir& dir, const std::string& seed = "7") {
    const auto path = dir / ("data" + seed + ".csv");
    REQUIRE(invoke({"synth", "--default-table1", "--seed", seed, "--out", path}).code == 0);
    return path;
}

}  // namespace

TEST_CASE("validate summarizes a dataset") {
    testing::TempDir dir("cli_validate");
    const auto data = synth_default(dir);
    const auto r = invoke({"validate", data});
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.rfind("169 cells, years 1948–2012\n", 0) == 0);
    CHECK(r.out.find("air_temperature: min") != std::string::npos);

    CHECK(invoke({"validate", data, "--manifest", dir / "v.json"}).code == 0);
    const auto m = nlohmann::json::parse(slurp(dir / "v.json"));
    CHECK(m["command"] == "validate");
    CHECK(m["inputs"][0]["sha256"] == cli::sha256_file(data));
}

TEST_CASE("validate rejects bad input with the input exit code") {
    testing::TempDir dir("cli_bad");
    spit(dir / "empty.csv", "");
    CHECK(invoke({"validate", dir / "empty.csv"}).code == cli::kExitInput);

    const std::string header =
        "lat,lon,year,air_temperature,precipitable_water,precipitation,relative_humidity,"
        "sea_level_pressure,zonal_wind,meridional_wind\n";
    spit(dir / "ragged.csv", header + "10,70,2000,1,2,3,4,1000,0,0\n10,70,2001,1,2,3,4,1000,0,0\n"
                                      "12.5,70,2000,1,2,3,4,1000,0,0\n");
    const auto r = invoke({"validate", dir / "ragged.csv"});
    CHECK(r.code == cli::kExitInput);
    CHECK(r.err.find("2001") != std::string::npos);

    CHECK(invoke({"validate", dir / "missing.csv"}).code == cli::kExitInput);
    CHECK(invoke({}).code == cli::kExitInput);
    CHECK(invoke({"cluster", dir / "empty.csv"}).code == cli::kExitInput);
    CHECK(invoke({"--help"}).code == cli::kExitOk);
}

TEST_CASE("cluster writes regions and is reproducible") {
    testing::TempDir dir("cli_cluster");
    const auto data = synth_default(dir);

    REQUIRE(invoke({"cluster", data, "--k", "1", "--seed", "1", "--out-dir", dir / "one"}).code == 0);
    const auto one = table_of(dir / "one/regions.csv");
    CHECK(one.rows.size() == 169);
    for (std::size_t i = 0; i < one.rows.size(); ++i) CHECK(one.rows[i][one.require_column("region_id")] == "0");

    REQUIRE(invoke({"cluster", data, "--seed", "3", "--out-dir", dir / "a"}).code == 0);
    REQUIRE(invoke({"cluster", data, "--seed", "3", "--out-dir", dir / "b"}).code == 0);
    CHECK(slurp(dir / "a/regions.csv") == slurp(dir / "b/regions.csv"));
    CHECK(slurp(dir / "a/model.json") == slurp(dir / "b/model.json"));
    const auto regions = table_of(dir / "a/regions.csv");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < regions.rows.size(); ++i) ids.insert(regions.rows[i][regions.require_column("region_id")]);
    CHECK(ids.size() == 7);

    REQUIRE(invoke({"cluster", data, "--method", "kmeans", "--k", "4", "--seed", "3", "--out-dir", dir / "km"}).code ==
            0);
    CHECK(nlohmann::json::parse(slurp(dir / "km/model.json"))["method"] == "kmeans");

    CHECK(invoke({"cluster", data, "--p", "1", "--train-years", "60", "--seed", "1", "--out-dir", dir / "x"}).code ==
          cli::kExitInput);
    CHECK(invoke({"cluster", data, "--out-dir", dir / "x"}).code == cli::kExitInput);
    CHECK(invoke({"cluster", data, "--method", "dbscan", "--seed", "1"}).code == cli::kExitInput);
}

TEST_CASE("train, predict and evaluate") {
    testing::TempDir dir("cli_train");
    const auto data = synth_default(dir);
    REQUIRE(invoke({"cluster", data, "--seed", "3", "--out-dir", dir.path().string()}).code == 0);
    const auto regions = dir / "regions.csv";

    CHECK(invoke({"train", data, regions, "--p", "64", "--seed", "1", "--out-dir", dir / "bad"}).code ==
          cli::kExitCompute);

    REQUIRE(invoke({"train", data, regions, "--model", "ols", "--p", "2", "--seed", "1", "--out-dir", dir / "a"}).code ==
            0);
    REQUIRE(invoke({"train", data, regions, "--model", "ols", "--p", "2", "--seed", "1", "--out-dir", dir / "b"}).code ==
            0);
    CHECK(slurp(dir / "a/models.json") == slurp(dir / "b/models.json"));
    CHECK(table_of(dir / "a/cv_report.csv").rows.size() == 7);

    REQUIRE(invoke({"predict-evaluate", data, regions, dir / "a/models.json", "--out-dir", dir / "pe"}).code == 0);
    CHECK(table_of(dir / "pe/predictions.csv").rows.size() == 169 * 2);
    const auto report = table_of(dir / "pe/report.csv");
    CHECK(report.rows.size() == 7);
    std::size_t cells = 0;
    for (std::size_t i = 0; i < report.rows.size(); ++i) cells += std::stoul(report.rows[i][report.require_column("region_size")]);
    CHECK(cells == 169);

    CHECK(invoke({"predict-evaluate", data, regions, dir / "a/models.json", "--p", "3", "--out-dir", dir / "x"}).code ==
          cli::kExitInput);
}

TEST_CASE("noiseless linear data is predicted exactly end to end") {
    testing::TempDir dir("cli_linear");
    spit(dir / "spec.json", to_json(linear_target_spec(5, 0.0)).dump());
    const auto data = dir / "linear.csv";
    REQUIRE(invoke({"synth", "--spec", dir / "spec.json", "--seed", "5", "--out", data}).code == 0);
    REQUIRE(invoke({"cluster", data, "--seed", "2", "--out-dir", dir.path().string()}).code == 0);
    REQUIRE(invoke({"train", data, dir / "regions.csv", "--model", "ols", "--seed", "2", "--out-dir", dir.path().string()}).code ==
            0);
    REQUIRE(invoke({"predict-evaluate", data, dir / "regions.csv", dir / "models.json", "--out-dir", dir.path().string()}).code ==
            0);
    CHECK(rmse_of_predictions(dir / "predictions.csv") <= 1e-6);
    CHECK(table_of(dir / "predictions.csv").rows.size() == 169);
}

TEST_CASE("step-wise commands reproduce compare") {
    testing::TempDir dir("cli_compose");
    const auto data = synth_default(dir, "11");
    REQUIRE(invoke({"cluster", data, "--seed", "4", "--out-dir", dir.path().string()}).code == 0);
    REQUIRE(invoke({"train", data, dir / "regions.csv", "--seed", "4", "--out-dir", dir.path().string()}).code == 0);
    REQUIRE(invoke({"predict-evaluate", data, dir / "regions.csv", dir / "models.json", "--out-dir", dir.path().string()}).code ==
            0);
    REQUIRE(invoke({"compare", data, "--seed", "4", "--out-dir", dir.path().string()}).code == 0);

    const auto cmp = table_of(dir / "comparison.csv");
    CHECK(cmp.header == std::vector<std::string>{"region_label", "em_svm_rmse", "km_lr_rmse", "overlap_fraction"});
    const auto last = cmp.rows.size() - 1;
    CHECK(cmp.rows[last][0] == "overall");
    const double overall = std::stod(cmp.rows[last][cmp.require_column("em_svm_rmse")]);
    CHECK(std::abs(rmse_of_predictions(dir / "predictions.csv") - overall) <= 1e-12);

    const auto first = slurp(dir / "comparison.csv");
    REQUIRE(invoke({"compare", data, "--seed", "4", "--threads", "2", "--out-dir", dir.path().string()}).code == 0);
    CHECK(slurp(dir / "comparison.csv") == first);
}

TEST_CASE("manifests record every output") {
    testing::TempDir dir("cli_manifest");
    const auto data = synth_default(dir);
    REQUIRE(invoke({"cluster", data, "--seed", "3", "--out-dir", dir.path().string()}).code == 0);
    const auto m = nlohmann::json::parse(slurp(dir / "cluster.manifest.json"));
    CHECK(m["command"] == "cluster");
    CHECK(m["seed"] == 3);
    CHECK(m["tool_version"].is_string());
    CHECK(m["timings"]["wall_seconds"].is_number());
    CHECK(m["config"]["method"] == "em");
    REQUIRE(m["outputs"].size() == 2);
    for (const auto& o : m["outputs"]) CHECK(o["sha256"] == cli::sha256_file(o["path"].get<std::string>()));
    CHECK(m["inputs"][0]["sha256"] == cli::sha256_file(data));

    const auto synth = nlohmann::json::parse(slurp(dir / "synth.manifest.json"));
    CHECK(synth["outputs"][0]["sha256"] == cli::sha256_file(data));

    auto r = invoke({"replay", dir / "cluster.manifest.json"});
    CHECK(r.code == 0);
    CHECK(count(r.out, "match ") == 2);

    spit(data, slurp(data) + "\n");
    CHECK(invoke({"replay", dir / "cluster.manifest.json"}).code == cli::kExitInput);
}

TEST_CASE("sha256 digests") {
    CHECK(cli::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(cli::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("render-map") {
    testing::TempDir dir("cli_render");
    spit(dir / "one.csv", "lat,lon,region_id\n10,70,0\n");
    REQUIRE(invoke({"render-map", dir / "one.csv", "--out", dir / "one.svg"}).code == 0);
    const auto one = slurp(dir / "one.svg");
    CHECK(one.rfind("<?xml", 0) == 0);
    CHECK(count(one, "class=\"cell\"") == 1);
    CHECK(count(one, "legend-swatch") == 1);

    const auto data = synth_default(dir);
    REQUIRE(invoke({"cluster", data, "--seed", "3", "--out-dir", dir.path().string()}).code == 0);
    REQUIRE(invoke({"render-map", dir / "regions.csv", "--out", dir / "regions.svg"}).code == 0);
    const auto regions = slurp(dir / "regions.svg");
    CHECK(count(regions, "class=\"cell\"") == 169);
    CHECK(count(regions, "class=\"legend-swatch\"") == 7);
    CHECK(count(regions, ">Region ") == 7);
    CHECK(nlohmann::json::parse(slurp(dir / "render-map.manifest.json"))["outputs"].size() == 1);

    spit(dir / "flat.csv", "lat,lon,error\n10,70,1.5\n10,72.5,1.5\n");
    std::istringstream flat_in(slurp(dir / "flat.csv"));
    const auto flat = cli::render_map_svg(flat_in,
                                          cli::RenderOptions{"error", {}, {}, ""});
    CHECK(flat.find("min 1.5") != std::string::npos);
    CHECK(flat.find("max 1.5") != std::string::npos);

    CHECK(invoke({"render-map", dir / "one.csv", "--field", "rmse", "--out", dir / "x.svg"}).code == cli::kExitInput);
    CHECK(invoke({"render-map", data, "--field", "precipitation", "--out", dir / "x.svg"}).code == cli::kExitInput);
    REQUIRE(invoke({"render-map", data, "--field", "precipitation", "--year", "2000", "--out", dir / "p.svg"}).code == 0);
    CHECK(count(slurp(dir / "p.svg"), "class=\"cell\"") == 169);
}

TEST_CASE("synth output is deterministic and valid") {
    testing::TempDir dir("cli_synth");
    REQUIRE(invoke({"synth", "--default-table1", "--seed", "9", "--out", dir / "a.csv", "--labels", dir / "l.csv"}).code ==
            0);
    REQUIRE(invoke({"synth", "--default-table1", "--seed", "9", "--out", dir / "b.csv"}).code == 0);
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    CHECK(table_of(dir / "a.csv").rows.size() == 10985);
    CHECK(table_of(dir / "l.csv").rows.size() == 169);
    CHECK(invoke({"validate", dir / "a.csv"}).code == 0);

    spit(dir / "bad.json", R"({"components": []})");
    CHECK(invoke({"synth", "--spec", dir / "bad.json", "--seed", "1", "--out", dir / "c.csv"}).code == cli::kExitInput);
    CHECK(invoke({"synth", "--seed", "1", "--out", dir / "c.csv"}).code == cli::kExitInput);
    CHECK(invoke({"synth", "--default-table1", "--spec", dir / "bad.json", "--seed", "1", "--out", dir / "c.csv"}).code ==
          cli::kExitInput);
}
