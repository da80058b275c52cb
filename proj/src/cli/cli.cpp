#include "climreg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "climreg/errors.hpp"
#include "climreg/grid_store.hpp"
#include "climreg/pipeline.hpp"
#include "climreg/synth.hpp"

#ifndef CLIMREG_VERSION
#define CLIMREG_VERSION "0.0.0"
#endif

namespace climreg::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Bad flag combinations and unwritable paths; reported with the input exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Run {
public:
    Run(std::string command, const std::vector<std::string>& args, std::ostream& out)
        : command_(std::move(command)), args_(args), out_(out), start_(std::chrono::steady_clock::now()) {}

    void input(const std::string& path) { inputs_.push_back({{"path", path}, {"sha256", sha256_file(path)}}); }

    void output(const std::string& path, const std::string& content) {
        const fs::path p(path);
        std::error_code ec;
        if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw UsageError("cannot write '" + path + "'");
        f << content;
        f.close();
        if (!f) throw UsageError("cannot write '" + path + "'");
        outputs_.push_back({{"path", path}, {"sha256", sha256_hex(content)}});
        out_ << "wrote " << path << '\n';
    }

    json& config() { return config_; }

    void finish(const std::string& manifest_path) {
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json m;
        m["command"] = command_;
        m["argv"] = args_;
        m["tool_version"] = CLIMREG_VERSION;
        m["seed"] = config_.contains("seed") ? config_["seed"] : json(nullptr);
        m["config"] = config_;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        m["timings"] = {{"wall_seconds", seconds}};
        const fs::path p(manifest_path);
        std::error_code ec;
        if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
        std::ofstream f(p, std::ios::binary | std::ios::trunc);
        if (!f) throw UsageError("cannot write '" + manifest_path + "'");
        f << m.dump(2) << '\n';
    }

private:
    std::string command_;
    std::vector<std::string> args_;
    std::ostream& out_;
    std::chrono::steady_clock::time_point start_;
    json config_ = json::object();
    json inputs_ = json::array();
    json outputs_ = json::array();
};

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string sibling(const std::string& path, const std::string& name) {
    const fs::path p(path);
    return (p.has_parent_path() ? p.parent_path() / name : fs::path(name)).string();
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::EmptyInput, "cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ClimateVariable target_variable(const std::string& name) {
    const auto v = parse_variable(name);
    if (!v) fail(Errc::UnknownVariable, "unknown variable '" + name + "'");
    return *v;
}

int resolve_p(const Dataset& ds, std::optional<int> p, std::optional<int> train_years) {
    if (p && train_years) throw UsageError("--p and --train-years are mutually exclusive");
    if (train_years) return static_cast<int>(ds.year_count()) - *train_years;
    return p.value_or(1);
}

// --- subcommands ---

struct DataOpts {
    std::string input;
    double resolution = kDefaultResolution;
};

struct ValidateOpts {
    DataOpts data;
    std::string manifest;
};

int cmd_validate(const ValidateOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("validate", args, out);
    run.input(o.data.input);
    const auto ds = ingest_csv_file(o.data.input, o.data.resolution);
    out << ds.cell_count() << " cells, years " << ds.first_year() << "–" << ds.last_year() << '\n';
    ClimateVector lo;
    ClimateVector hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& cell : ds.cells()) {
        for (int y = ds.first_year(); y <= ds.last_year(); ++y) {
            const auto& v = ds.values(cell.id, y);
            for (std::size_t i = 0; i < kNumVariables; ++i) {
                lo[i] = std::min(lo[i], v[i]);
                hi[i] = std::max(hi[i], v[i]);
            }
        }
    }
    json ranges = json::object();
    for (auto var : kAllVariables) {
        const auto i = index_of(var);
        out << "  " << variable_name(var) << ": min " << format_double(lo[i]) << ", max " << format_double(hi[i])
            << '\n';
        ranges[std::string(variable_name(var))] = {lo[i], hi[i]};
    }
    run.config() = {{"input", o.data.input},
                    {"resolution", o.data.resolution},
                    {"cells", ds.cell_count()},
                    {"first_year", ds.first_year()},
                    {"last_year", ds.last_year()},
                    {"ranges", ranges}};
    if (!o.manifest.empty()) run.finish(o.manifest);
    return kExitOk;
}

struct ClusterOpts {
    DataOpts data;
    std::string method = "em";
    std::string k = "auto";
    std::uint64_t seed = 0;
    std::optional<int> p;
    std::optional<int> train_years;
    int k_max = 12;
    unsigned threads = 1;
    std::string out_dir = ".";
};

int cmd_cluster(const ClusterOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("cluster", args, out);
    run.input(o.data.input);
    const auto ds = ingest_csv_file(o.data.input, o.data.resolution);

    PipelineConfig cfg;
    cfg.method = o.method == "em" ? Method::EmSvr : Method::KmLr;
    cfg.seed = o.seed;
    cfg.p = resolve_p(ds, o.p, o.train_years);
    cfg.k_max = o.k_max;
    cfg.threads = o.threads;
    if (o.k != "auto") {
        int k = 0;
        std::istringstream in(o.k);
        if (!(in >> k) || !in.eof() || k < 1) throw UsageError("--k must be 'auto' or a positive integer");
        cfg.k_override = k;
    }
    const auto regions = regionalize(ds, cfg);

    json model = {{"method", o.method},
                  {"k", regions.k},
                  {"region_count", regions.assignment.region_count},
                  {"k_selection", cfg.k_override ? "fixed" : "cross_validation"},
                  {"seed", o.seed},
                  {"p", cfg.p},
                  {"model", regions.cluster_model}};
    if (!cfg.k_override) {
        model["cv_heldout_log_likelihood"] = regions.cv_log_likelihood;
        model["k_min"] = cfg.k_min;
    }
    std::ostringstream regions_csv;
    write_regions_csv(regions_csv, ds, regions.assignment);
    run.output(join(o.out_dir, "model.json"), model.dump(2) + "\n");
    run.output(join(o.out_dir, "regions.csv"), regions_csv.str());
    out << "k = " << regions.k << ", " << regions.assignment.region_count << " regions\n";

    run.config() = {{"input", o.data.input}, {"resolution", o.data.resolution}, {"method", o.method},
                    {"k", o.k},              {"k_max", o.k_max},                {"seed", o.seed},
                    {"p", cfg.p},            {"threads", o.threads},            {"out_dir", o.out_dir}};
    run.finish(join(o.out_dir, "cluster.manifest.json"));
    return kExitOk;
}

struct TrainOpts {
    DataOpts data;
    std::string regions;
    std::string target = "air_temperature";
    int p = 1;
    std::string model = "svr";
    std::uint64_t seed = 0;
    bool year_feature = false;
    std::size_t folds = 10;
    unsigned threads = 1;
    std::string out_dir = ".";
};

int cmd_train(const TrainOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("train", args, out);
    run.input(o.data.input);
    run.input(o.regions);
    const auto ds = ingest_csv_file(o.data.input, o.data.resolution);
    std::ifstream regions_in(o.regions, std::ios::binary);
    if (!regions_in) fail(Errc::EmptyInput, "cannot open '" + o.regions + "'");
    const auto assignment = read_regions_csv(regions_in, ds);

    PipelineConfig cfg;
    cfg.method = o.model == "svr" ? Method::EmSvr : Method::KmLr;
    cfg.target = target_variable(o.target);
    cfg.p = o.p;
    cfg.seed = o.seed;
    cfg.include_year_feature = o.year_feature;
    cfg.folds = o.folds;
    cfg.threads = o.threads;
    const auto models = build_region_models(ds, assignment, cfg);

    std::ostringstream cv;
    write_cv_report_csv(cv, models);
    run.output(join(o.out_dir, "models.json"), to_json(models).dump(2) + "\n");
    run.output(join(o.out_dir, "cv_report.csv"), cv.str());
    out << models.per_region.size() << " region models trained on "
        << (models.per_region.empty() ? 0 : models.per_region.front().training_rows) << " years\n";

    run.config() = {{"input", o.data.input}, {"resolution", o.data.resolution}, {"regions", o.regions},
                    {"target", o.target},    {"p", o.p},                        {"model", o.model},
                    {"seed", o.seed},        {"year_feature", o.year_feature},  {"folds", o.folds},
                    {"threads", o.threads},  {"out_dir", o.out_dir}};
    run.finish(join(o.out_dir, "train.manifest.json"));
    return kExitOk;
}

struct PredictOpts {
    DataOpts data;
    std::string regions;
    std::string models;
    std::optional<int> p;
    std::string out_dir = ".";
};

int cmd_predict_evaluate(const PredictOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("predict-evaluate", args, out);
    run.input(o.data.input);
    run.input(o.regions);
    run.input(o.models);
    const auto ds = ingest_csv_file(o.data.input, o.data.resolution);
    std::ifstream regions_in(o.regions, std::ios::binary);
    if (!regions_in) fail(Errc::EmptyInput, "cannot open '" + o.regions + "'");
    const auto assignment = read_regions_csv(regions_in, ds);
    const auto models = region_models_from_json(json::parse(read_text(o.models)), assignment);

    const int p = o.p.value_or(models.p);
    if (p != models.p) {
        fail(Errc::KeyMismatch, "--p " + std::to_string(p) + " differs from the models' horizon " +
                                    std::to_string(models.p));
    }
    const auto preds = predict_cells(ds, models, split_years(ds, p).test);
    const auto report = evaluate(preds, assignment, std::string(method_label(models.method)));

    std::ostringstream pred_csv;
    std::ostringstream report_csv;
    write_predictions_csv(pred_csv, ds, preds);
    write_report_csv(report_csv, report);
    run.output(join(o.out_dir, "predictions.csv"), pred_csv.str());
    run.output(join(o.out_dir, "report.csv"), report_csv.str());
    out << "overall RMSE " << format_double(report.overall_rmse) << " over " << preds.entries.size()
        << " predictions\n";

    run.config() = {{"input", o.data.input}, {"resolution", o.data.resolution}, {"regions", o.regions},
                    {"models", o.models},    {"p", p},                          {"out_dir", o.out_dir}};
    run.finish(join(o.out_dir, "predict-evaluate.manifest.json"));
    return kExitOk;
}

struct CompareOpts {
    DataOpts data;
    std::string target = "air_temperature";
    int p = 1;
    std::uint64_t seed = 0;
    std::optional<int> k;
    bool year_feature = false;
    unsigned threads = 1;
    std::string out_dir = ".";
};

int cmd_compare(const CompareOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("compare", args, out);
    run.input(o.data.input);
    const auto ds = ingest_csv_file(o.data.input, o.data.resolution);

    PipelineConfig em;
    em.target = target_variable(o.target);
    em.p = o.p;
    em.seed = o.seed;
    em.k_override = o.k;
    em.include_year_feature = o.year_feature;
    em.threads = o.threads;
    PipelineConfig km = em;
    em.method = Method::EmSvr;
    km.method = Method::KmLr;
    const auto table = compare_methods(ds, em, km);

    std::ostringstream csv;
    write_comparison_csv(csv, table);
    run.output(join(o.out_dir, "comparison.csv"), csv.str());
    for (const auto& row : table.rows) {
        out << row.region_label << ": EM+SVM " << format_double(row.em_svm_rmse) << ", KM+LR "
            << format_double(row.km_lr_rmse) << '\n';
    }

    run.config() = {{"input", o.data.input}, {"resolution", o.data.resolution},
                    {"target", o.target},    {"p", o.p},
                    {"seed", o.seed},        {"k", o.k ? json(*o.k) : json("auto")},
                    {"year_feature", o.year_feature}, {"threads", o.threads},
                    {"out_dir", o.out_dir}};
    run.finish(join(o.out_dir, "compare.manifest.json"));
    return kExitOk;
}

struct RenderOpts {
    std::string input;
    RenderOptions render;
    std::string out;
};

int cmd_render_map(const RenderOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("render-map", args, out);
    run.input(o.input);
    std::ifstream in(o.input, std::ios::binary);
    if (!in) fail(Errc::EmptyInput, "cannot open '" + o.input + "'");
    const auto svg = render_map_svg(in, o.render);
    run.output(o.out, svg);
    run.config() = {{"input", o.input},
                    {"field", o.render.field},
                    {"year", o.render.year ? json(*o.render.year) : json(nullptr)},
                    {"resolution", o.render.resolution ? json(*o.render.resolution) : json(nullptr)},
                    {"title", o.render.title},
                    {"out", o.out}};
    run.finish(sibling(o.out, "render-map.manifest.json"));
    return kExitOk;
}

struct SynthOpts {
    std::string spec;
    bool default_table1 = false;
    std::uint64_t seed = 0;
    std::string out;
    std::string labels;
};

int cmd_synth(const SynthOpts& o, const std::vector<std::string>& args, std::ostream& out) {
    Run run("synth", args, out);
    GeneratorSpec spec;
    if (o.default_table1) {
        spec = seven_region_spec(o.seed);
    } else {
        run.input(o.spec);
        spec = generator_spec_from_json(json::parse(read_text(o.spec)));
    }
    spec.seed = o.seed;
    const auto data = generate(spec);

    std::ostringstream csv;
    data.dataset.write_csv(csv);
    run.output(o.out, csv.str());
    if (!o.labels.empty()) {
        std::ostringstream labels;
        write_labels_csv(labels, data);
        run.output(o.labels, labels.str());
    }
    out << data.dataset.cell_count() << " cells, years " << data.dataset.first_year() << "–"
        << data.dataset.last_year() << '\n';

    run.config() = {{"spec", o.default_table1 ? json("default-table1") : json(o.spec)},
                    {"generator", to_json(spec)},
                    {"seed", o.seed},
                    {"out", o.out},
                    {"labels", o.labels}};
    run.finish(sibling(o.out, "synth.manifest.json"));
    return kExitOk;
}

int cmd_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
    const auto m = json::parse(read_text(manifest_path));
    const auto argv = m.at("argv").get<std::vector<std::string>>();
    if (argv.empty() || argv.front() == "replay") fail(Errc::InvalidSpec, "manifest has no replayable command");
    for (const auto& entry : m.at("inputs")) {
        const auto path = entry.at("path").get<std::string>();
        if (sha256_file(path) != entry.at("sha256").get<std::string>()) {
            fail(Errc::KeyMismatch, "input '" + path + "' changed since the manifest was written");
        }
    }
    std::ostringstream sink;
    const int code = run(argv, sink, err);
    if (code != kExitOk) return code;
    bool all_match = true;
    for (const auto& entry : m.at("outputs")) {
        const auto path = entry.at("path").get<std::string>();
        const bool same = sha256_file(path) == entry.at("sha256").get<std::string>();
        out << (same ? "match " : "DIFFERS ") << path << '\n';
        all_match = all_match && same;
    }
    return all_match ? kExitOk : kExitCompute;
}

void add_data_opts(CLI::App* cmd, DataOpts& d) {
    cmd->add_option("input", d.input, "Gridded annual CSV")->required();
    cmd->add_option("--resolution", d.resolution, "Grid spacing in degrees")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Climate regionalization and per-region regression", "climreg"};
    app.set_version_flag("--version", CLIMREG_VERSION);
    app.require_subcommand(1);

    ValidateOpts validate;
    auto* v = app.add_subcommand("validate", "Check a gridded CSV file and summarize it");
    add_data_opts(v, validate.data);
    v->add_option("--manifest", validate.manifest, "Write a run manifest to this path");

    ClusterOpts cluster;
    auto* c = app.add_subcommand("cluster", "Partition grid cells into climate regions");
    add_data_opts(c, cluster.data);
    c->add_option("--method", cluster.method)->check(CLI::IsMember({"em", "kmeans"}))->capture_default_str();
    c->add_option("--k", cluster.k, "'auto' or a fixed region count")->capture_default_str();
    c->add_option("--seed", cluster.seed)->required();
    auto* c_p = c->add_option("--p", cluster.p, "Number of held-out final years");
    c->add_option("--train-years", cluster.train_years, "Number of leading years used for training")
        ->excludes(c_p);
    c->add_option("--k-max", cluster.k_max)->capture_default_str();
    c->add_option("--threads", cluster.threads)->capture_default_str();
    c->add_option("--out-dir", cluster.out_dir)->capture_default_str();

    TrainOpts train;
    auto* t = app.add_subcommand("train", "Fit one regression model per region");
    add_data_opts(t, train.data);
    t->add_option("regions", train.regions, "regions.csv from cluster")->required();
    t->add_option("--target", train.target)->capture_default_str();
    t->add_option("--p", train.p)->capture_default_str();
    t->add_option("--model", train.model)->check(CLI::IsMember({"svr", "ols"}))->capture_default_str();
    t->add_option("--seed", train.seed)->required();
    t->add_flag("--year-feature", train.year_feature, "Append the year index as a feature");
    t->add_option("--folds", train.folds)->capture_default_str();
    t->add_option("--threads", train.threads)->capture_default_str();
    t->add_option("--out-dir", train.out_dir)->capture_default_str();

    PredictOpts predict;
    auto* pe = app.add_subcommand("predict-evaluate", "Predict the held-out years and score them");
    add_data_opts(pe, predict.data);
    pe->add_option("regions", predict.regions)->required();
    pe->add_option("models", predict.models, "models.json from train")->required();
    pe->add_option("--p", predict.p, "Held-out years (defaults to the models' horizon)");
    pe->add_option("--out-dir", predict.out_dir)->capture_default_str();

    CompareOpts compare;
    auto* cmp = app.add_subcommand("compare", "Run EM+SVM and KM+LR and tabulate per-region RMSE");
    add_data_opts(cmp, compare.data);
    cmp->add_option("--target", compare.target)->capture_default_str();
    cmp->add_option("--p", compare.p)->capture_default_str();
    cmp->add_option("--seed", compare.seed)->required();
    cmp->add_option("--k", compare.k, "Fixed region count for both methods");
    cmp->add_flag("--year-feature", compare.year_feature);
    cmp->add_option("--threads", compare.threads)->capture_default_str();
    cmp->add_option("--out-dir", compare.out_dir)->capture_default_str();

    RenderOpts render;
    auto* r = app.add_subcommand("render-map", "Draw a per-cell field as an SVG map");
    r->add_option("values", render.input, "CSV with lat, lon and the field")->required();
    r->add_option("--field", render.render.field)->capture_default_str();
    r->add_option("--out", render.out)->required();
    r->add_option("--year", render.render.year, "Keep only rows of this year");
    r->add_option("--resolution", render.render.resolution, "Cell size in degrees (inferred if omitted)");
    r->add_option("--title", render.render.title);

    SynthOpts synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic gridded dataset");
    auto* s_spec = s->add_option("--spec", synth.spec, "Generator spec JSON");
    auto* s_def = s->add_flag("--default-table1", synth.default_table1, "Seven-region built-in spec");
    s_spec->excludes(s_def);
    s->add_option("--seed", synth.seed)->required();
    s->add_option("--out", synth.out)->required();
    s->add_option("--labels", synth.labels, "Write planted region labels here");

    std::string replay_manifest;
    auto* rp = app.add_subcommand("replay", "Re-run a recorded command and verify its output digests");
    rp->add_option("manifest", replay_manifest)->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (s->parsed() && !synth.default_table1 && synth.spec.empty()) {
            throw CLI::ValidationError("synth", "one of --spec or --default-table1 is required");
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        if (v->parsed()) return cmd_validate(validate, args, out);
        if (c->parsed()) return cmd_cluster(cluster, args, out);
        if (t->parsed()) return cmd_train(train, args, out);
        if (pe->parsed()) return cmd_predict_evaluate(predict, args, out);
        if (cmp->parsed()) return cmd_compare(compare, args, out);
        if (r->parsed()) return cmd_render_map(render, args, out);
        if (s->parsed()) return cmd_synth(synth, args, out);
        if (rp->parsed()) return cmd_replay(replay_manifest, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return is_input_error(e.code()) ? kExitInput : kExitCompute;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const json::exception& e) {
        err << "error: invalid JSON: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitCompute;
    }
    return kExitInput;
}

}  // namespace climreg::cli
