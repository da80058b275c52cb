#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "climreg/clustering.hpp"
#include "climreg/errors.hpp"
#include "climreg/grid_store.hpp"
#include "climreg/numeric.hpp"
#include "climreg/pipeline.hpp"
#include "climreg/regressors.hpp"
#include "climreg/synth.hpp"

namespace py = pybind11;
using namespace climreg;

namespace {

ClimateVariable variable(const std::string& name) {
    const auto v = parse_variable(name);
    if (!v) fail(Errc::UnknownVariable, "unknown variable '" + name + "'");
    return *v;
}

Method method(const std::string& name) {
    if (name == "em_svr") return Method::EmSvr;
    if (name == "km_lr") return Method::KmLr;
    fail(Errc::InvalidArgument, "method must be 'em_svr' or 'km_lr'");
}

PipelineConfig pipeline_config(const std::string& m, const std::string& target, int p, std::uint64_t seed,
                               std::optional<int> k, bool year_feature, unsigned threads) {
    PipelineConfig cfg;
    cfg.method = method(m);
    cfg.target = variable(target);
    cfg.p = p;
    cfg.seed = seed;
    cfg.k_override = k;
    cfg.include_year_feature = year_feature;
    cfg.threads = threads;
    return cfg;
}

py::dict report_dict(const EvaluationReport& r) {
    py::dict d;
    d["overall_rmse"] = r.overall_rmse;
    d["per_region_rmse"] = r.per_region_rmse;
    d["per_region_entries"] = r.per_region_entries;
    d["per_region_cells"] = r.per_region_cells;
    d["per_region_correlation"] = r.per_region_correlation;
    return d;
}

py::dict run_dict(const Dataset& ds, const PipelineRun& run) {
    py::dict d;
    d["k"] = run.regions.k;
    d["regions"] = run.regions.assignment.region_of;
    d["report"] = report_dict(run.report);
    Matrix preds(static_cast<Eigen::Index>(run.predictions.entries.size()), 5);
    for (std::size_t i = 0; i < run.predictions.entries.size(); ++i) {
        const auto& e = run.predictions.entries[i];
        const auto& cell = ds.cell(e.cell);
        preds.row(static_cast<Eigen::Index>(i)) << cell.lat, cell.lon, e.year, e.predicted, e.actual;
    }
    d["predictions"] = preds;
    return d;
}

Matrix climatology(const Dataset& ds, const std::optional<std::vector<int>>& years) {
    const auto ys = years.value_or(ds.years());
    return climatology_matrix(long_term_means(ds, ys));
}

}  // namespace

PYBIND11_MODULE(_climreg, m) {
    m.doc() = "Climate regionalization and per-region regression";

    static py::exception<Error> error(m, "ClimregError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = error;
            exc.attr("code") = std::string(errc_name(e.code()));
            PyErr_SetString(error.ptr(), e.what());
        }
    });

    m.attr("VARIABLES") = [] {
        std::vector<std::string> names;
        for (auto v : kAllVariables) names.emplace_back(variable_name(v));
        return names;
    }();

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("cell_count", &Dataset::cell_count)
        .def_property_readonly("record_count", &Dataset::record_count)
        .def_property_readonly("first_year", &Dataset::first_year)
        .def_property_readonly("last_year", &Dataset::last_year)
        .def_property_readonly("resolution", &Dataset::resolution)
        .def("years", &Dataset::years)
        .def("cells",
             [](const Dataset& ds) {
                 std::vector<std::pair<double, double>> out;
                 for (const auto& c : ds.cells()) out.emplace_back(c.lat, c.lon);
                 return out;
             })
        .def("values",
             [](const Dataset& ds, std::uint32_t cell, int year) {
                 const auto& v = ds.values(CellId{cell}, year);
                 return std::vector<double>(v.begin(), v.end());
             },
             py::arg("cell"), py::arg("year"))
        .def("to_csv", [](const Dataset& ds) {
            std::ostringstream out;
            ds.write_csv(out);
            return out.str();
        });

    m.def("ingest_csv", &ingest_csv_file, py::arg("path"), py::arg("resolution") = kDefaultResolution);
    m.def(
        "ingest_csv_text",
        [](const std::string& text, double resolution) {
            std::istringstream in(text);
            return ingest_csv(in, resolution);
        },
        py::arg("text"), py::arg("resolution") = kDefaultResolution);
    m.def(
        "split_years",
        [](const Dataset& ds, int p) {
            auto s = split_years(ds, p);
            return py::make_tuple(s.train, s.test);
        },
        py::arg("dataset"), py::arg("p"));
    m.def("long_term_means", &climatology, py::arg("dataset"), py::arg("years") = py::none(),
          "Per-cell means over the given years (all years by default), one row per cell.");

    py::class_<MixtureModel>(m, "MixtureModel")
        .def_property_readonly("k", &MixtureModel::k)
        .def_property_readonly("weights",
                               [](const MixtureModel& mm) {
                                   std::vector<double> w;
                                   for (const auto& g : mm.components) w.push_back(g.weight);
                                   return w;
                               })
        .def_property_readonly("means",
                               [](const MixtureModel& mm) {
                                   Matrix out(mm.k(), mm.dim());
                                   for (int j = 0; j < mm.k(); ++j) {
                                       out.row(j) = mm.scaler.inverse(Vector(mm.components[j].mean)).transpose();
                                   }
                                   return out;
                               })
        .def_readonly("log_likelihood", &MixtureModel::final_log_likelihood)
        .def_readonly("iterations", &MixtureModel::iterations)
        .def_readonly("converged", &MixtureModel::converged)
        .def("responsibilities", [](const MixtureModel& mm, const Matrix& x) { return e_step(x, mm); })
        .def("assign", [](const MixtureModel& mm, const Matrix& x) { return assign_hard(x, mm).region_of; })
        .def("to_json", [](const MixtureModel& mm) { return to_json(mm).dump(); });

    m.def(
        "em_fit",
        [](const Matrix& x, int k, std::uint64_t seed, int n_init, int max_iter, double rel_tol,
           double variance_floor) {
            EmConfig cfg;
            cfg.seed = seed;
            cfg.n_init = n_init;
            cfg.max_iter = max_iter;
            cfg.rel_tol = rel_tol;
            cfg.variance_floor = variance_floor;
            return em_fit(x, k, cfg);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("n_init") = 5, py::arg("max_iter") = 200,
        py::arg("rel_tol") = 1e-7, py::arg("variance_floor") = 1e-6);

    py::class_<KMeansModel>(m, "KMeansModel")
        .def_property_readonly("k", &KMeansModel::k)
        .def_readonly("inertia", &KMeansModel::inertia)
        .def_readonly("iterations", &KMeansModel::iterations)
        .def_property_readonly("centroids", [](const KMeansModel& km) { return km.scaler.inverse(km.centroids); })
        .def("assign", [](const KMeansModel& km, const Matrix& x) { return kmeans_assign(x, km).region_of; });

    m.def(
        "kmeans_fit",
        [](const Matrix& x, int k, std::uint64_t seed, int n_init) {
            KMeansConfig cfg;
            cfg.seed = seed;
            cfg.n_init = n_init;
            return kmeans_fit(x, k, cfg);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("n_init") = 10);

    m.def(
        "select_k_cv",
        [](const Matrix& x, int k_min, int k_max, std::size_t folds, std::uint64_t seed, unsigned threads) {
            SelectKConfig cfg;
            cfg.k_min = k_min;
            cfg.k_max = k_max;
            cfg.folds = folds;
            cfg.seed = seed;
            cfg.threads = threads;
            const auto r = select_k_cv(x, cfg);
            return py::make_tuple(r.k, r.mean_heldout_log_likelihood);
        },
        py::arg("points"), py::arg("k_min") = 1, py::arg("k_max") = 12, py::arg("folds") = 10, py::arg("seed") = 0,
        py::arg("threads") = 1);

    py::class_<SvrModel>(m, "SvrModel")
        .def_readonly("C", &SvrModel::C)
        .def_readonly("epsilon", &SvrModel::epsilon)
        .def_property_readonly("gamma", [](const SvrModel& s) { return s.kernel.gamma; })
        .def_property_readonly("support_count", [](const SvrModel& s) { return s.support_vectors.rows(); })
        .def_readonly("max_violation", &SvrModel::max_violation)
        .def_readonly("converged", &SvrModel::converged)
        .def("predict", [](const SvrModel& s, const Matrix& x) {
            Vector out(x.rows());
            for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = svr_predict(s, x.row(i).transpose());
            return out;
        });

    m.def(
        "svr_train",
        [](const Matrix& x, const Vector& y, double C, double epsilon, double gamma, const std::string& kernel) {
            SvrParams p;
            p.C = C;
            p.epsilon = epsilon;
            if (kernel == "rbf") {
                p.kernel = {KernelKind::Rbf, gamma};
            } else if (kernel == "linear") {
                p.kernel = {KernelKind::Linear, gamma};
            } else {
                fail(Errc::InvalidArgument, "kernel must be 'rbf' or 'linear'");
            }
            return svr_train(x, y, p);
        },
        py::arg("x"), py::arg("y"), py::arg("C") = 10.0, py::arg("epsilon") = 0.1, py::arg("gamma") = 1.0,
        py::arg("kernel") = "rbf");

    m.def(
        "svr_grid_search",
        [](const Matrix& x, const Vector& y, std::size_t folds, std::uint64_t seed, unsigned threads) {
            const auto r = grid_search(x, y, default_svr_grid(x.cols()), folds, seed, threads);
            py::dict d;
            d["C"] = r.best.C;
            d["epsilon"] = r.best.epsilon;
            d["gamma"] = r.best.kernel.gamma;
            d["cv_mean_rmse"] = r.report.mean_rmse;
            d["cv_std_rmse"] = r.report.std_rmse;
            return d;
        },
        py::arg("x"), py::arg("y"), py::arg("folds") = 10, py::arg("seed") = 0, py::arg("threads") = 1);

    py::class_<LinearModel>(m, "LinearModel")
        .def_property_readonly("coefficients", &LinearModel::raw_coefficients)
        .def_property_readonly("intercept", &LinearModel::raw_intercept)
        .def("predict", [](const LinearModel& lm, const Matrix& x) {
            Vector out(x.rows());
            for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = ols_predict(lm, x.row(i).transpose());
            return out;
        });

    m.def("ols_fit", &ols_fit, py::arg("x"), py::arg("y"), py::arg("ridge_jitter") = 1e-10);
    m.def("make_folds", &make_folds, py::arg("n"), py::arg("folds") = 10, py::arg("seed") = 0);
    m.def(
        "adjusted_rand_index",
        [](const std::vector<int>& a, const std::vector<int>& b) { return adjusted_rand_index(a, b); }, py::arg("a"),
        py::arg("b"));

    m.def(
        "generate",
        [](const std::string& kind, std::uint64_t seed, std::optional<double> noise_sigma) {
            GeneratorSpec spec;
            if (kind == "seven_region") {
                spec = seven_region_spec(seed);
            } else if (kind == "sinusoidal") {
                spec = sinusoidal_target_spec(seed, noise_sigma.value_or(0.1));
            } else if (kind == "linear") {
                spec = linear_target_spec(seed, noise_sigma.value_or(0.0));
            } else {
                fail(Errc::InvalidSpec, "kind must be 'seven_region', 'sinusoidal' or 'linear'");
            }
            if (kind == "seven_region" && noise_sigma) spec.noise_sigma = *noise_sigma;
            auto data = generate(spec);
            return py::make_tuple(std::move(data.dataset), data.true_labels);
        },
        py::arg("kind") = "seven_region", py::arg("seed") = 0, py::arg("noise_sigma") = py::none(),
        "Synthetic dataset and its planted region labels.");
    m.def(
        "generate_from_spec",
        [](const std::string& spec_json, std::optional<std::uint64_t> seed) {
            auto spec = generator_spec_from_json(nlohmann::json::parse(spec_json));
            if (seed) spec.seed = *seed;
            auto data = generate(spec);
            return py::make_tuple(std::move(data.dataset), data.true_labels);
        },
        py::arg("spec_json"), py::arg("seed") = py::none());

    m.def(
        "run_pipeline",
        [](const Dataset& ds, const std::string& m_, const std::string& target, int p, std::uint64_t seed,
           std::optional<int> k, bool year_feature, unsigned threads) {
            const auto cfg = pipeline_config(m_, target, p, seed, k, year_feature, threads);
            return run_dict(ds, run_pipeline(ds, cfg));
        },
        py::arg("dataset"), py::arg("method") = "em_svr", py::arg("target") = "air_temperature", py::arg("p") = 1,
        py::arg("seed") = 0, py::arg("k") = py::none(), py::arg("year_feature") = false, py::arg("threads") = 1);

    m.def(
        "compare",
        [](const Dataset& ds, const std::string& target, int p, std::uint64_t seed, std::optional<int> k,
           bool year_feature, unsigned threads) {
            const auto em = pipeline_config("em_svr", target, p, seed, k, year_feature, threads);
            const auto km = pipeline_config("km_lr", target, p, seed, k, year_feature, threads);
            const auto table = compare_methods(ds, em, km);
            py::list rows;
            for (const auto& r : table.rows) {
                py::dict d;
                d["region_label"] = r.region_label;
                d["em_svm_rmse"] = r.em_svm_rmse;
                d["km_lr_rmse"] = r.km_lr_rmse;
                d["overlap_fraction"] = r.overlap_fraction;
                rows.append(d);
            }
            return rows;
        },
        py::arg("dataset"), py::arg("target") = "air_temperature", py::arg("p") = 1, py::arg("seed") = 0,
        py::arg("k") = py::none(), py::arg("year_feature") = false, py::arg("threads") = 1);
}
