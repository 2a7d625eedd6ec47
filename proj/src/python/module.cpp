#include "kdfe/dsl/evaluate.hpp"
#include "kdfe/dsl/feature_code.hpp"
#include "kdfe/dsl/registry.hpp"
#include "kdfe/error.hpp"
#include "kdfe/harness/harness.hpp"
#include "kdfe/ml/metrics.hpp"
#include "kdfe/risk/risk.hpp"
#include "kdfe/stats/stats.hpp"
#include "kdfe/synth/synth.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>

namespace py = pybind11;
using namespace kdfe;

namespace {

py::object to_py(const nlohmann::json &j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object &o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<EventRecord> events_from_tuples(const std::vector<std::tuple<int, std::string, std::string>> &rows) {
    std::vector<EventRecord> out;
    for (const auto &[concept_id, date, value] : rows) {
        EventRecord e;
        e.patient_id = "P";
        e.concept_type_id = concept_id;
        e.observation_start_date = Date::parse(date);
        e.value_char = value;
        out.push_back(std::move(e));
    }
    return sort_events(EventTable{std::move(out), Track::WithoutJanusmed}).rows();
}

nlohmann::json terms_json(const dsl::FeatureExpr &e) {
    auto terms = nlohmann::json::array();
    for (const auto &t : e.terms) {
        if (const auto *s = std::get_if<dsl::Selector>(&t)) {
            nlohmann::json j{{"kind", "selector"}, {"concept", s->concept_id}, {"value", s->value}};
            j["hierarchy_level"] = s->hierarchy_level ? nlohmann::json(*s->hierarchy_level) : nlohmann::json();
            terms.push_back(j);
        } else {
            terms.push_back({{"kind", "operator"}, {"opcode", static_cast<int>(std::get<dsl::Operator>(t).opcode)}});
        }
    }
    return terms;
}

std::filesystem::path sub(const std::string &run_dir, const char *name) {
    return std::filesystem::path{run_dir} / name;
}

} // namespace

PYBIND11_MODULE(_kdfe, m) {
    m.doc() = "aKDFE feature engineering and evaluation engine";

    // translators registered later are tried first
    py::register_exception<Error>(m, "KdfeError", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("parse_feature_code", [](const std::string &code) { return to_py(terms_json(dsl::parse_feature_code(code))); },
          py::arg("code"), "Parsed terms as a list of dicts.");
    m.def("render_feature_code",
          [](const std::string &code) { return dsl::render_feature_code(dsl::parse_feature_code(code)); },
          py::arg("code"), "Canonical text of a feature code.");
    m.def("describe_feature", [](const std::string &code) { return dsl::describe_feature(dsl::parse_feature_code(code)); },
          py::arg("code"));
    m.def(
        "evaluate_feature",
        [](const std::string &code, const std::vector<std::tuple<int, std::string, std::string>> &events,
           const std::string &reference_date) {
            return dsl::evaluate_feature(dsl::parse_feature_code(code), events_from_tuples(events),
                                         Date::parse(reference_date));
        },
        py::arg("code"), py::arg("events"), py::arg("reference_date"),
        "Evaluates a code over (concept_id, 'YYYY-MM-DD', value) events; None when absent.");

    m.def(
        "risk_level",
        [](const std::vector<std::string> &substances, const std::map<std::string, int> &table) {
            return risk::to_string(
                risk::aggregate_risk({substances.begin(), substances.end()}, risk::RiskTable{table}));
        },
        py::arg("substances"), py::arg("table"));

    m.def("auroc", [](const std::vector<double> &s, const std::vector<std::uint8_t> &y) { return ml::auroc(s, y); },
          py::arg("scores"), py::arg("labels"));
    m.def(
        "compute_metrics",
        [](const std::vector<double> &s, const std::vector<std::uint8_t> &y, double threshold) {
            return to_py(ml::compute_metrics(s, y, threshold).to_json());
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);
    m.def("pearson", [](const std::vector<double> &x, const std::vector<double> &y) { return stats::pearson(x, y); },
          py::arg("x"), py::arg("y"));
    m.def(
        "anova_f",
        [](const std::vector<std::vector<double>> &groups) {
            const auto r = stats::anova_f(groups);
            return py::dict(py::arg("f") = r.f, py::arg("df_between") = r.df_between,
                            py::arg("df_within") = r.df_within, py::arg("p") = r.p);
        },
        py::arg("groups"));

    m.def(
        "synth",
        [](const std::string &out_dir, const py::object &config, bool null) {
            auto cfg = config.is_none() ? synth::SynthConfig{} : synth::SynthConfig::from_json(from_py(config));
            if (null) {
                cfg = cfg.null_model();
            }
            cfg.validate();
            py::gil_scoped_release release;
            const auto d = synth::generate(cfg);
            synth::write_synth(d, out_dir);
            return d.events.size();
        },
        py::arg("out_dir"), py::arg("config") = py::none(), py::arg("null") = false,
        "Writes a synthetic cohort; returns the event count.");

    m.def(
        "build_features",
        [](const std::string &in_dir, const std::string &run_dir, int window_days, int ngram) {
            harness::BuildOptions o;
            o.window_days = window_days;
            o.ngram = ngram;
            nlohmann::json summary;
            {
                py::gil_scoped_release release;
                const auto f = harness::build_feature_sets(harness::load_input(in_dir), o);
                harness::save_feature_sets(f, sub(run_dir, "features").string());
                summary = f.summary;
            }
            return to_py(summary);
        },
        py::arg("in_dir"), py::arg("run_dir"), py::arg("window_days") = 120, py::arg("ngram") = 1);

    m.def(
        "run_experiments",
        [](const std::string &run_dir, const std::vector<std::string> &experiments, std::uint64_t seed, int jobs,
           std::size_t event_row_cap) {
            harness::RunOptions o;
            o.seed = seed;
            o.jobs = jobs;
            o.event_row_cap = event_row_cap;
            o.experiments = experiments;
            nlohmann::json out = nlohmann::json::object();
            {
                py::gil_scoped_release release;
                const auto f = harness::load_feature_sets(sub(run_dir, "features").string());
                const auto results = harness::run_experiments(f, o);
                harness::save_results(results, sub(run_dir, "results").string());
                for (const auto &r : results) {
                    out[r.name] = ml::results_to_json(r.records);
                }
            }
            return to_py(out);
        },
        py::arg("run_dir"), py::arg("experiments") = std::vector<std::string>{}, py::arg("seed") = 42,
        py::arg("jobs") = 1, py::arg("event_row_cap") = 4000,
        "Runs the evaluation grid; returns result records per experiment.");

    m.def(
        "test_hypotheses",
        [](const std::string &run_dir, double alpha) {
            const auto results = harness::load_results(sub(run_dir, "results").string());
            return to_py(harness::hypotheses_to_json(harness::test_hypotheses(results, alpha)));
        },
        py::arg("run_dir"), py::arg("alpha") = 0.05);

    m.def(
        "report",
        [](const std::string &run_dir) {
            const auto results = harness::load_results(sub(run_dir, "results").string());
            const auto f = harness::load_feature_sets(sub(run_dir, "features").string());
            std::vector<harness::HypothesisResult> h;
            try {
                h = harness::test_hypotheses(results);
            } catch (const ValidationError &) {
                // partial runs have no complete hypothesis set
            }
            const auto dir = sub(run_dir, "report");
            harness::write_report(results, h, f, dir.string());
            return dir.string();
        },
        py::arg("run_dir"));
}
