#include "kdfe/harness/harness.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"
#include "kdfe/seed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace kdfe::harness {

namespace fs = std::filesystem;

std::string_view to_string(FeatureSetId id) noexcept {
    switch (id) {
    case FeatureSetId::Event1: return "1-EVENT";
    case FeatureSetId::Event2: return "2-EVENT";
    case FeatureSetId::Akdfe1: return "1-EVENT-aKDFE";
    case FeatureSetId::Akdfe2: return "2-EVENT-aKDFE";
    case FeatureSetId::Pcd1: return "1-PCD-aKDFE";
    case FeatureSetId::Pcd2: return "2-PCD-aKDFE";
    }
    return "?";
}

const std::vector<ExperimentSpec> &experiments() {
    static const std::vector<ExperimentSpec> specs{
        {"E1-EVENT", FeatureSetId::Event1, ml::Group::Event},
        {"E2-EVENT", FeatureSetId::Event2, ml::Group::Event},
        {"E1-EVENT-aKDFE", FeatureSetId::Akdfe1, ml::Group::Event},
        {"E2-EVENT-aKDFE", FeatureSetId::Akdfe2, ml::Group::Event},
        {"E1-PCD-aKDFE", FeatureSetId::Pcd1, ml::Group::Pcd},
        {"E2-PCD-aKDFE", FeatureSetId::Pcd2, ml::Group::Pcd},
    };
    return specs;
}

const ExperimentSpec &find_experiment(std::string_view name) {
    for (const auto &s : experiments()) {
        if (s.name == name) {
            return s;
        }
    }
    throw ValidationError("unknown experiment '" + std::string{name} + "'");
}

ml::RawMatrix experiment_matrix(const FeatureSets &f, const ExperimentSpec &spec, const RunOptions &opts) {
    // one cap seed for every experiment so both tracks keep the same events
    const auto seed = derive_seed(opts.seed, "cap");
    switch (spec.feature_set) {
    case FeatureSetId::Event1:
        return cap_rows(event_matrix(f.event1, f.outcomes), opts.event_row_cap, seed, event_row_keys(f.event1));
    case FeatureSetId::Event2:
        return cap_rows(event_matrix(f.event2, f.outcomes), opts.event_row_cap, seed, event_row_keys(f.event2));
    // the aKDFE tracks differ in size; both use the larger one's threshold
    case FeatureSetId::Akdfe1:
        return cap_rows(akdfe_matrix(f.akdfe1, f.outcomes), opts.event_row_cap, seed, akdfe_row_keys(f.akdfe1),
                        akdfe_row_keys(f.akdfe2));
    case FeatureSetId::Akdfe2:
        return cap_rows(akdfe_matrix(f.akdfe2, f.outcomes), opts.event_row_cap, seed, akdfe_row_keys(f.akdfe2),
                        akdfe_row_keys(f.akdfe1));
    case FeatureSetId::Pcd1: return pcd_matrix(f.pcd1);
    case FeatureSetId::Pcd2: return pcd_matrix(f.pcd2);
    }
    throw ContractViolation("unknown feature set");
}

std::vector<ExperimentResult> run_experiments(const FeatureSets &f, const RunOptions &opts) {
    std::vector<const ExperimentSpec *> chosen;
    if (opts.experiments.empty()) {
        for (const auto &s : experiments()) {
            chosen.push_back(&s);
        }
    } else {
        for (const auto &n : opts.experiments) {
            chosen.push_back(&find_experiment(n));
        }
    }
    std::vector<ExperimentResult> out;
    for (const auto *spec : chosen) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto m = experiment_matrix(f, *spec, opts);
        auto grid = opts.grid;
        grid.jobs = opts.jobs;
        ExperimentResult r;
        r.name = spec->name;
        r.group = spec->group;
        r.rows = m.rows();
        r.columns = m.columns.size();
        r.records = ml::run_grid(m, spec->group, opts.seed, grid);
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

void save_results(const std::vector<ExperimentResult> &results, const std::string &dir) {
    const fs::path root{dir};
    fs::create_directories(root);
    nlohmann::json timing = nlohmann::json::object();
    std::ofstream all{root / "results.csv"};
    all << "experiment,";
    bool header = true;
    for (const auto &r : results) {
        nlohmann::json j{{"experiment", r.name},
                         {"group", ml::to_string(r.group)},
                         {"rows", r.rows},
                         {"columns", r.columns},
                         {"records", ml::results_to_json(r.records)}};
        std::ofstream out{root / (r.name + ".json")};
        out << j.dump(1) << '\n';
        timing[r.name] = r.seconds;

        std::ostringstream csv;
        ml::write_results_csv(csv, r.records);
        std::istringstream lines{csv.str()};
        std::string line;
        bool first = true;
        while (std::getline(lines, line)) {
            if (first) {
                first = false;
                if (header) {
                    all << line << '\n';
                    header = false;
                }
                continue;
            }
            all << r.name << ',' << line << '\n';
        }
    }
    // wall-clock lives apart so result files stay reproducible
    std::ofstream t{root / "timing.json"};
    t << timing.dump(2) << '\n';
}

std::vector<ExperimentResult> load_results(const std::string &dir) {
    std::vector<ExperimentResult> out;
    const fs::path root{dir};
    nlohmann::json timing;
    if (std::ifstream t{root / "timing.json"}; t) {
        t >> timing;
    }
    for (const auto &spec : experiments()) {
        const auto path = root / (spec.name + ".json");
        if (!fs::exists(path)) {
            continue;
        }
        std::ifstream in{path};
        nlohmann::json j;
        in >> j;
        ExperimentResult r;
        r.name = spec.name;
        r.group = ml::parse_group(j.at("group").get<std::string>());
        r.rows = j.at("rows").get<std::size_t>();
        r.columns = j.at("columns").get<std::size_t>();
        r.records = ml::results_from_json(j.at("records"));
        if (timing.contains(spec.name)) {
            r.seconds = timing[spec.name].get<double>();
        }
        out.push_back(std::move(r));
    }
    if (out.empty()) {
        throw ValidationError("no experiment results in '" + dir + "'; run experiments first");
    }
    return out;
}

namespace {

const ExperimentResult &need(const std::vector<ExperimentResult> &results, std::string_view name) {
    for (const auto &r : results) {
        if (r.name == name) {
            return r;
        }
    }
    throw ValidationError("hypothesis test needs results of experiment " + std::string{name});
}

bool usable(const ml::ResultRecord &r) { return !r.failed && std::isfinite(r.metrics.auroc); }

std::vector<double> auroc_vector(const ExperimentResult &r, std::size_t &excluded) {
    std::vector<double> v;
    excluded = 0;
    for (const auto &rec : r.records) {
        if (usable(rec)) {
            v.push_back(rec.metrics.auroc);
        } else {
            ++excluded;
        }
    }
    return v;
}

constexpr std::string_view kMaxEvent = "MAX-EVENT";

} // namespace

std::vector<double> max_event_auroc(const std::vector<ExperimentResult> &results, std::size_t *excluded) {
    std::vector<const ExperimentResult *> ev;
    for (const auto &spec : experiments()) {
        if (spec.group == ml::Group::Event) {
            ev.push_back(&need(results, spec.name));
        }
    }
    const auto n = ev.front()->records.size();
    for (const auto *r : ev) {
        if (r->records.size() != n) {
            throw ValidationError("event experiments have differing record counts");
        }
    }
    std::vector<double> out;
    std::size_t dropped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = -1;
        for (const auto *r : ev) {
            if (usable(r->records[i])) {
                best = std::max(best, r->records[i].metrics.auroc);
            }
        }
        if (best < 0) {
            ++dropped;
        } else {
            out.push_back(best);
        }
    }
    if (excluded) {
        *excluded = dropped;
    }
    return out;
}

std::vector<HypothesisResult> test_hypotheses(const std::vector<ExperimentResult> &results, double alpha) {
    static const std::vector<std::pair<std::string_view, std::pair<std::string_view, std::string_view>>> pairs{
        {"H1.1", {"E1-EVENT", "E1-EVENT-aKDFE"}},     {"H1.2", {"E2-EVENT", "E2-EVENT-aKDFE"}},
        {"H2.1", {"E1-EVENT", "E2-EVENT"}},           {"H2.2", {"E1-EVENT-aKDFE", "E2-EVENT-aKDFE"}},
        {"H2.3", {"E1-PCD-aKDFE", "E2-PCD-aKDFE"}},  {"H1.3", {"E1-PCD-aKDFE", kMaxEvent}},
        {"H1.4", {"E2-PCD-aKDFE", kMaxEvent}},
    };
    std::vector<HypothesisResult> out;
    for (const auto &[id, p] : pairs) {
        HypothesisResult h;
        h.id = id;
        h.group_a = p.first;
        h.group_b = p.second;
        h.a = auroc_vector(need(results, p.first), h.excluded_a);
        if (p.second == kMaxEvent) {
            h.b = max_event_auroc(results, &h.excluded_b);
        } else {
            h.b = auroc_vector(need(results, p.second), h.excluded_b);
        }
        if (h.a.empty() || h.b.empty()) {
            throw ValidationError(h.id + ": every cell of a compared group failed");
        }
        const std::vector<std::vector<double>> groups{h.a, h.b};
        h.anova = stats::anova_f(groups);
        h.reject = h.anova.p < alpha;
        out.push_back(std::move(h));
    }
    return out;
}

nlohmann::json hypotheses_to_json(const std::vector<HypothesisResult> &hs) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto &h : hs) {
        a.push_back({{"id", h.id},
                     {"group_a", h.group_a},
                     {"group_b", h.group_b},
                     {"n_a", h.a.size()},
                     {"n_b", h.b.size()},
                     {"excluded_a", h.excluded_a},
                     {"excluded_b", h.excluded_b},
                     {"auroc_a", h.a},
                     {"auroc_b", h.b},
                     {"f", h.anova.f},
                     {"df_between", h.anova.df_between},
                     {"df_within", h.anova.df_within},
                     {"p", h.anova.p},
                     {"reject", h.reject}});
    }
    return a;
}

void write_hypotheses_csv(std::ostream &out, const std::vector<HypothesisResult> &hs) {
    out << "id,group_a,group_b,n_a,n_b,excluded_a,excluded_b,mean_auroc_a,mean_auroc_b,f,df_between,df_within,p,"
           "decision\n";
    auto mean = [](const std::vector<double> &v) {
        double s = 0;
        for (double x : v) {
            s += x;
        }
        return s / static_cast<double>(v.size());
    };
    for (const auto &h : hs) {
        out << h.id << ',' << h.group_a << ',' << h.group_b << ',' << h.a.size() << ',' << h.b.size() << ','
            << h.excluded_a << ',' << h.excluded_b << ',' << csv::format_double(mean(h.a)) << ','
            << csv::format_double(mean(h.b)) << ',' << csv::format_double(h.anova.f) << ',' << h.anova.df_between
            << ',' << h.anova.df_within << ',' << csv::format_double(h.anova.p) << ','
            << (h.reject ? "reject" : "fail to reject") << '\n';
    }
}

} // namespace kdfe::harness
