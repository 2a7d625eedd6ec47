#include "kdfe/harness/harness.hpp"

#include "kdfe/core/concepts.hpp"
#include "kdfe/error.hpp"
#include "kdfe/csv.hpp"
#include "kdfe/dsl/feature_code.hpp"
#include "kdfe/seed.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace kdfe::harness {

namespace fs = std::filesystem;

InputData load_input(const std::string &dir) {
    const fs::path root{dir};
    InputData in;
    in.without = sort_events(ingest_event_table((root / "events_without_janusmed.csv").string(),
                                                Track::WithoutJanusmed));
    in.with = sort_events(ingest_event_table((root / "events_with_janusmed.csv").string(), Track::WithJanusmed));
    in.outcomes = read_outcomes_csv((root / "outcomes.csv").string());
    const auto risk_path = root / "risk_table.csv";
    if (fs::exists(risk_path)) {
        in.risk = risk::RiskTable::load_csv(risk_path.string());
    }
    return in;
}

namespace {

std::unordered_map<std::string_view, const OutcomeLabel *> outcome_index(const std::vector<OutcomeLabel> &o) {
    std::unordered_map<std::string_view, const OutcomeLabel *> idx;
    for (const auto &l : o) {
        if (!idx.emplace(l.patient_id, &l).second) {
            throw ValidationError("duplicate outcome for patient " + l.patient_id);
        }
    }
    return idx;
}

std::vector<akdfe::PatientRef> cohort_of(const std::vector<OutcomeLabel> &outcomes) {
    std::vector<akdfe::PatientRef> c;
    for (const auto &o : outcomes) {
        c.push_back({o.patient_id, o.index_date});
    }
    return c;
}

EventTable up_to_index(const EventTable &t, const std::vector<OutcomeLabel> &outcomes) {
    const auto idx = outcome_index(outcomes);
    std::vector<EventRecord> rows;
    for (const auto &e : t.rows()) {
        auto it = idx.find(e.patient_id);
        if (it == idx.end()) {
            throw ValidationError("events for patient " + e.patient_id + " who has no outcome label");
        }
        if (e.observation_start_date <= it->second->index_date) {
            rows.push_back(e);
        }
    }
    return sort_events(EventTable{std::move(rows), t.track()});
}

} // namespace

EventTable janusmed_step1_input(const EventTable &with, const std::vector<OutcomeLabel> &outcomes,
                                const risk::RiskTable &risk, const risk::ExposureWindow &window) {
    const auto base = up_to_index(with, outcomes);
    const auto idx = outcome_index(outcomes);
    std::vector<EventRecord> rows = base.rows();
    auto routes = risk::route_events(base);
    rows.insert(rows.end(), routes.begin(), routes.end());
    for (const auto &ps : base.by_patient()) {
        const auto &label = *idx.at(ps.patient_id);
        std::vector<EventRecord> own(ps.events.begin(), ps.events.end());
        EventTable single{std::move(own), Track::WithJanusmed, true};
        const risk::DateRange period{ps.events.front().observation_start_date, label.index_date};
        auto levels = risk::annotate_daily_risk(single, period, risk, window);
        rows.insert(rows.end(), levels.begin(), levels.end());
    }
    return sort_events(EventTable{std::move(rows), Track::WithJanusmed});
}

FeatureSets build_feature_sets(const InputData &in, const BuildOptions &opts) {
    FeatureSets out;
    out.outcomes = in.outcomes;
    auto stage = [&](const char *name, auto &&fn) {
        try {
            fn();
        } catch (const ValidationError &e) {
            throw ValidationError(std::string{name} + ": " + e.what());
        } catch (const Error &e) {
            throw Error(std::string{name} + ": " + e.what());
        }
    };
    stage("1-EVENT", [&] { out.event1 = up_to_index(in.without, in.outcomes); });
    stage("2-EVENT", [&] { out.event2 = up_to_index(in.with, in.outcomes); });
    const auto cohort = cohort_of(in.outcomes);
    akdfe::Step1Config cfg;
    cfg.limit = opts.step1_limit;
    cfg.pairwise_top = opts.pairwise_top;
    cfg.warn = opts.warn;
    auto stages_json = [](const akdfe::Step1Result &r) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto &s : r.stages) {
            a.push_back({{"sub_process", akdfe::to_string(s.kind)},
                         {"candidates", s.candidates},
                         {"survivors", s.survivors}});
        }
        return a;
    };
    stage("1-EVENT-aKDFE", [&] {
        auto r = akdfe::run_step1(out.event1, cohort, cfg);
        out.summary["1-EVENT-aKDFE"] = {{"stages", stages_json(r)},
                                         {"features", r.features.catalog.size()},
                                         {"rows", r.features.rows.size()}};
        out.akdfe1 = std::move(r.features);
    });
    stage("2-EVENT-aKDFE", [&] {
        const auto input = janusmed_step1_input(in.with, in.outcomes, in.risk, risk::ExposureWindow{opts.window_days});
        auto r = akdfe::run_step1(input, cohort, cfg);
        out.summary["2-EVENT-aKDFE"] = {{"stages", stages_json(r)},
                                         {"input_events", input.size()},
                                         {"features", r.features.catalog.size()},
                                         {"rows", r.features.rows.size()}};
        out.akdfe2 = std::move(r.features);
    });
    const akdfe::NGramConfig ng{opts.ngram};
    stage("1-PCD-aKDFE", [&] { out.pcd1 = akdfe::build_pcd(out.akdfe1, in.outcomes, ng); });
    stage("2-PCD-aKDFE", [&] { out.pcd2 = akdfe::build_pcd(out.akdfe2, in.outcomes, ng); });
    for (auto [name, m, set] : {std::tuple{"1-PCD-aKDFE", &out.pcd1, &out.akdfe1},
                                std::tuple{"2-PCD-aKDFE", &out.pcd2, &out.akdfe2}}) {
        std::size_t fc = 0, s = 0;
        for (const auto &c : m->columns) {
            (c.kind == akdfe::ColumnKind::Sum ? s : fc) += 1;
        }
        out.summary[name] = {{"rows", m->rows()},
                             {"fc_columns", fc},
                             {"s_columns", s},
                             {"ngram", opts.ngram},
                             {"patient_same_event_max", akdfe::patient_same_event_max(*set)}};
    }
    out.summary["1-EVENT"] = {{"rows", out.event1.size()}, {"features", feature_column_count(Track::WithoutJanusmed)}};
    out.summary["2-EVENT"] = {{"rows", out.event2.size()}, {"features", feature_column_count(Track::WithJanusmed)}};
    return out;
}

void save_feature_sets(const FeatureSets &f, const std::string &dir) {
    const fs::path root{dir};
    fs::create_directories(root);
    export_event_csv((root / "1-EVENT.csv").string(), f.event1);
    export_event_csv((root / "2-EVENT.csv").string(), f.event2);
    akdfe::save_feature_set((root / "1-EVENT-aKDFE").string(), f.akdfe1);
    akdfe::save_feature_set((root / "2-EVENT-aKDFE").string(), f.akdfe2);
    akdfe::save_pcd((root / "1-PCD-aKDFE").string(), f.pcd1);
    akdfe::save_pcd((root / "2-PCD-aKDFE").string(), f.pcd2);
    write_outcomes_csv((root / "outcomes.csv").string(), f.outcomes);
    std::ofstream s{root / "summary.json"};
    s << f.summary.dump(2) << '\n';
}

FeatureSets load_feature_sets(const std::string &dir) {
    const fs::path root{dir};
    if (!fs::exists(root / "summary.json")) {
        throw ValidationError("no feature sets in '" + dir + "'; run build-features first");
    }
    FeatureSets f;
    f.event1 = sort_events(ingest_event_table((root / "1-EVENT.csv").string(), Track::WithoutJanusmed));
    f.event2 = sort_events(ingest_event_table((root / "2-EVENT.csv").string(), Track::WithJanusmed));
    f.akdfe1 = akdfe::load_feature_set((root / "1-EVENT-aKDFE").string());
    f.akdfe2 = akdfe::load_feature_set((root / "2-EVENT-aKDFE").string());
    f.pcd1 = akdfe::load_pcd((root / "1-PCD-aKDFE").string());
    f.pcd2 = akdfe::load_pcd((root / "2-PCD-aKDFE").string());
    f.outcomes = read_outcomes_csv((root / "outcomes.csv").string());
    std::ifstream s{root / "summary.json"};
    s >> f.summary;
    return f;
}

const std::vector<std::string> &event_feature_names() {
    static const std::vector<std::string> names{"PATIENT_STUDY_AGE_DECADE",
                                                "EVENT_CONCEPT_TYPE_ID",
                                                "GENDER",
                                                "PATIENT_AGE_AT_OBSERVATION",
                                                "CENSOR_DATE",
                                                "DRUG_USE_INDEX_GROUP",
                                                "OBSERVATION_START_DATE",
                                                "VALUE_CHAR",
                                                "VALUE_DECIMAL",
                                                "DRUG_DOSAGE_FORM_CODE",
                                                "DRUG_SUBSTANS_ID",
                                                "ROUTE_OF_ADMINISTRATION_TYPE",
                                                "DRUG_REGISTRATION_RISK_VALUE"};
    return names;
}

std::string event_feature_name(int id) {
    const auto &n = event_feature_names();
    if (id < 1 || static_cast<std::size_t>(id) > n.size()) {
        throw ValidationError("no event feature with id " + std::to_string(id));
    }
    return n[static_cast<std::size_t>(id - 1)];
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ml::RawColumn numeric(std::string name) { return {std::move(name), false, {}, {}}; }
ml::RawColumn categorical(std::string name) { return {std::move(name), true, {}, {}}; }

double date_value(const std::optional<Date> &d) { return d ? static_cast<double>(d->days()) : kNaN; }

} // namespace

ml::RawMatrix event_matrix(const EventTable &t, const std::vector<OutcomeLabel> &outcomes) {
    const auto idx = outcome_index(outcomes);
    const bool with = t.track() == Track::WithJanusmed;
    ml::RawMatrix m;
    for (int id = 1; id <= static_cast<int>(feature_column_count(t.track())); ++id) {
        const bool cat = id == 2 || id == 3 || id == 8 || id == 10 || id == 11 || id == 12;
        m.columns.push_back(cat ? categorical(std::to_string(id)) : numeric(std::to_string(id)));
    }
    auto &c = m.columns;
    for (const auto &e : t.rows()) {
        auto it = idx.find(e.patient_id);
        if (it == idx.end()) {
            throw ValidationError("no outcome label for patient " + e.patient_id);
        }
        c[0].numeric.push_back(e.patient_study_age_decade);
        c[1].categories.push_back(std::to_string(e.concept_type_id));
        c[2].categories.emplace_back(to_string(e.gender));
        c[3].numeric.push_back(e.patient_age_at_observation);
        c[4].numeric.push_back(date_value(e.censor_date));
        c[5].numeric.push_back(e.drug_use_index_group);
        c[6].numeric.push_back(e.observation_start_date.days());
        c[7].categories.push_back(e.value_char);
        c[8].numeric.push_back(e.value_decimal.value_or(kNaN));
        c[9].categories.push_back(e.drug_dosage_form_code.value_or(""));
        c[10].categories.push_back(e.drug_substance_id.value_or(""));
        if (with) {
            c[11].categories.push_back(e.route_of_administration ? std::string{to_string(*e.route_of_administration)}
                                                                 : std::string{});
            c[12].numeric.push_back(e.drug_registration_risk_value ? *e.drug_registration_risk_value : kNaN);
        }
        m.y.push_back(static_cast<std::uint8_t>(it->second->y));
        m.groups.push_back(e.patient_id);
    }
    return m;
}

ml::RawMatrix akdfe_matrix(const akdfe::EventAkdfeFeatureSet &fs, const std::vector<OutcomeLabel> &outcomes) {
    const auto idx = outcome_index(outcomes);
    ml::RawMatrix m;
    m.columns = {categorical("2"), categorical("3"), numeric("4"), numeric("5"),
                 numeric("7"),     categorical("8"), numeric("9")};
    auto &c = m.columns;
    for (const auto &r : fs.rows) {
        auto it = idx.find(r.patient_id);
        if (it == idx.end()) {
            throw ValidationError("no outcome label for patient " + r.patient_id);
        }
        c[0].categories.push_back(std::to_string(r.feature_id));
        c[1].categories.emplace_back(to_string(r.gender));
        c[2].numeric.push_back(r.patient_age_at_observation);
        c[3].numeric.push_back(date_value(r.censor_date));
        c[4].numeric.push_back(r.observation_start_date.days());
        c[5].categories.push_back(r.value_char);
        c[6].numeric.push_back(r.value_decimal.value_or(kNaN));
        m.y.push_back(static_cast<std::uint8_t>(it->second->y));
        m.groups.push_back(r.patient_id);
    }
    return m;
}

ml::RawMatrix pcd_matrix(const akdfe::PcdMatrix &p) {
    ml::RawMatrix m;
    for (const auto &col : p.columns) {
        auto c = numeric(col.name);
        for (const auto &v : col.values) {
            c.numeric.push_back(v.value_or(kNaN));
        }
        m.columns.push_back(std::move(c));
    }
    m.y = p.y;
    m.groups = p.patients;
    return m;
}

ml::RawMatrix cap_rows(const ml::RawMatrix &m, std::size_t cap, std::uint64_t seed,
                       const std::vector<std::string> &keys, const std::vector<std::string> &basis) {
    if (!keys.empty() && keys.size() != m.rows()) {
        throw ContractViolation("row key count does not match the matrix");
    }
    auto hashes = [&](const std::vector<std::string> &ks, std::size_t n) {
        std::vector<std::uint64_t> h(n);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = derive_seed(seed, ks.empty() ? std::to_string(i) : ks[i]);
        }
        return h;
    };
    const bool use_basis = basis.size() > m.rows();
    if (cap == 0 || std::max(m.rows(), basis.size()) <= cap) {
        return m;
    }
    const auto own = hashes(keys, m.rows());
    auto ref = use_basis ? hashes(basis, basis.size()) : own;
    std::nth_element(ref.begin(), ref.begin() + static_cast<std::ptrdiff_t>(cap - 1), ref.end());
    const auto threshold = ref[cap - 1];
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < own.size(); ++i) {
        if (own[i] <= threshold) {
            keep.push_back(i);
        }
    }
    return m.subset(keep);
}

namespace {

std::vector<std::string> with_occurrence(std::vector<std::string> keys) {
    std::unordered_map<std::string, int> seen;
    for (auto &k : keys) {
        k += '#' + std::to_string(seen[k]++);
    }
    return keys;
}

} // namespace

std::vector<std::string> event_row_keys(const EventTable &t) {
    std::vector<std::string> keys;
    for (const auto &e : t.rows()) {
        keys.push_back(e.patient_id + '|' + e.observation_start_date.iso() + '|' + std::to_string(e.concept_type_id) +
                       '|' + e.value_char + '|' + e.drug_substance_id.value_or("") + '|' +
                       e.drug_dosage_form_code.value_or("") + '|' +
                       (e.value_decimal ? csv::format_double(*e.value_decimal) : std::string{}));
    }
    return with_occurrence(std::move(keys));
}

std::vector<std::string> akdfe_row_keys(const akdfe::EventAkdfeFeatureSet &fs) {
    std::unordered_map<int, std::string> codes;
    for (const auto &d : fs.catalog) {
        codes[d.feature_id] = dsl::render_feature_code(d.expr);
    }
    std::vector<std::string> keys;
    for (const auto &r : fs.rows) {
        auto it = codes.find(r.feature_id);
        keys.push_back(r.patient_id + '|' + (it == codes.end() ? std::to_string(r.feature_id) : it->second) + '|' +
                       r.observation_start_date.iso() + '|' + r.value_char + '|' +
                       (r.value_decimal ? csv::format_double(*r.value_decimal) : std::string{}));
    }
    return with_occurrence(std::move(keys));
}

} // namespace kdfe::harness
