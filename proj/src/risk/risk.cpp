#include "kdfe/risk/risk.hpp"

#include "kdfe/core/concepts.hpp"
#include "kdfe/csv.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <fstream>

namespace kdfe::risk {

std::string to_string(RiskLevel level) {
    return "RL_" + std::to_string(static_cast<int>(level));
}

RiskLevel parse_risk_level(std::string_view text) {
    auto bad = [&] { return ValueError("unparseable risk level '" + std::string{text} + "'"); };
    if (text.size() < 4 || text.substr(0, 3) != "RL_") {
        throw bad();
    }
    auto rest = text.substr(3);
    const auto comma = rest.find(',');
    auto integral = rest.substr(0, comma);
    if (comma != std::string_view::npos) {
        auto frac = rest.substr(comma + 1);
        if (frac.empty() ||
            !std::all_of(frac.begin(), frac.end(), [](char c) { return c == '0'; })) {
            throw bad();
        }
    }
    if (integral.size() != 1 || integral[0] < '0' || integral[0] > '3') {
        throw bad();
    }
    return static_cast<RiskLevel>(integral[0] - '0');
}

RiskTable::RiskTable(std::map<std::string, int> values) : values_{std::move(values)} {
    for (const auto &[id, v] : values_) {
        if (v < 0) {
            throw ValueError("negative risk value for substance " + id);
        }
    }
}

int RiskTable::risk_of(const std::string &substance_id) const noexcept {
    auto it = values_.find(substance_id);
    return it == values_.end() ? 0 : it->second;
}

RiskTable RiskTable::load_csv(const std::string &path) {
    auto table = csv::read_file(path);
    if (table.header != csv::Row{"substance_id", "risk_value"}) {
        throw SchemaError(path + ": risk table header must be substance_id,risk_value");
    }
    std::map<std::string, int> values;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto &r = table.rows[i];
        if (r.size() != 2 || r[0].empty()) {
            throw RowError(table.lines[i], "malformed risk table row");
        }
        try {
            values[r[0]] = static_cast<int>(csv::parse_int(r[1]));
        } catch (const ValueError &e) {
            throw RowError(table.lines[i], e.what());
        }
    }
    return RiskTable{std::move(values)};
}

void RiskTable::save_csv(const std::string &path) const {
    std::ofstream out{path, std::ios::binary};
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    csv::write_row(out, {"substance_id", "risk_value"});
    for (const auto &[id, v] : values_) {
        csv::write_row(out, {id, std::to_string(v)});
    }
}

ExposureWindow::ExposureWindow(int days) : length_days{days} {
    if (days <= 0) {
        throw ValueError("exposure window must be positive, got " + std::to_string(days));
    }
}

RiskLevel BandPolicy::band(int total) const noexcept {
    int level = 0;
    for (int t : thresholds) {
        if (total >= t) {
            ++level;
        }
    }
    return static_cast<RiskLevel>(level);
}

namespace {

bool counts_toward_exposure(const EventRecord &e) {
    return concepts::is_medication_handling(e.concept_type_id) && e.drug_substance_id &&
           e.route_of_administration.value_or(Route::MISSING) != Route::TOPICAL;
}

} // namespace

std::set<std::string> concurrent_medications(std::span<const EventRecord> events, Date day,
                                             const ExposureWindow &window) {
    std::set<std::string> out;
    const Date from = day - window.length_days;
    for (const auto &e : events) {
        if (e.observation_start_date < from || e.observation_start_date > day) {
            continue;
        }
        if (counts_toward_exposure(e)) {
            out.insert(*e.drug_substance_id);
        }
    }
    return out;
}

RiskLevel aggregate_risk(const std::set<std::string> &substances, const RiskTable &table,
                         const BandPolicy &policy) {
    int total = 0;
    for (const auto &s : substances) {
        total += table.risk_of(s);
    }
    return policy.band(total);
}

std::vector<RiskRun> daily_risk_runs(std::span<const EventRecord> patient_events,
                                     DateRange period, const RiskTable &table,
                                     const ExposureWindow &window, const BandPolicy &policy) {
    if (period.last < period.first) {
        throw ValueError("empty risk period " + period.first.iso() + " .. " + period.last.iso());
    }
    std::vector<EventRecord> meds;
    for (const auto &e : patient_events) {
        if (counts_toward_exposure(e)) {
            meds.push_back(e);
        }
    }
    // The level can only change on a dispensation day or the day it leaves
    // the window, so evaluating those days reproduces the daily series.
    std::vector<Date> change_points{period.first};
    for (const auto &e : meds) {
        for (Date d : {e.observation_start_date, e.observation_start_date + window.length_days + 1}) {
            if (d > period.first && d <= period.last) {
                change_points.push_back(d);
            }
        }
    }
    std::sort(change_points.begin(), change_points.end());
    change_points.erase(std::unique(change_points.begin(), change_points.end()),
                        change_points.end());

    std::vector<RiskRun> runs;
    for (Date d : change_points) {
        const auto level = aggregate_risk(concurrent_medications(meds, d, window), table, policy);
        if (runs.empty() || runs.back().level != level) {
            runs.push_back({d, level});
        }
    }
    return runs;
}

std::vector<EventRecord> annotate_daily_risk(const EventTable &t, DateRange period,
                                             const RiskTable &table, const ExposureWindow &window,
                                             const BandPolicy &policy) {
    if (t.track() != Track::WithJanusmed) {
        throw ValueError("risk annotation requires a WITH_JANUSMED event table");
    }
    if (period.last < period.first) {
        throw ValueError("empty risk period " + period.first.iso() + " .. " + period.last.iso());
    }
    std::vector<EventRecord> out;
    for (const auto &[pid, events] : t.by_patient()) {
        const auto &first = events.front();
        for (const auto &run : daily_risk_runs(events, period, table, window, policy)) {
            EventRecord r;
            r.patient_id = first.patient_id;
            r.concept_type_id = concepts::kJanusmedRiskLevel;
            r.observation_start_date = run.start;
            r.value_char = to_string(run.level);
            r.value_decimal = static_cast<double>(run.level);
            r.gender = first.gender;
            r.patient_study_age_decade = first.patient_study_age_decade;
            const int years = static_cast<int>(
                std::floor((run.start - first.observation_start_date) / 365.25));
            r.patient_age_at_observation = std::max(0, first.patient_age_at_observation + years);
            r.censor_date = first.censor_date;
            r.drug_use_index_group = first.drug_use_index_group;
            r.route_of_administration = Route::MISSING;
            out.push_back(std::move(r));
        }
    }
    return out;
}

std::string route_class(Route route) {
    switch (route) {
    case Route::OLS:
    case Route::OSD: return "DF_JM_1";
    case Route::PAR: return "DF_JM_2";
    case Route::REC: return "DF_JM_3";
    case Route::TOPICAL: return "DF_JM_4";
    case Route::MISSING: break;
    }
    return {};
}

std::vector<EventRecord> route_events(const EventTable &t) {
    if (t.track() != Track::WithJanusmed) {
        throw ValueError("route events require a WITH_JANUSMED event table");
    }
    std::vector<EventRecord> out;
    for (const auto &e : t.rows()) {
        if (!concepts::is_medication_handling(e.concept_type_id)) {
            continue;
        }
        const auto cls = route_class(e.route_of_administration.value_or(Route::MISSING));
        if (cls.empty()) {
            continue;
        }
        EventRecord r = e;
        r.concept_type_id = concepts::kRouteOfAdministration;
        r.value_char = cls;
        r.value_decimal.reset();
        r.drug_registration_risk_value.reset();
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace kdfe::risk
