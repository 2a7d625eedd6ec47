#include "kdfe/akdfe/step1.hpp"

#include "kdfe/csv.hpp"
#include "kdfe/dsl/evaluate.hpp"
#include "kdfe/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace kdfe::akdfe {

std::string_view to_string(DataType t) noexcept {
    switch (t) {
    case DataType::Decimal: return "decimal";
    case DataType::Character: return "character";
    case DataType::Date: return "date";
    }
    return "decimal";
}

namespace {

DataType parse_data_type(std::string_view s) {
    if (s == "character") {
        return DataType::Character;
    }
    if (s == "date") {
        return DataType::Date;
    }
    if (s == "decimal") {
        return DataType::Decimal;
    }
    throw ValidationError("unknown data type '" + std::string{s} + "'");
}

} // namespace

std::string_view to_string(Subprocess s) noexcept {
    switch (s) {
    case Subprocess::Selectors: return "SELECTORS";
    case Subprocess::Counts: return "COUNTS";
    case Subprocess::Presence: return "PRESENCE";
    case Subprocess::DaysToReference: return "DAYS_TO_REFERENCE";
    case Subprocess::PairwiseGaps: return "PAIRWISE_GAPS";
    }
    return "SELECTORS";
}

Subprocess parse_subprocess(std::string_view text) {
    for (auto s : {Subprocess::Selectors, Subprocess::Counts, Subprocess::Presence,
                   Subprocess::DaysToReference, Subprocess::PairwiseGaps}) {
        if (text == to_string(s)) {
            return s;
        }
    }
    throw ValidationError("unknown sub-process '" + std::string{text} + "'");
}

bool feature_row_less(const FeatureRow &a, const FeatureRow &b) noexcept {
    if (a.patient_id != b.patient_id) {
        return a.patient_id < b.patient_id;
    }
    if (a.observation_start_date != b.observation_start_date) {
        return a.observation_start_date < b.observation_start_date;
    }
    return a.feature_id < b.feature_id;
}

const FeatureDefinition *EventAkdfeFeatureSet::find(int feature_id) const noexcept {
    for (const auto &d : catalog) {
        if (d.feature_id == feature_id) {
            return &d;
        }
    }
    return nullptr;
}

Step1Context::Step1Context(const EventTable &sorted, std::span<const PatientRef> cohort,
                           const dsl::Registry &registry)
    : registry_{registry} {
    if (!sorted.sorted()) {
        throw ContractViolation("step one requires a sorted event table");
    }
    std::unordered_map<std::string_view, std::span<const EventRecord>> spans;
    for (const auto &ps : sorted.by_patient()) {
        spans.emplace(ps.patient_id, ps.events);
    }
    std::unordered_set<std::string_view> seen;
    for (const auto &ref : cohort) {
        if (!seen.insert(ref.patient_id).second) {
            throw ValidationError("patient " + ref.patient_id + " listed twice in the cohort");
        }
        auto it = spans.find(ref.patient_id);
        patients_.push_back({ref, it == spans.end() ? std::span<const EventRecord>{} : it->second});
    }
    for (const auto &[pid, _] : spans) {
        if (!seen.contains(pid)) {
            throw ValidationError("events for patient " + std::string{pid} +
                                  " who is not in the cohort");
        }
    }
}

namespace {

FeatureRow make_row(const Step1Context::Patient &p, int feature_id, Date date,
                    std::string value_char, std::optional<double> value) {
    const auto &first = p.events.front();
    FeatureRow r;
    r.feature_id = feature_id;
    r.patient_id = p.ref.patient_id;
    r.gender = first.gender;
    const int years =
        static_cast<int>(std::floor((date - first.observation_start_date) / 365.25));
    r.patient_age_at_observation = std::max(0, first.patient_age_at_observation + years);
    r.censor_date = first.censor_date;
    r.observation_start_date = date;
    r.value_char = std::move(value_char);
    r.value_decimal = value;
    return r;
}

bool ends_with_selector(const dsl::FeatureExpr &e) {
    return std::holds_alternative<dsl::Selector>(e.terms.back());
}

DataType data_type_of(const dsl::FeatureExpr &e) {
    return ends_with_selector(e) ? DataType::Character : DataType::Decimal;
}

std::optional<dsl::Opcode> final_opcode(const dsl::FeatureExpr &e) {
    if (const auto *op = std::get_if<dsl::Operator>(&e.terms.back())) {
        return op->opcode;
    }
    return std::nullopt;
}

// Collects the selector-shaped expressions observed in the events.
Candidates selector_candidates(const Step1Context &ctx, int &next_id,
                               const std::map<std::string, int> &existing) {
    const auto &reg = ctx.registry();
    std::map<std::string, dsl::Selector> found;
    auto add = [&](dsl::Selector s) {
        auto code = dsl::render_term(s);
        if (!existing.contains(code)) {
            found.emplace(std::move(code), std::move(s));
        }
    };
    std::map<int, std::vector<int>> groups_of;
    for (const auto &[id, info] : reg.concepts()) {
        for (int member : info.includes) {
            groups_of[member].push_back(id);
        }
    }
    for (const auto &p : ctx.patients()) {
        for (const auto &e : p.events) {
            const auto &info = reg.concept_info(e.concept_type_id);
            const bool representable =
                !e.value_char.empty() && e.value_char.find('-') == std::string::npos;
            if (representable && e.value_char != "ALL") {
                add({std::nullopt, e.concept_type_id, e.value_char});
                for (std::size_t h = 0; h < info.hierarchy_prefix_lengths.size(); ++h) {
                    const auto len = info.hierarchy_prefix_lengths[h];
                    if (len < e.value_char.size()) {
                        add({static_cast<int>(h), e.concept_type_id, e.value_char.substr(0, len)});
                    }
                }
            }
            add({std::nullopt, e.concept_type_id, "ALL"});
            if (auto it = groups_of.find(e.concept_type_id); it != groups_of.end()) {
                for (int g : it->second) {
                    add({std::nullopt, g, "ALL"});
                }
            }
        }
    }

    Candidates out;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<dsl::SelectorMatcher> matchers;
    for (auto &[code, sel] : found) {
        FeatureDefinition def;
        def.feature_id = next_id++;
        def.expr = dsl::make_expr({sel});
        def.generation = 1;
        def.elementary_count = 1;
        matchers.emplace_back(sel, reg);
        out.defs.push_back(std::move(def));
        out.rows.emplace_back();
    }
    for (const auto &p : ctx.patients()) {
        for (const auto &e : p.events) {
            for (std::size_t i = 0; i < matchers.size(); ++i) {
                if (matchers[i].matches(e)) {
                    out.rows[i].push_back(make_row(p, out.defs[i].feature_id,
                                                   e.observation_start_date, e.value_char,
                                                   e.value_decimal.value_or(1.0)));
                }
            }
        }
    }
    return out;
}

void materialize(const Step1Context &ctx, Candidates &c) {
    c.rows.assign(c.defs.size(), {});
    for (std::size_t i = 0; i < c.defs.size(); ++i) {
        const auto &def = c.defs[i];
        const auto final_op = final_opcode(def.expr);
        const bool zero_is_absence = final_op && (*final_op == dsl::Opcode::HaveObservation ||
                                                  *final_op == dsl::Opcode::NumberOfObservations);
        for (const auto &p : ctx.patients()) {
            if (p.events.empty()) {
                continue;
            }
            auto ev = dsl::evaluate_detailed(def.expr, p.events, p.ref.index_date, ctx.registry());
            if (!ev.value || (zero_is_absence && *ev.value == 0.0)) {
                continue;
            }
            c.rows[i].push_back(make_row(p, def.feature_id, ev.anchor.value_or(p.ref.index_date),
                                         std::string{}, *ev.value));
        }
    }
}

} // namespace

Candidates run_subprocess(const Step1Context &ctx, std::span<const FeatureDefinition> input,
                          Subprocess kind, int generation, int &next_id,
                          const std::map<std::string, int> &existing, std::size_t pairwise_top) {
    if (kind == Subprocess::Selectors) {
        return selector_candidates(ctx, next_id, existing);
    }

    // Distinct selector bases of the input, first occurrence wins.
    std::vector<std::pair<dsl::FeatureExpr, int>> bases;
    std::set<std::string> seen;
    for (const auto &def : input) {
        auto base = def.expr.leading_selectors();
        if (seen.insert(dsl::render_feature_code(base)).second) {
            bases.emplace_back(std::move(base), def.feature_id);
        }
    }

    Candidates out;
    std::set<std::string> emitted;
    auto push = [&](std::vector<dsl::Term> terms, std::vector<int> parents) {
        auto expr = dsl::make_expr(std::move(terms));
        const auto code = dsl::render_feature_code(expr);
        if (existing.contains(code) || !emitted.insert(code).second) {
            return;
        }
        FeatureDefinition def;
        def.feature_id = next_id++;
        def.elementary_count = static_cast<int>(expr.selector_count());
        def.expr = std::move(expr);
        def.generation = generation;
        def.parent_ids = std::move(parents);
        out.defs.push_back(std::move(def));
    };
    using dsl::Opcode;
    using dsl::Operator;
    switch (kind) {
    case Subprocess::Counts:
    case Subprocess::Presence:
    case Subprocess::DaysToReference:
        for (const auto &[base, parent] : bases) {
            auto terms = base.terms;
            if (kind == Subprocess::Counts) {
                terms.emplace_back(Operator{Opcode::NumberOfObservations});
            } else if (kind == Subprocess::Presence) {
                terms.emplace_back(Operator{Opcode::HaveObservation});
            } else {
                terms.emplace_back(Operator{Opcode::LastEvent});
                terms.emplace_back(Operator{Opcode::DaysBeforeDate});
            }
            push(std::move(terms), {parent});
        }
        break;
    case Subprocess::PairwiseGaps: {
        const auto k = std::min(pairwise_top, bases.size());
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) {
                if (a == b) {
                    continue;
                }
                auto terms = bases[a].first.terms;
                terms.emplace_back(Operator{Opcode::LastEvent});
                terms.insert(terms.end(), bases[b].first.terms.begin(), bases[b].first.terms.end());
                terms.emplace_back(Operator{Opcode::FirstEvent});
                terms.emplace_back(Operator{Opcode::DaysBetween});
                push(std::move(terms), {bases[a].second, bases[b].second});
            }
        }
        break;
    }
    case Subprocess::Selectors: break;
    }
    materialize(ctx, out);
    return out;
}

FeatureMetadata extract_metadata(int feature_id, std::span<const FeatureRow> rows,
                                 std::size_t cohort_size, DataType data_type) {
    FeatureMetadata m;
    m.feature_id = feature_id;
    m.data_type = data_type;
    std::vector<double> values;
    std::unordered_set<std::string_view> patients;
    for (const auto &r : rows) {
        if (r.value_decimal) {
            values.push_back(*r.value_decimal);
        }
        patients.insert(r.patient_id);
    }
    m.coverage = cohort_size == 0 ? 0.0
                                  : static_cast<double>(patients.size()) / static_cast<double>(cohort_size);
    if (!values.empty()) {
        const double n = static_cast<double>(values.size());
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
        double ss = 0;
        for (double v : values) {
            ss += (v - mean) * (v - mean);
        }
        m.value_mean = mean;
        m.value_std = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
    return m;
}

std::vector<std::size_t> coverage_rank_select(std::span<const FeatureDefinition> candidates,
                                              const std::map<int, FeatureMetadata> &metadata,
                                              std::size_t limit) {
    std::vector<double> coverage(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto it = metadata.find(candidates[i].feature_id);
        if (it == metadata.end()) {
            throw ContractViolation("no metadata for candidate feature " +
                                    std::to_string(candidates[i].feature_id));
        }
        coverage[i] = it->second.coverage;
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return coverage[a] > coverage[b]; });
    if (order.size() <= limit) {
        return order;
    }
    if (limit == 0) {
        return {};
    }
    const double cutoff = coverage[order[limit - 1]];
    std::size_t keep = limit;
    while (keep < order.size() && coverage[order[keep]] == cutoff) {
        ++keep;
    }
    order.resize(keep);
    return order;
}

Step1Result run_step1(const EventTable &sorted, std::span<const PatientRef> cohort,
                      const Step1Config &config, const dsl::Registry &registry) {
    if (config.stages.empty() || config.stages.front() != Subprocess::Selectors) {
        throw ValidationError("the first step-one sub-process must be SELECTORS");
    }
    if (std::count(config.stages.begin(), config.stages.end(), Subprocess::Selectors) != 1) {
        throw ValidationError("SELECTORS may appear only once in the sub-process list");
    }
    auto warn = config.warn ? config.warn
                            : [](const std::string &m) { std::cerr << "warning: " << m << '\n'; };

    Step1Context ctx{sorted, cohort, registry};
    Step1Result result;
    auto &fs = result.features;
    fs.track = sorted.track();
    std::map<std::string, int> existing;
    std::vector<FeatureDefinition> survivors;
    int next_id = 1;
    for (std::size_t stage = 0; stage < config.stages.size(); ++stage) {
        const auto kind = config.stages[stage];
        auto cand = run_subprocess(ctx, survivors, kind, static_cast<int>(stage) + 1, next_id,
                                   existing, config.pairwise_top);
        std::map<int, FeatureMetadata> meta;
        for (std::size_t i = 0; i < cand.defs.size(); ++i) {
            const auto &d = cand.defs[i];
            meta[d.feature_id] =
                extract_metadata(d.feature_id, cand.rows[i], ctx.cohort_size(), data_type_of(d.expr));
        }
        auto keep = coverage_rank_select(cand.defs, meta, config.limit);
        // Drop candidates nobody has.
        std::erase_if(keep, [&](std::size_t i) { return cand.rows[i].empty(); });
        result.stages.push_back({kind, cand.defs.size(), keep.size()});
        if (keep.empty()) {
            warn("sub-process " + std::string{to_string(kind)} +
                 " produced no surviving features; continuing with the previous survivors");
            continue;
        }
        std::vector<FeatureDefinition> next;
        for (auto i : keep) {
            auto &d = cand.defs[i];
            existing.emplace(dsl::render_feature_code(d.expr), d.feature_id);
            fs.metadata[d.feature_id] = meta[d.feature_id];
            fs.rows.insert(fs.rows.end(), cand.rows[i].begin(), cand.rows[i].end());
            fs.catalog.push_back(d);
            next.push_back(d);
        }
        survivors = std::move(next);
    }
    std::sort(fs.catalog.begin(), fs.catalog.end(),
              [](const auto &a, const auto &b) { return a.feature_id < b.feature_id; });
    std::stable_sort(fs.rows.begin(), fs.rows.end(), feature_row_less);
    return result;
}

nlohmann::json catalog_to_json(const EventAkdfeFeatureSet &fs) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto &d : fs.catalog) {
        nlohmann::json f{{"feature_id", d.feature_id},
                         {"code", dsl::render_feature_code(d.expr)},
                         {"generation", d.generation},
                         {"parents", d.parent_ids},
                         {"elementary_count", d.elementary_count}};
        if (auto it = fs.metadata.find(d.feature_id); it != fs.metadata.end()) {
            const auto &m = it->second;
            f["metadata"] = {{"coverage", m.coverage},
                             {"mean", m.value_mean ? nlohmann::json(*m.value_mean) : nlohmann::json()},
                             {"std", m.value_std ? nlohmann::json(*m.value_std) : nlohmann::json()},
                             {"data_type", to_string(m.data_type)}};
        }
        features.push_back(std::move(f));
    }
    return {{"track", to_string(fs.track)}, {"features", std::move(features)}};
}

void catalog_from_json(const nlohmann::json &j, EventAkdfeFeatureSet &fs) {
    try {
        fs.track = parse_track(j.at("track").get<std::string>());
        fs.catalog.clear();
        fs.metadata.clear();
        for (const auto &f : j.at("features")) {
            FeatureDefinition d;
            d.feature_id = f.at("feature_id").get<int>();
            d.expr = dsl::parse_feature_code(f.at("code").get<std::string>());
            d.generation = f.at("generation").get<int>();
            d.parent_ids = f.at("parents").get<std::vector<int>>();
            d.elementary_count = f.at("elementary_count").get<int>();
            if (f.contains("metadata")) {
                const auto &m = f.at("metadata");
                FeatureMetadata md;
                md.feature_id = d.feature_id;
                md.coverage = m.at("coverage").get<double>();
                if (!m.at("mean").is_null()) {
                    md.value_mean = m.at("mean").get<double>();
                }
                if (!m.at("std").is_null()) {
                    md.value_std = m.at("std").get<double>();
                }
                md.data_type = parse_data_type(m.at("data_type").get<std::string>());
                fs.metadata[d.feature_id] = md;
            }
            fs.catalog.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string{"malformed feature catalog: "} + e.what());
    }
}

namespace {
const csv::Row kRowHeader{"FEATURE_ID",  "PATIENT_ID",  "GENDER",      "PATIENT_AGE_AT_OBSERVATION",
                          "CENSOR_DATE", "OBSERVATION_START_DATE", "VALUE_CHAR", "VALUE_DECIMAL"};
}

void write_feature_rows_csv(const std::string &path, const EventAkdfeFeatureSet &fs) {
    std::ofstream out{path, std::ios::binary};
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    csv::write_row(out, kRowHeader);
    for (const auto &r : fs.rows) {
        csv::write_row(out, {std::to_string(r.feature_id), r.patient_id,
                             std::string{to_string(r.gender)},
                             std::to_string(r.patient_age_at_observation),
                             r.censor_date ? r.censor_date->iso() : std::string{},
                             r.observation_start_date.iso(), r.value_char,
                             csv::format_optional(r.value_decimal)});
    }
}

std::vector<FeatureRow> read_feature_rows_csv(const std::string &path) {
    auto t = csv::read_file(path);
    if (t.header != kRowHeader) {
        throw SchemaError(path + ": unexpected feature-set header");
    }
    std::vector<FeatureRow> rows;
    rows.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto &c = t.rows[i];
        if (c.size() != kRowHeader.size()) {
            throw RowError(t.lines[i], "wrong field count");
        }
        try {
            FeatureRow r;
            r.feature_id = static_cast<int>(csv::parse_int(c[0]));
            r.patient_id = c[1];
            r.gender = parse_gender(c[2]);
            r.patient_age_at_observation = static_cast<int>(csv::parse_int(c[3]));
            if (!c[4].empty()) {
                r.censor_date = Date::parse(c[4]);
            }
            r.observation_start_date = Date::parse(c[5]);
            r.value_char = c[6];
            if (!c[7].empty()) {
                r.value_decimal = csv::parse_double(c[7]);
            }
            rows.push_back(std::move(r));
        } catch (const ValueError &e) {
            throw RowError(t.lines[i], e.what());
        }
    }
    return rows;
}

void save_feature_set(const std::string &stem, const EventAkdfeFeatureSet &fs) {
    write_feature_rows_csv(stem + ".csv", fs);
    std::ofstream out{stem + ".catalog.json"};
    if (!out) {
        throw Error("cannot write '" + stem + ".catalog.json'");
    }
    out << catalog_to_json(fs).dump(1) << '\n';
}

EventAkdfeFeatureSet load_feature_set(const std::string &stem) {
    EventAkdfeFeatureSet fs;
    std::ifstream in{stem + ".catalog.json"};
    if (!in) {
        throw ValidationError("cannot open '" + stem + ".catalog.json'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(stem + ".catalog.json: " + e.what());
    }
    catalog_from_json(j, fs);
    fs.rows = read_feature_rows_csv(stem + ".csv");
    for (const auto &r : fs.rows) {
        if (!fs.find(r.feature_id)) {
            throw ValidationError("feature id " + std::to_string(r.feature_id) +
                                  " is missing from the catalog");
        }
    }
    return fs;
}

} // namespace kdfe::akdfe
