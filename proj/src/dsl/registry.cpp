#include "kdfe/dsl/registry.hpp"

#include "kdfe/core/concepts.hpp"
#include "kdfe/error.hpp"

#include <fstream>

namespace kdfe::dsl {

namespace {

ValueFormat parse_value_format(const std::string &s) {
    if (s == "text") {
        return ValueFormat::Text;
    }
    if (s == "risk_level") {
        return ValueFormat::RiskLevel;
    }
    throw ValidationError("unknown value_format '" + s + "'");
}

Registry make_builtin() {
    Registry r;
    r.add({Opcode::DaysBetween, "Days between",
           "Absolute number of days between the two most recent anchors", "anchor-pair"});
    r.add({Opcode::DaysBeforeDate, "Days before a date",
           "Number of days from the current anchor to the reference date", "scalar"});
    r.add({Opcode::HaveObservation, "Have observation (1/0)",
           "1 if the current stream holds any event, otherwise 0", "gate"});
    r.add({Opcode::FirstEvent, "First event of many", "Keeps the earliest event of the stream",
           "reducer"});
    r.add({Opcode::LastEvent, "Last event of many", "Keeps the latest event of the stream",
           "reducer"});
    r.add({Opcode::NumberOfObservations, "Number of observations",
           "Number of events in the current stream", "scalar"});

    using namespace kdfe::concepts;
    r.add(ConceptInfo{kDiagnosis, "Diagnosis", "ICD-10 diagnosis code", "selector", {3}, {},
                      ValueFormat::Text});
    r.add(ConceptInfo{kVentricularArrhythmia, "Diagnosis for ventricular arrhythmia",
                      "ICD-10 diagnosis code for ventricular arrhythmia", "selector", {3}, {},
                      ValueFormat::Text});
    r.add(ConceptInfo{kAllDiagnosis, "All diagnosis", "Every diagnosis concept", "selector",
                      {3}, {kDiagnosis, kVentricularArrhythmia}, ValueFormat::Text});
    r.add(ConceptInfo{kHospitalization, "Hospitalization", "Inpatient stay; value is days",
                      "selector", {}, {}, ValueFormat::Text});
    r.add(ConceptInfo{kJanusmedRiskLevel, "Janusmed risk level",
                      "Daily QT risk level from concurrent medications", "selector", {}, {},
                      ValueFormat::RiskLevel});
    r.add(ConceptInfo{kRouteOfAdministration, "Route of administration",
                      "Route class of a medication handling event", "selector", {}, {},
                      ValueFormat::Text});
    r.add(ConceptInfo{kDrugDispensation, "Drug dispensation", "Pharmacy dispensation (ATC code)",
                      "selector", {3, 4}, {}, ValueFormat::Text});
    r.add(ConceptInfo{kDrugAdministration, "Drug administration",
                      "Administration in a care setting (ATC code)", "selector", {3, 4}, {},
                      ValueFormat::Text});
    return r;
}

const std::vector<std::string> kDefaultLevelNames{
    "First parent level", "Second parent level", "Third parent level", "Fourth parent level"};

} // namespace

const Registry &Registry::builtin() {
    static const Registry registry = make_builtin();
    return registry;
}

void Registry::add(OperatorInfo info) { operators_[static_cast<int>(info.opcode)] = std::move(info); }

void Registry::add(ConceptInfo info) { concepts_[info.id] = std::move(info); }

const OperatorInfo *Registry::find_operator(Opcode op) const noexcept {
    auto it = operators_.find(static_cast<int>(op));
    return it == operators_.end() ? nullptr : &it->second;
}

const ConceptInfo *Registry::find_concept(int id) const noexcept {
    auto it = concepts_.find(id);
    return it == concepts_.end() ? nullptr : &it->second;
}

const ConceptInfo &Registry::concept_info(int id) const {
    if (const auto *c = find_concept(id)) {
        return *c;
    }
    throw UnknownConceptError("unknown concept id " + std::to_string(id));
}

std::string Registry::hierarchy_level_name(int level) const {
    const auto &names = level_names_.empty() ? kDefaultLevelNames : level_names_;
    if (level >= 0 && static_cast<std::size_t>(level) < names.size()) {
        return names[static_cast<std::size_t>(level)];
    }
    return "Parent level " + std::to_string(level);
}

Registry Registry::from_json(const nlohmann::json &j) {
    Registry r;
    try {
        for (const auto &o : j.at("operators")) {
            const int code = o.at("opcode").get<int>();
            const auto op = opcode_from_int(code);
            if (!op) {
                throw UnknownOpcodeError("registry lists unsupported operator " + std::to_string(code));
            }
            r.add(OperatorInfo{*op, o.at("name").get<std::string>(),
                               o.value("description", std::string{}),
                               o.value("arity", std::string{"scalar"})});
        }
        for (const auto &c : j.at("concepts")) {
            ConceptInfo info;
            info.id = c.at("id").get<int>();
            info.name = c.at("name").get<std::string>();
            info.description = c.value("description", std::string{});
            info.arity = c.value("arity", std::string{"selector"});
            info.hierarchy_prefix_lengths =
                c.value("hierarchy_prefix_lengths", std::vector<std::size_t>{});
            info.includes = c.value("includes", std::vector<int>{});
            info.value_format = parse_value_format(c.value("value_format", std::string{"text"}));
            r.add(std::move(info));
        }
        if (j.contains("hierarchy_levels")) {
            r.level_names_ = j.at("hierarchy_levels").get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string{"malformed registry: "} + e.what());
    }
    return r;
}

Registry Registry::load(const std::string &path) {
    std::ifstream in{path};
    if (!in) {
        throw ValidationError("cannot open registry '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError("registry '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

nlohmann::json Registry::to_json() const {
    nlohmann::json ops = nlohmann::json::array();
    for (const auto &[code, o] : operators_) {
        ops.push_back({{"opcode", code}, {"name", o.name}, {"description", o.description},
                       {"arity", o.arity}});
    }
    nlohmann::json cs = nlohmann::json::array();
    for (const auto &[id, c] : concepts_) {
        cs.push_back({{"id", id},
                      {"name", c.name},
                      {"description", c.description},
                      {"arity", c.arity},
                      {"hierarchy_prefix_lengths", c.hierarchy_prefix_lengths},
                      {"includes", c.includes},
                      {"value_format", c.value_format == ValueFormat::RiskLevel ? "risk_level" : "text"}});
    }
    return {{"operators", ops},
            {"concepts", cs},
            {"hierarchy_levels", level_names_.empty() ? kDefaultLevelNames : level_names_}};
}

std::string describe_feature(const FeatureExpr &e, const Registry &registry) {
    std::string out;
    for (std::size_t i = 0; i < e.terms.size(); ++i) {
        if (i) {
            out += ", then ";
        }
        if (const auto *s = std::get_if<Selector>(&e.terms[i])) {
            const auto &c = registry.concept_info(s->concept_id);
            std::string concept_text = c.name + " (" + std::to_string(c.id) + ")";
            if (s->hierarchy_level) {
                out += registry.hierarchy_level_name(*s->hierarchy_level) + " of " + concept_text +
                       " = " + s->value;
            } else if (s->value == "ALL") {
                out += "every " + concept_text + " event";
            } else {
                out += concept_text + " = " + s->value;
            }
        } else {
            const auto op = std::get<Operator>(e.terms[i]).opcode;
            const auto *info = registry.find_operator(op);
            if (!info) {
                throw UnknownOpcodeError("operator " + std::to_string(static_cast<int>(op)) +
                                         " missing from registry");
            }
            out += info->name + " (" + std::to_string(static_cast<int>(op)) + ")";
        }
    }
    return out;
}

} // namespace kdfe::dsl
