#pragma once

#include "kdfe/core/events.hpp"
#include "kdfe/core/outcomes.hpp"
#include "kdfe/risk/risk.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace kdfe::synth {

struct SynthConfig {
    int n_patients{2000};
    int study_years{10};
    Date study_start{Date::from_ymd(2010, 1, 1)};
    double outcome_prevalence{0.2};
    /// Target point-biserial correlation between "has a prior I49-family
    /// diagnosis" and y.
    double prior_history_signal{0.58};
    /// Share of negatives carrying a prior I49-family diagnosis.
    double background_i49_rate{0.02};
    /// Mean number of extra cardiac diagnoses / admissions in the year before
    /// the index date for positives, in units of four events.
    double history_burden_effect{2.5};
    /// Log-weight per risk point when positives' drugs are drawn.
    double risk_score_effect{0.0};
    double events_per_patient_mean{50};
    int events_per_patient_min{5};
    double female_fraction{0.5};
    std::uint64_t seed{42};

    /// Throws ValidationError on out-of-range fields.
    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static SynthConfig from_json(const nlohmann::json &j);
    static SynthConfig load(const std::string &path);

    /// All signal knobs at zero.
    SynthConfig null_model() const;
};

struct Substance {
    std::string id;
    std::string atc;
    std::vector<std::string> forms;
    int risk{0};
};
const std::vector<Substance> &substance_vocabulary();
risk::RiskTable default_risk_table();

struct PatientInfo {
    std::string patient_id;
    Gender gender{Gender::F};
    int age_at_index{0};
    Date index_date;
    int y{0};
    bool prior_i49{false};
    std::vector<std::string> substances;
};

std::vector<PatientInfo> generate_cohort(const SynthConfig &cfg);

/// P(indicator | y = 1) that gives point-biserial `target` at prevalence p
/// when P(indicator | y = 0) = b. Throws ValidationError with the feasible
/// range when the target cannot be reached.
double solve_positive_rate(double target, double prevalence, double b);
double point_biserial(double a, double prevalence, double b);

struct SynthData {
    SynthConfig config;
    std::vector<PatientInfo> roster;
    /// WITH_JANUSMED track, sorted.
    EventTable events;
    std::vector<OutcomeLabel> outcomes;
    risk::RiskTable risk_table;
};

SynthData generate_events(const std::vector<PatientInfo> &roster, const SynthConfig &cfg);
SynthData generate(const SynthConfig &cfg);

/// events_without_janusmed.csv, events_with_janusmed.csv, outcomes.csv,
/// risk_table.csv and config.json.
void write_synth(const SynthData &d, const std::string &dir);

struct MatchKeys {
    int index_days{180};
    int drug_count{2};
};
struct MatchResult {
    std::vector<std::pair<std::string, std::string>> pairs; // case, control
    std::vector<std::string> unmatched;
};
/// Greedy 1:1 matching: gender and age decade exact, index date and drug
/// count within tolerance, nearest by (index-day distance, drug-count
/// distance, pool order).
MatchResult match_controls(const std::vector<PatientInfo> &cases, const std::vector<PatientInfo> &pool,
                           const MatchKeys &keys = {});

} // namespace kdfe::synth
