#include "kdfe/synth/synth.hpp"

#include "kdfe/core/concepts.hpp"
#include "kdfe/error.hpp"
#include "kdfe/random.hpp"
#include "kdfe/seed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace kdfe::synth {

void SynthConfig::validate() const {
    if (n_patients < 20) {
        throw ValidationError("n_patients must be at least 20");
    }
    if (!(outcome_prevalence > 0 && outcome_prevalence < 1)) {
        throw ValidationError("outcome_prevalence must lie in (0, 1)");
    }
    if (study_years < 4) {
        throw ValidationError("study_years must be at least 4 (two years of history plus follow-up)");
    }
    if (!(background_i49_rate >= 0 && background_i49_rate < 1)) {
        throw ValidationError("background_i49_rate must lie in [0, 1)");
    }
    if (history_burden_effect < 0) {
        throw ValidationError("history_burden_effect must be non-negative");
    }
    if (events_per_patient_min < 1 || events_per_patient_mean < events_per_patient_min) {
        throw ValidationError("need 1 <= events_per_patient_min <= events_per_patient_mean");
    }
    if (!(female_fraction >= 0 && female_fraction <= 1)) {
        throw ValidationError("female_fraction must lie in [0, 1]");
    }
    if (std::fabs(prior_history_signal) >= 1) {
        throw ValidationError("prior_history_signal must lie in (-1, 1)");
    }
}

nlohmann::json SynthConfig::to_json() const {
    return {{"n_patients", n_patients},
            {"study_years", study_years},
            {"study_start", study_start.iso()},
            {"outcome_prevalence", outcome_prevalence},
            {"prior_history_signal", prior_history_signal},
            {"background_i49_rate", background_i49_rate},
            {"history_burden_effect", history_burden_effect},
            {"risk_score_effect", risk_score_effect},
            {"events_per_patient_mean", events_per_patient_mean},
            {"events_per_patient_min", events_per_patient_min},
            {"female_fraction", female_fraction},
            {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json &j) {
    if (!j.is_object()) {
        throw ValidationError("synth config must be a JSON object");
    }
    SynthConfig c;
    try {
        for (const auto &[key, v] : j.items()) {
            if (key == "n_patients") {
                c.n_patients = v.get<int>();
            } else if (key == "study_years") {
                c.study_years = v.get<int>();
            } else if (key == "study_start") {
                c.study_start = Date::parse(v.get<std::string>());
            } else if (key == "outcome_prevalence") {
                c.outcome_prevalence = v.get<double>();
            } else if (key == "prior_history_signal") {
                c.prior_history_signal = v.get<double>();
            } else if (key == "background_i49_rate") {
                c.background_i49_rate = v.get<double>();
            } else if (key == "history_burden_effect") {
                c.history_burden_effect = v.get<double>();
            } else if (key == "risk_score_effect") {
                c.risk_score_effect = v.get<double>();
            } else if (key == "events_per_patient_mean") {
                c.events_per_patient_mean = v.get<double>();
            } else if (key == "events_per_patient_min") {
                c.events_per_patient_min = v.get<int>();
            } else if (key == "female_fraction") {
                c.female_fraction = v.get<double>();
            } else if (key == "seed") {
                c.seed = v.get<std::uint64_t>();
            } else {
                throw ValidationError("unknown synth config key '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string{"bad synth config value: "} + e.what());
    } catch (const ValueError &e) {
        throw ValidationError(std::string{"bad synth config value: "} + e.what());
    }
    c.validate();
    return c;
}

SynthConfig SynthConfig::load(const std::string &path) {
    std::ifstream in{path};
    if (!in) {
        throw ValidationError("cannot open '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(path + ": " + e.what());
    }
    return from_json(j);
}

SynthConfig SynthConfig::null_model() const {
    SynthConfig c = *this;
    c.prior_history_signal = 0;
    c.history_burden_effect = 0;
    c.risk_score_effect = 0;
    return c;
}

const std::vector<Substance> &substance_vocabulary() {
    static const std::vector<Substance> vocab = [] {
        struct Row {
            const char *atc;
            std::vector<std::string> forms;
            int risk;
        };
        const std::vector<Row> rows{
            {"C07AB02", {"TAB"}, 0},         {"C07AB07", {"TAB"}, 0},         {"C07AA07", {"TAB"}, 3},
            {"C09AA05", {"TAB"}, 0},         {"C09CA01", {"TAB"}, 0},         {"C08CA01", {"TAB"}, 0},
            {"C10AA05", {"TAB"}, 0},         {"C10AA01", {"TAB"}, 0},         {"C03CA01", {"TAB", "INJ"}, 0},
            {"C03DA01", {"TAB"}, 0},         {"C01BD01", {"TAB", "INJ"}, 3},  {"C01AA05", {"TAB"}, 0},
            {"B01AC06", {"TAB"}, 0},         {"B01AF01", {"TAB"}, 0},         {"B01AB05", {"INJ"}, 0},
            {"A02BC01", {"TAB"}, 0},         {"A02BC05", {"TAB", "INJ"}, 0},  {"A10BA02", {"TAB"}, 0},
            {"A10AE04", {"INJ"}, 0},         {"A04AA01", {"TAB", "INJ"}, 2},  {"A03FA03", {"TAB"}, 2},
            {"A06AD11", {"SOL"}, 0},         {"N02BE01", {"TAB", "SUPP"}, 0}, {"N02AA01", {"TAB", "INJ"}, 0},
            {"N07BC02", {"SOL"}, 3},         {"N06AB04", {"TAB"}, 2},         {"N06AB10", {"TAB"}, 2},
            {"N06AB06", {"TAB"}, 0},         {"N06AX11", {"TAB"}, 1},         {"N05AH04", {"TAB"}, 1},
            {"N05AD01", {"TAB", "INJ"}, 3},  {"N05BA04", {"TAB"}, 0},         {"N05CF01", {"TAB"}, 0},
            {"J01FA10", {"TAB", "SOL"}, 2},  {"J01FA09", {"TAB"}, 2},         {"J01CA04", {"TAB", "SOL"}, 0},
            {"J01MA02", {"TAB", "INJ"}, 2},  {"J01XE01", {"TAB"}, 0},         {"J02AC01", {"TAB", "INJ"}, 1},
            {"R03AC02", {"SOL"}, 0},         {"R06AE07", {"TAB"}, 0},         {"R05DA04", {"SOL"}, 1},
            {"H03AA01", {"TAB"}, 0},         {"H02AB06", {"TAB"}, 0},         {"M01AE01", {"TAB", "CRM"}, 0},
            {"D07AC01", {"CRM"}, 0},         {"D01AC01", {"CRM"}, 0},         {"G04CA02", {"TAB"}, 0},
            {"L04AX03", {"TAB"}, 0},         {"P01BA02", {"TAB"}, 1},
        };
        std::vector<Substance> v;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "SUB%04zu", i + 1);
            v.push_back({id, rows[i].atc, rows[i].forms, rows[i].risk});
        }
        return v;
    }();
    return vocab;
}

risk::RiskTable default_risk_table() {
    std::map<std::string, int> values;
    for (const auto &s : substance_vocabulary()) {
        values[s.id] = s.risk;
    }
    return risk::RiskTable{std::move(values)};
}

double point_biserial(double a, double prevalence, double b) {
    const double p = prevalence;
    const double q = p * a + (1 - p) * b;
    if (q <= 0 || q >= 1) {
        return 0.0;
    }
    return (a - b) * std::sqrt(p * (1 - p)) / std::sqrt(q * (1 - q));
}

double solve_positive_rate(double target, double prevalence, double b) {
    if (target == 0) {
        return b;
    }
    double lo = target > 0 ? b : 0.0;
    double hi = target > 0 ? 1.0 : b;
    const double reach = point_biserial(target > 0 ? hi : lo, prevalence, b);
    if ((target > 0 && reach < target) || (target < 0 && reach > target)) {
        char msg[200];
        std::snprintf(msg, sizeof msg,
                      "prior_history_signal %.4f is unreachable at prevalence %.4f and background rate %.4f; "
                      "feasible %s is %.4f",
                      target, prevalence, b, target > 0 ? "maximum" : "minimum", reach);
        throw ValidationError(msg);
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = (lo + hi) / 2;
        if (point_biserial(mid, prevalence, b) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return (lo + hi) / 2;
}

namespace {

std::size_t poisson(Rng &rng, double lambda) {
    std::size_t total = 0;
    while (lambda > 0) {
        const double chunk = std::min(lambda, 20.0);
        lambda -= chunk;
        const double limit = std::exp(-chunk);
        double prod = rng.uniform();
        while (prod > limit) {
            ++total;
            prod *= rng.uniform();
        }
    }
    return total;
}

const std::vector<std::string> kGeneralDiagnoses{
    "E119", "E109", "E785", "E039", "E669", "I10",  "I109", "I259", "I251", "I480", "I481", "I489",
    "I500", "I509", "I110", "I639", "I739", "J449", "J441", "J459", "J189", "J069", "N183", "N185",
    "N390", "F329", "F411", "F100", "G309", "G409", "G473", "K219", "K297", "K590", "K800", "M545",
    "M179", "M069", "M819", "R074", "R002", "R55",  "R060", "R509"};

const std::vector<std::string> kCardiacBurden{"I480", "I481", "I489", "I500", "I509", "I259",
                                              "I251", "I110", "I420", "I447", "I458", "R002"};
const std::vector<std::string> kI49Codes{"I490", "I491", "I493", "I498", "I499"};
const std::vector<std::string> kWards{"MED", "SURG", "CARD", "GER", "EMER"};

Route route_of_form(const std::string &form) {
    if (form == "TAB") {
        return Route::OSD;
    }
    if (form == "SOL") {
        return Route::OLS;
    }
    if (form == "INJ") {
        return Route::PAR;
    }
    if (form == "SUPP") {
        return Route::REC;
    }
    return Route::TOPICAL;
}

int drug_use_index_group(std::size_t distinct) {
    if (distinct <= 2) {
        return 1;
    }
    if (distinct <= 4) {
        return 2;
    }
    if (distinct <= 7) {
        return 3;
    }
    if (distinct <= 10) {
        return 4;
    }
    return 5;
}

std::string patient_id(int i) {
    char id[16];
    std::snprintf(id, sizeof id, "P%05d", i + 1);
    return id;
}

} // namespace

std::vector<PatientInfo> generate_cohort(const SynthConfig &cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.n_patients);
    Rng rng{derive_seed(cfg.seed, "cohort")};
    std::vector<PatientInfo> roster(n);
    const Date first_index = cfg.study_start + 730;
    const int span = cfg.study_years * 365 - 730 - 365;
    for (std::size_t i = 0; i < n; ++i) {
        auto &p = roster[i];
        p.patient_id = patient_id(static_cast<int>(i));
        p.gender = rng.bernoulli(cfg.female_fraction) ? Gender::F : Gender::M;
        p.age_at_index = 40 + static_cast<int>(rng.below(51));
        p.index_date = first_index + static_cast<int>(rng.below(static_cast<std::size_t>(span) + 1));
    }
    // Exact-count labels.
    const auto n_pos = static_cast<std::size_t>(std::llround(cfg.outcome_prevalence * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span{order});
    for (std::size_t i = 0; i < n_pos; ++i) {
        roster[order[i]].y = 1;
    }
    // Exact-count prior I49 indicator.
    const double b = cfg.background_i49_rate;
    const double a = solve_positive_rate(cfg.prior_history_signal, cfg.outcome_prevalence, b);
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < n; ++i) {
        (roster[i].y ? pos : neg).push_back(i);
    }
    Rng flag_rng{derive_seed(cfg.seed, "i49")};
    flag_rng.shuffle(std::span{pos});
    flag_rng.shuffle(std::span{neg});
    const auto k_pos = static_cast<std::size_t>(std::llround(a * static_cast<double>(pos.size())));
    const auto k_neg = static_cast<std::size_t>(std::llround(b * static_cast<double>(neg.size())));
    for (std::size_t i = 0; i < k_pos; ++i) {
        roster[pos[i]].prior_i49 = true;
    }
    for (std::size_t i = 0; i < k_neg; ++i) {
        roster[neg[i]].prior_i49 = true;
    }
    // Drug lists; positives lean towards risky substances when the effect is on.
    const auto &vocab = substance_vocabulary();
    for (auto &p : roster) {
        Rng drng{derive_seed(cfg.seed, "drugs/" + p.patient_id)};
        const auto count = std::min<std::size_t>(vocab.size(), 2 + poisson(drng, 4.0));
        std::vector<double> w(vocab.size());
        for (std::size_t s = 0; s < vocab.size(); ++s) {
            w[s] = p.y ? std::exp(cfg.risk_score_effect * vocab[s].risk) : 1.0;
        }
        for (std::size_t k = 0; k < count; ++k) {
            const double total = std::accumulate(w.begin(), w.end(), 0.0);
            double u = drng.uniform() * total;
            std::size_t pick = 0;
            while (pick + 1 < w.size() && (u >= w[pick] || w[pick] == 0)) {
                u -= w[pick];
                ++pick;
            }
            p.substances.push_back(vocab[pick].id);
            w[pick] = 0;
        }
        std::sort(p.substances.begin(), p.substances.end());
    }
    return roster;
}

SynthData generate_events(const std::vector<PatientInfo> &roster, const SynthConfig &cfg) {
    cfg.validate();
    SynthData d;
    d.config = cfg;
    d.roster = roster;
    d.risk_table = default_risk_table();
    const auto &vocab = substance_vocabulary();
    std::map<std::string, const Substance *> by_id;
    for (const auto &s : vocab) {
        by_id[s.id] = &s;
    }
    std::vector<EventRecord> rows;
    for (const auto &p : roster) {
        Rng rng{derive_seed(cfg.seed, "events/" + p.patient_id)};
        const Date censor = p.index_date + kOutcomeWindowDays;
        const int group = drug_use_index_group(p.substances.size());
        auto base = [&](int concept_id, Date date, std::string value) {
            EventRecord e;
            e.patient_id = p.patient_id;
            e.concept_type_id = concept_id;
            e.observation_start_date = date;
            e.value_char = std::move(value);
            e.gender = p.gender;
            e.patient_age_at_observation = p.age_at_index - static_cast<int>((p.index_date - date) / 365);
            e.patient_study_age_decade = p.age_at_index / 10;
            e.censor_date = censor;
            e.drug_use_index_group = group;
            return e;
        };
        auto any_day = [&](int back_days) { return p.index_date - static_cast<int>(rng.below(static_cast<std::size_t>(back_days) + 1)); };
        auto drug_event = [&](int concept_id, Date date) {
            const auto &s = *by_id.at(p.substances[rng.below(p.substances.size())]);
            auto e = base(concept_id, date, s.atc);
            const auto &form = concept_id == concepts::kDrugAdministration ? s.forms.back() : s.forms.front();
            e.drug_dosage_form_code = form;
            e.drug_substance_id = s.id;
            e.route_of_administration = rng.bernoulli(0.05) ? Route::MISSING : route_of_form(form);
            e.drug_registration_risk_value = s.risk;
            e.value_decimal = concept_id == concepts::kDrugAdministration
                                  ? 1.0 + static_cast<double>(rng.below(2))
                                  : 30.0 * static_cast<double>(1 + rng.below(3));
            return e;
        };
        const auto count = static_cast<std::size_t>(cfg.events_per_patient_min) +
                           poisson(rng, cfg.events_per_patient_mean - cfg.events_per_patient_min);
        for (std::size_t i = 0; i < count; ++i) {
            const double u = rng.uniform();
            const Date date = any_day(730);
            if (u < 0.30) {
                rows.push_back(base(concepts::kDiagnosis, date, kGeneralDiagnoses[rng.below(kGeneralDiagnoses.size())]));
            } else if (u < 0.75) {
                rows.push_back(drug_event(concepts::kDrugDispensation, date));
            } else if (u < 0.90) {
                rows.push_back(drug_event(concepts::kDrugAdministration, date));
            } else {
                auto e = base(concepts::kHospitalization, date, kWards[rng.below(kWards.size())]);
                e.value_decimal = static_cast<double>(1 + rng.below(14));
                rows.push_back(std::move(e));
            }
        }
        // Ventricular arrhythmia history unrelated to the label.
        if (rng.bernoulli(0.03)) {
            rows.push_back(base(concepts::kVentricularArrhythmia, any_day(730), "I472"));
        }
        if (p.prior_i49) {
            rows.push_back(base(concepts::kVentricularArrhythmia, p.index_date - (1 + static_cast<int>(rng.below(730))),
                                kI49Codes[rng.below(kI49Codes.size())]));
        }
        if (p.y && cfg.history_burden_effect > 0) {
            const auto extra = poisson(rng, 4.0 * cfg.history_burden_effect);
            for (std::size_t i = 0; i < extra; ++i) {
                const Date date = p.index_date - (1 + static_cast<int>(rng.below(365)));
                if (rng.bernoulli(0.6)) {
                    rows.push_back(base(concepts::kDiagnosis, date, kCardiacBurden[rng.below(kCardiacBurden.size())]));
                } else {
                    auto e = base(concepts::kHospitalization, date, "CARD");
                    e.value_decimal = static_cast<double>(1 + rng.below(14));
                    rows.push_back(std::move(e));
                }
            }
        }
        OutcomeLabel label;
        label.patient_id = p.patient_id;
        label.index_date = p.index_date;
        label.y = p.y;
        if (p.y) {
            label.days_to_first_occurrence = 1 + static_cast<int>(rng.below(kOutcomeWindowDays));
            label.total_outcomes = 1 + static_cast<int>(poisson(rng, 0.5));
        }
        d.outcomes.push_back(std::move(label));
    }
    d.events = sort_events(EventTable{std::move(rows), Track::WithJanusmed});
    return d;
}

SynthData generate(const SynthConfig &cfg) { return generate_events(generate_cohort(cfg), cfg); }

void write_synth(const SynthData &d, const std::string &dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path root{dir};
    export_event_csv((root / "events_with_janusmed.csv").string(), d.events);
    export_event_csv((root / "events_without_janusmed.csv").string(),
                     project_to_track(d.events, Track::WithoutJanusmed));
    write_outcomes_csv((root / "outcomes.csv").string(), d.outcomes);
    d.risk_table.save_csv((root / "risk_table.csv").string());
    std::ofstream cfg{root / "config.json"};
    cfg << d.config.to_json().dump(2) << '\n';
}

MatchResult match_controls(const std::vector<PatientInfo> &cases, const std::vector<PatientInfo> &pool,
                           const MatchKeys &keys) {
    MatchResult r;
    std::vector<bool> used(pool.size(), false);
    for (const auto &c : cases) {
        std::ptrdiff_t best = -1;
        std::pair<int, int> best_key{0, 0};
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto &p = pool[i];
            if (used[i] || p.gender != c.gender || p.age_at_index / 10 != c.age_at_index / 10) {
                continue;
            }
            const int dd = std::abs(p.index_date - c.index_date);
            const int dc = std::abs(static_cast<int>(p.substances.size()) - static_cast<int>(c.substances.size()));
            if (dd > keys.index_days || dc > keys.drug_count) {
                continue;
            }
            if (best < 0 || std::pair{dd, dc} < best_key) {
                best = static_cast<std::ptrdiff_t>(i);
                best_key = {dd, dc};
            }
        }
        if (best < 0) {
            r.unmatched.push_back(c.patient_id);
        } else {
            used[static_cast<std::size_t>(best)] = true;
            r.pairs.emplace_back(c.patient_id, pool[static_cast<std::size_t>(best)].patient_id);
        }
    }
    return r;
}

} // namespace kdfe::synth
