#include "helpers.hpp"

#include "kdfe/error.hpp"
#include "kdfe/synth/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

using namespace kdfe;
using namespace kdfe::synth;

namespace {

// Realized point-biserial r between "any I49-family diagnosis on or before
// the index date" and y, computed from the generated events.
double realized_i49_r(const SynthData &d) {
    std::map<std::string, Date> index;
    for (const auto &o : d.outcomes) {
        index[o.patient_id] = o.index_date;
    }
    std::set<std::string> flagged;
    for (const auto &e : d.events.rows()) {
        if (e.concept_type_id == concepts::kVentricularArrhythmia && e.value_char.rfind("I49", 0) == 0 &&
            e.observation_start_date <= index[e.patient_id]) {
            flagged.insert(e.patient_id);
        }
    }
    double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (const auto &o : d.outcomes) {
        const double x = flagged.count(o.patient_id) ? 1 : 0;
        const double y = o.y;
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    return vx > 0 ? cov / std::sqrt(vx * vy) : 0.0;
}

} // namespace

TEST_CASE("cohort is deterministic for a seed") {
    SynthConfig cfg;
    cfg.n_patients = 100;
    const auto a = generate_cohort(cfg);
    const auto b = generate_cohort(cfg);
    REQUIRE(a.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].patient_id == b[i].patient_id);
        CHECK(a[i].index_date == b[i].index_date);
        CHECK(a[i].substances == b[i].substances);
        CHECK(a[i].y == b[i].y);
    }
    cfg.seed = 43;
    const auto c = generate_cohort(cfg);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        differs = differs || a[i].index_date != c[i].index_date;
    }
    CHECK(differs);
}

TEST_CASE("exact prevalence and binomial gender bounds") {
    SynthConfig cfg;
    cfg.n_patients = 2000;
    for (double prev : {0.2, 0.05, 0.5}) {
        cfg.outcome_prevalence = prev;
        const auto r = generate_cohort(cfg);
        const auto pos = std::count_if(r.begin(), r.end(), [](const PatientInfo &p) { return p.y == 1; });
        CHECK(pos == std::llround(prev * 2000));
    }
    const auto r = generate_cohort(cfg);
    const auto f = std::count_if(r.begin(), r.end(), [](const PatientInfo &p) { return p.gender == Gender::F; });
    // 99% normal-approximation bounds for Binomial(2000, 0.5): 1000 +- 2.576 * sqrt(500)
    CHECK(f >= 1000 - 58);
    CHECK(f <= 1000 + 58);
    const auto start = cfg.study_start;
    const auto end = start + 365 * cfg.study_years + 3;
    for (const auto &p : r) {
        CHECK(p.index_date >= start);
        CHECK(p.index_date <= end);
    }
}

TEST_CASE("signal targets are reached in the generated events") {
    SynthConfig cfg;
    cfg.n_patients = 2000;
    const auto d = generate(cfg);
    CHECK(std::abs(realized_i49_r(d) - 0.58) <= 0.05);

    const auto null = generate(cfg.null_model());
    CHECK(std::abs(realized_i49_r(null)) < 0.05);
}

TEST_CASE("solver and feasibility") {
    const double a = solve_positive_rate(0.58, 0.2, 0.02);
    CHECK(point_biserial(a, 0.2, 0.02) == doctest::Approx(0.58).epsilon(1e-6));
    CHECK_THROWS_WITH_AS(solve_positive_rate(0.99, 0.05, 0.5), doctest::Contains("feasible"), ValidationError);
}

TEST_CASE("risk values carry no label signal under the null") {
    // permutation test of the mean drug risk difference between classes
    const auto table = default_risk_table();
    int small_p = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SynthConfig cfg;
        cfg.n_patients = 300;
        cfg.seed = seed;
        const auto roster = generate_cohort(cfg);
        std::vector<double> risk;
        std::vector<int> y;
        for (const auto &p : roster) {
            double s = 0;
            for (const auto &sub : p.substances) {
                s += table.risk_of(sub);
            }
            risk.push_back(p.substances.empty() ? 0 : s / static_cast<double>(p.substances.size()));
            y.push_back(p.y);
        }
        auto diff = [&](const std::vector<int> &lab) {
            double a = 0, b = 0, na = 0, nb = 0;
            for (std::size_t i = 0; i < lab.size(); ++i) {
                (lab[i] ? a : b) += risk[i];
                (lab[i] ? na : nb) += 1;
            }
            return std::abs(a / na - b / nb);
        };
        const double observed = diff(y);
        std::mt19937 rng{static_cast<std::uint32_t>(seed)};
        int extreme = 0;
        for (int k = 0; k < 200; ++k) {
            std::shuffle(y.begin(), y.end(), rng);
            extreme += diff(y) >= observed;
        }
        small_p += (extreme + 1) / 201.0 < 0.05;
    }
    CHECK(small_p <= 4);
}

TEST_CASE("generated tables pass ingest on both tracks") {
    SynthConfig cfg;
    cfg.n_patients = 40;
    const auto d = generate(cfg);
    CHECK(d.events.sorted());
    const auto dir = testing::scratch("synth");
    write_synth(d, dir.string());
    const auto with = ingest_event_table((dir / "events_with_janusmed.csv").string(), Track::WithJanusmed);
    const auto without =
        ingest_event_table((dir / "events_without_janusmed.csv").string(), Track::WithoutJanusmed);
    CHECK(with.size() == d.events.size());
    CHECK(without.size() == d.events.size());
    CHECK(read_outcomes_csv((dir / "outcomes.csv").string()) == d.outcomes);
    CHECK(SynthConfig::load((dir / "config.json").string()).to_json() == cfg.to_json());
}

TEST_CASE("config validation") {
    SynthConfig cfg;
    cfg.n_patients = 10;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = {};
    cfg.outcome_prevalence = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(SynthConfig::from_json({{"no_such_knob", 1}}), ValidationError);
    CHECK(SynthConfig::from_json({{"n_patients", 50}}).n_patients == 50);
}

TEST_CASE("control matching") {
    auto person = [](std::string id, Gender g, int age, int day, int drugs) {
        PatientInfo p;
        p.patient_id = std::move(id);
        p.gender = g;
        p.age_at_index = age;
        p.index_date = testing::day(day);
        p.substances.assign(static_cast<std::size_t>(drugs), "S");
        return p;
    };
    const std::vector<PatientInfo> cases{person("c1", Gender::F, 65, 0, 3), person("c2", Gender::M, 42, 100, 1),
                                         person("c3", Gender::F, 88, 0, 2)};
    const std::vector<PatientInfo> clones{person("k1", Gender::F, 65, 0, 3), person("k2", Gender::M, 42, 100, 1),
                                          person("k3", Gender::F, 88, 0, 2)};
    const auto all = match_controls(cases, clones);
    CHECK(all.pairs.size() == 3);
    CHECK(all.unmatched.empty());
    CHECK(all.pairs[0] == std::pair<std::string, std::string>{"c1", "k1"});

    const std::vector<PatientInfo> pool{person("p1", Gender::F, 61, 150, 4), person("p2", Gender::F, 69, 20, 3),
                                        person("p3", Gender::M, 45, 400, 1)};
    const auto part = match_controls(cases, pool);
    REQUIRE(part.pairs.size() == 1);
    CHECK(part.pairs[0] == std::pair<std::string, std::string>{"c1", "p2"});
    CHECK(part.unmatched == std::vector<std::string>{"c2", "c3"});
    std::set<std::string> controls;
    for (const auto &[c, k] : part.pairs) {
        CHECK(controls.insert(k).second);
    }
}
