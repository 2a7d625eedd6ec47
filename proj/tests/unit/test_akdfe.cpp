#include "helpers.hpp"

#include "kdfe/akdfe/step1.hpp"
#include "kdfe/akdfe/step2.hpp"
#include "kdfe/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

using namespace kdfe;
using namespace kdfe::akdfe;
using testing::day;
using testing::diagnosis;

namespace {

FeatureDefinition def(int id, const std::string &code) {
    FeatureDefinition d;
    d.feature_id = id;
    d.expr = dsl::parse_feature_code(code);
    d.elementary_count = static_cast<int>(d.expr.selector_count());
    return d;
}

FeatureRow row(const std::string &patient, int feature, int offset, std::optional<double> value = 1.0) {
    FeatureRow r;
    r.feature_id = feature;
    r.patient_id = patient;
    r.observation_start_date = day(offset);
    r.value_decimal = value;
    return r;
}

std::map<int, FeatureMetadata> coverage_map(const std::vector<double> &coverage) {
    std::map<int, FeatureMetadata> m;
    for (std::size_t i = 0; i < coverage.size(); ++i) {
        FeatureMetadata md;
        md.feature_id = static_cast<int>(i) + 1;
        md.coverage = coverage[i];
        m[md.feature_id] = md;
    }
    return m;
}

std::vector<FeatureDefinition> defs_for(std::size_t n) {
    std::vector<FeatureDefinition> d;
    for (std::size_t i = 0; i < n; ++i) {
        d.push_back(def(static_cast<int>(i) + 1, "2060=C" + std::to_string(i)));
    }
    return d;
}

const PcdColumn &col(const ColumnBlock &b, const std::string &name) {
    for (const auto &c : b.columns) {
        if (c.name == name) {
            return c;
        }
    }
    FAIL("no column " << name);
    throw;
}

std::vector<PatientRef> cohort(std::initializer_list<const char *> ids, int index = 1000) {
    std::vector<PatientRef> c;
    for (const auto *id : ids) {
        c.push_back({id, day(index)});
    }
    return c;
}

} // namespace

TEST_CASE("coverage selection keeps the tie group at the cutoff") {
    const auto sel = coverage_rank_select(defs_for(3), coverage_map({0.9, 0.5, 0.5}), 2);
    CHECK(sel.size() == 3);
}

TEST_CASE("fewer candidates than the limit are all kept") {
    std::vector<double> cov(150);
    std::mt19937 rng{1};
    for (auto &c : cov) {
        c = std::uniform_real_distribution<>{}(rng);
    }
    CHECK(coverage_rank_select(defs_for(150), coverage_map(cov), 200).size() == 150);
}

TEST_CASE("distinct coverages: exactly limit selected and separated from the rest") {
    std::vector<double> cov(500);
    for (std::size_t i = 0; i < cov.size(); ++i) {
        cov[i] = static_cast<double>((i * 7919) % 500) / 500.0;
    }
    const auto defs = defs_for(500);
    const auto sel = coverage_rank_select(defs, coverage_map(cov), 200);
    REQUIRE(sel.size() == 200);
    std::set<std::size_t> chosen(sel.begin(), sel.end());
    double min_sel = 1, max_rej = 0;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        (chosen.count(i) ? min_sel : max_rej) = chosen.count(i) ? std::min(min_sel, cov[i]) : std::max(max_rej, cov[i]);
    }
    CHECK(min_sel > max_rej);
    for (std::size_t i = 1; i < sel.size(); ++i) {
        CHECK(cov[sel[i - 1]] >= cov[sel[i]]);
    }
}

TEST_CASE("metadata example") {
    const std::vector<FeatureRow> rows{row("A", 1, 0, 2.0), row("B", 1, 0, 4.0)};
    const auto md = extract_metadata(1, rows, 4);
    CHECK(md.value_mean == doctest::Approx(3.0));
    CHECK(md.value_std == doctest::Approx(1.4142135623730951));
    CHECK(md.coverage == doctest::Approx(0.5));

    const auto none = extract_metadata(2, {}, 4);
    CHECK(none.coverage == 0);
    CHECK_FALSE(none.value_mean.has_value());
    CHECK_FALSE(none.value_std.has_value());

    const std::vector<FeatureRow> one{row("A", 3, 0, 5.0)};
    const auto single = extract_metadata(3, one, 1);
    CHECK(single.coverage == 1.0);
    CHECK(single.value_std == 0.0);
}

TEST_CASE("selectors include exact codes and H0 variants") {
    const auto t = sort_events(EventTable{{diagnosis("P1", 0, "I499", concepts::kVentricularArrhythmia),
                                           diagnosis("P1", 5, "I48", concepts::kVentricularArrhythmia)},
                                          Track::WithoutJanusmed});
    const auto c = cohort({"P1"});
    const Step1Context ctx{t, c};
    int next = 1;
    const auto cand = run_subprocess(ctx, {}, Subprocess::Selectors, 1, next);
    std::set<std::string> codes;
    for (const auto &d : cand.defs) {
        codes.insert(dsl::render_feature_code(d.expr));
        CHECK(d.generation == 1);
        CHECK(d.parent_ids.empty());
    }
    CHECK(codes.count("2065=I499"));
    CHECK(codes.count("H0_2065=I49"));
    // a code already at category length gets no H0 variant
    CHECK_FALSE(codes.count("H0_2065=I48"));
    CHECK(codes.count("2065=I48"));
    CHECK(codes.count("2065=ALL"));
    CHECK(codes.count("2105=ALL"));
}

TEST_CASE("counts over one selector give one candidate; gaps are bounded") {
    std::vector<EventRecord> ev;
    const std::vector<std::string> codes{"I10", "E785", "J45", "I48"};
    for (int p = 0; p < 4; ++p) {
        for (int k = 0; k < 4; ++k) {
            ev.push_back(diagnosis("P" + std::to_string(p), k * 10 + p, codes[k]));
        }
    }
    const auto t = sort_events(EventTable{ev, Track::WithoutJanusmed});
    const auto c = cohort({"P0", "P1", "P2", "P3"});
    const Step1Context ctx{t, c};
    int next = 100;
    const std::vector<FeatureDefinition> one{def(1, "2060=I10")};
    const auto counts = run_subprocess(ctx, one, Subprocess::Counts, 2, next);
    REQUIRE(counts.defs.size() == 1);
    CHECK(dsl::render_feature_code(counts.defs[0].expr) == "2060=I10-1070");
    CHECK(counts.defs[0].parent_ids == std::vector<int>{1});

    std::vector<FeatureDefinition> k;
    for (int i = 0; i < 4; ++i) {
        k.push_back(def(i + 1, "2060=" + codes[static_cast<std::size_t>(i)]));
    }
    const auto gaps = run_subprocess(ctx, k, Subprocess::PairwiseGaps, 2, next);
    CHECK(gaps.defs.size() <= 4 * 3);
    CHECK(gaps.defs.size() > 0);
    for (const auto &d : gaps.defs) {
        CHECK(d.elementary_count == 2);
    }
}

TEST_CASE("run_step1 invariants and deterministic replay") {
    std::mt19937 rng{3};
    std::vector<EventRecord> ev;
    std::vector<PatientRef> refs;
    const std::vector<std::string> codes{"I10", "E785", "J45", "I48", "I499", "N18"};
    for (int p = 0; p < 30; ++p) {
        const auto id = "P" + std::to_string(p);
        refs.push_back({id, day(400)});
        const int n = static_cast<int>(rng() % 6);
        for (int k = 0; k < n; ++k) {
            ev.push_back(diagnosis(id, static_cast<int>(rng() % 390), codes[rng() % codes.size()]));
        }
    }
    const auto t = sort_events(EventTable{ev, Track::WithoutJanusmed});
    Step1Config cfg;
    cfg.limit = 5;
    const auto a = run_step1(t, refs, cfg);
    const auto b = run_step1(t, refs, cfg);
    CHECK(catalog_to_json(a.features).dump() == catalog_to_json(b.features).dump());
    CHECK(a.features.rows == b.features.rows);

    std::set<int> ids;
    for (const auto &d : a.features.catalog) {
        ids.insert(d.feature_id);
        CHECK(static_cast<std::size_t>(d.elementary_count) == d.expr.selector_count());
        if (d.generation == 1) {
            CHECK(d.parent_ids.empty());
        }
    }
    for (const auto &d : a.features.catalog) {
        for (int p : d.parent_ids) {
            CHECK(ids.count(p));
        }
    }
    for (const auto &r : a.features.rows) {
        CHECK(ids.count(r.feature_id));
    }
    for (const auto &[id, md] : a.features.metadata) {
        CHECK(md.coverage >= 0);
        CHECK(md.coverage <= 1);
        if (md.value_std) {
            CHECK(*md.value_std >= 0);
        }
    }
    for (const auto &s : a.stages) {
        CHECK(s.survivors <= s.candidates);
    }
    CHECK_THROWS_AS(run_step1(EventTable{ev, Track::WithoutJanusmed}, refs, cfg), ContractViolation);
}

TEST_CASE("single patient, selectors only") {
    const auto t = sort_events(EventTable{{diagnosis("P1", 0, "I10"), diagnosis("P1", 3, "I10"),
                                           diagnosis("P1", 5, "E785")},
                                          Track::WithoutJanusmed});
    Step1Config cfg;
    cfg.stages = {Subprocess::Selectors};
    const auto r = run_step1(t, cohort({"P1"}), cfg);
    std::set<std::string> codes;
    for (const auto &d : r.features.catalog) {
        codes.insert(dsl::render_feature_code(d.expr));
    }
    CHECK(codes == std::set<std::string>{"2060=I10", "2060=E785", "H0_2060=E78", "2060=ALL", "2105=ALL"});
    CHECK(r.features.rows.size() == 2 + 1 + 1 + 3 + 3);
}

TEST_CASE("feature set save and load") {
    const auto t = sort_events(EventTable{{diagnosis("P1", 0, "I10"), diagnosis("P2", 3, "E785")},
                                          Track::WithoutJanusmed});
    const auto r = run_step1(t, cohort({"P1", "P2"}));
    const auto dir = testing::scratch("fs");
    save_feature_set((dir / "x").string(), r.features);
    const auto back = load_feature_set((dir / "x").string());
    CHECK(back.rows == r.features.rows);
    CHECK(catalog_to_json(back).dump() == catalog_to_json(r.features).dump());
}

TEST_CASE("unigram and bigram examples") {
    EventAkdfeFeatureSet fs;
    fs.rows = {row("p", 1, 0), row("p", 2, 1), row("p", 1, 2)};
    const std::vector<std::string> patients{"p", "q"};
    const auto uni = generate_ngrams(fs, patients);
    CHECK(col(uni.block, "FC1").values == std::vector<std::optional<double>>{2.0, 0.0});
    CHECK(col(uni.block, "FC2").values == std::vector<std::optional<double>>{1.0, 0.0});
    CHECK(col(uni.block, "FC_TOTAL").values == std::vector<std::optional<double>>{3.0, 0.0});

    const auto bi = generate_ngrams(fs, patients, NGramConfig{2});
    CHECK(col(bi.block, "FC1_2").values[0] == 1.0);
    CHECK(col(bi.block, "FC2_1").values[0] == 1.0);
    CHECK(col(bi.block, "FC_TOTAL").values[0] == 2.0);

    const auto tri = generate_ngrams(fs, patients, NGramConfig{4});
    CHECK(col(tri.block, "FC_TOTAL").values[0] == 0.0);
    CHECK_THROWS_AS(generate_ngrams(fs, patients, NGramConfig{0}), ValidationError);
}

TEST_CASE("same-day shuffles change nothing at n=1") {
    EventAkdfeFeatureSet a;
    a.rows = {row("p", 3, 0), row("p", 1, 0), row("p", 2, 0), row("p", 1, 4)};
    auto b = a;
    std::swap(b.rows[0], b.rows[2]);
    const std::vector<std::string> patients{"p"};
    const auto ua = generate_ngrams(a, patients).block;
    const auto ub = generate_ngrams(b, patients).block;
    for (const auto &c : ua.columns) {
        CHECK(col(ub, c.name).values == c.values);
    }
    CHECK(patient_same_event_max(a) == 3);
}

TEST_CASE("sum examples, oracle and linearity") {
    EventAkdfeFeatureSet fs;
    fs.rows = {row("p", 7, 0, 1.5), row("p", 7, 1, 2.5), row("p", 8, 1, std::nullopt)};
    const std::vector<std::string> patients{"p", "q"};
    const auto s = sum_feature_values(fs, patients);
    CHECK(col(s, "S7").values[0] == 4.0);
    CHECK_FALSE(col(s, "S7").values[1].has_value());
    CHECK(col(s, "S8").values[0] == 0.0);

    std::mt19937 rng{9};
    EventAkdfeFeatureSet big;
    std::map<std::pair<std::string, int>, double> oracle;
    const std::vector<std::string> pts{"a", "b", "c", "d"};
    for (int i = 0; i < 100; ++i) {
        const auto p = pts[rng() % pts.size()];
        const int f = 1 + static_cast<int>(rng() % 5);
        const double v = std::uniform_real_distribution<>{-10, 10}(rng);
        big.rows.push_back(row(p, f, static_cast<int>(rng() % 30), v));
        oracle[{p, f}] += v;
    }
    const auto sums = sum_feature_values(big, pts);
    for (const auto &[key, value] : oracle) {
        const auto &c = col(sums, "S" + std::to_string(key.second));
        const auto idx = static_cast<std::size_t>(std::find(pts.begin(), pts.end(), key.first) - pts.begin());
        CHECK(std::abs(*c.values[idx] - value) < 1e-12);
    }
    auto doubled = big;
    doubled.rows.insert(doubled.rows.end(), big.rows.begin(), big.rows.end());
    const auto twice = sum_feature_values(doubled, pts);
    for (const auto &c : sums.columns) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (c.values[i]) {
                CHECK(*col(twice, c.name).values[i] == doctest::Approx(2 * *c.values[i]));
            }
        }
    }
}

TEST_CASE("count conservation over a random feature set") {
    std::mt19937 rng{21};
    EventAkdfeFeatureSet fs;
    std::vector<std::string> pts;
    std::map<std::string, int> events;
    for (int p = 0; p < 50; ++p) {
        pts.push_back("P" + std::to_string(p));
        const int n = static_cast<int>(rng() % 20);
        events[pts.back()] = n;
        for (int k = 0; k < n; ++k) {
            fs.rows.push_back(row(pts.back(), 1 + static_cast<int>(rng() % 12), static_cast<int>(rng() % 10)));
        }
    }
    const auto block = generate_ngrams(fs, pts).block;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double sum = 0;
        for (const auto &c : block.columns) {
            if (c.kind == ColumnKind::Count) {
                CHECK(*c.values[i] >= 0);
                sum += *c.values[i];
            }
        }
        CHECK(sum == events[pts[i]]);
        CHECK(*col(block, "FC_TOTAL").values[i] == events[pts[i]]);
    }
}

TEST_CASE("assembly shape and errors") {
    EventAkdfeFeatureSet fs;
    fs.rows = {row("a", 1, 0, 1.0), row("b", 2, 0, 2.0), row("c", 1, 0, 3.0)};
    const std::vector<std::string> pts{"a", "b", "c"};
    auto fc = generate_ngrams(fs, pts).block;
    fc.columns.erase(std::remove_if(fc.columns.begin(), fc.columns.end(),
                                    [](const PcdColumn &c) { return c.kind == ColumnKind::CountTotal; }),
                     fc.columns.end());
    const auto s = sum_feature_values(fs, pts);
    const std::vector<OutcomeLabel> out{testing::label("c", 1), testing::label("a", 0), testing::label("b", 0)};
    const auto m = assemble_pcd(fc, s, out);
    CHECK(m.rows() == 3);
    CHECK(m.columns.size() == 4);
    CHECK(m.patients == std::vector<std::string>{"c", "a", "b"});
    CHECK(m.column("S1")->values[0] == 3.0);
    CHECK(m.y == std::vector<std::uint8_t>{1, 0, 0});

    auto dup = out;
    dup.push_back(testing::label("a", 0));
    CHECK_THROWS_AS(assemble_pcd(fc, s, dup), ValidationError);
    const std::vector<OutcomeLabel> missing{testing::label("a", 0), testing::label("b", 0),
                                            testing::label("z", 1)};
    CHECK_THROWS_WITH_AS(assemble_pcd(fc, s, missing), doctest::Contains("z"), ValidationError);
}

TEST_CASE("pcd save and load") {
    EventAkdfeFeatureSet fs;
    fs.catalog = {def(1, "2060=I10"), def(2, "2060=E785-1070")};
    fs.rows = {row("a", 1, 0, 1.0), row("b", 2, 0, 2.0)};
    const std::vector<OutcomeLabel> out{testing::label("a", 0), testing::label("b", 1)};
    const auto m = build_pcd(fs, out);
    const auto dir = testing::scratch("pcd");
    save_pcd((dir / "m").string(), m);
    const auto back = load_pcd((dir / "m").string());
    CHECK(back.patients == m.patients);
    CHECK(back.y == m.y);
    REQUIRE(back.columns.size() == m.columns.size());
    for (std::size_t i = 0; i < m.columns.size(); ++i) {
        CHECK(back.columns[i].name == m.columns[i].name);
        CHECK(back.columns[i].values == m.columns[i].values);
    }
    REQUIRE(back.definition(2) != nullptr);
    CHECK(dsl::render_feature_code(back.definition(2)->expr) == "2060=E785-1070");
}
