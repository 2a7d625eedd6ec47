#include "helpers.hpp"

#include "common/risk_properties.hpp"
#include "kdfe/error.hpp"
#include "kdfe/risk/risk.hpp"

#include <doctest.h>

using namespace kdfe;
using namespace kdfe::risk;
using testing::day;

namespace {

EventRecord drug(int offset, std::string substance, Route route = Route::OSD) {
    auto e = testing::dispensation("P", offset, std::move(substance));
    e.route_of_administration = route;
    e.drug_registration_risk_value = 0;
    return e;
}

} // namespace

TEST_CASE("duplicates are counted once and topical is excluded") {
    const std::vector<EventRecord> events{drug(-50, "A"), drug(-10, "A"), drug(-5, "B", Route::TOPICAL)};
    const auto s = concurrent_medications(events, day(0), ExposureWindow{});
    CHECK(s == std::set<std::string>{"A"});
}

TEST_CASE("window boundary is inclusive at 120 days") {
    const std::vector<EventRecord> at{drug(-120, "A")};
    CHECK(concurrent_medications(at, day(0), ExposureWindow{}).size() == 1);
    const std::vector<EventRecord> past{drug(-121, "A")};
    CHECK(concurrent_medications(past, day(0), ExposureWindow{}).empty());
    CHECK_THROWS_AS(ExposureWindow{0}, ValueError);
}

TEST_CASE("banding") {
    const RiskTable table{{{"A", 1}, {"B", 2}, {"Z", 0}}};
    CHECK(aggregate_risk({}, table) == RiskLevel::L0);
    CHECK(aggregate_risk({"A"}, table) == RiskLevel::LI);
    CHECK(aggregate_risk({"B"}, table) == RiskLevel::LII);
    CHECK(aggregate_risk({"A", "B"}, table) == RiskLevel::LIII);
    CHECK(aggregate_risk({"Z", "unlisted"}, table) == RiskLevel::L0);
    CHECK(table.risk_of("unlisted") == 0);
}

TEST_CASE("risk level text") {
    CHECK(to_string(RiskLevel::LII) == "RL_2");
    CHECK(parse_risk_level("RL_1,000") == RiskLevel::LI);
    CHECK(parse_risk_level("RL_3") == RiskLevel::LIII);
    CHECK_THROWS_AS(parse_risk_level("RL_9"), ValueError);
    CHECK_THROWS_AS(parse_risk_level("level1"), ValueError);
}

TEST_CASE("no medications give a single RL_0 event") {
    const EventTable t{{testing::diagnosis("P", 0, "I10")}, Track::WithJanusmed, true};
    const auto out = annotate_daily_risk(t, {day(0), day(300)}, RiskTable{});
    REQUIRE(out.size() == 1);
    CHECK(out[0].concept_type_id == concepts::kJanusmedRiskLevel);
    CHECK(out[0].value_char == "RL_0");
    CHECK(out[0].observation_start_date == day(0));
    CHECK_THROWS_AS(annotate_daily_risk(t, {day(10), day(5)}, RiskTable{}), ValueError);
}

TEST_CASE("one risk-1 dispensation: RL_1 from d, RL_0 again at d+121") {
    const EventTable t{{drug(50, "A")}, Track::WithJanusmed, true};
    const auto runs = daily_risk_runs(t.rows(), {day(0), day(400)}, RiskTable{{{"A", 1}}}, ExposureWindow{});
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].start == day(0));
    CHECK(runs[0].level == RiskLevel::L0);
    CHECK(runs[1].start == day(50));
    CHECK(runs[1].level == RiskLevel::LI);
    CHECK(runs[2].start == day(50 + 121));
    CHECK(runs[2].level == RiskLevel::L0);

    const auto events = annotate_daily_risk(t, {day(0), day(400)}, RiskTable{{{"A", 1}}});
    REQUIRE(events.size() == 3);
    CHECK(events[1].value_char == "RL_1");
    // joins the feature language through the comma-decimal selector
    CHECK(events[1].value_char == to_string(parse_risk_level("RL_1,000")));
}

TEST_CASE("route events") {
    CHECK(route_class(Route::OSD) == "DF_JM_1");
    const EventTable t{{drug(0, "A"), drug(1, "B", Route::PAR), testing::diagnosis("P", 2, "I10")},
                       Track::WithJanusmed, true};
    const auto r = route_events(t);
    REQUIRE(r.size() == 2);
    CHECK(r[0].concept_type_id == concepts::kRouteOfAdministration);
    CHECK(r[0].value_char == "DF_JM_1");
}

TEST_CASE("randomized timelines: brute-force oracle, translation, monotonicity") {
    std::mt19937 rng{11};
    for (int i = 0; i < 200; ++i) {
        CHECK(testing::risk_props::check_boundary(rng).empty());
        const auto t = testing::risk_props::random_timeline(rng);
        const auto msg = testing::risk_props::check_timeline(t, rng);
        CHECK_MESSAGE(msg.empty(), msg);
    }
}
