#pragma once

#include "kdfe/core/events.hpp"
#include "kdfe/date.hpp"

#include <array>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kdfe::risk {

enum class RiskLevel { L0 = 0, LI = 1, LII = 2, LIII = 3 };

/// "RL_0" .. "RL_3".
std::string to_string(RiskLevel level);
/// Accepts "RL_<n>" and the comma-decimal form "RL_<n>,<digits>".
RiskLevel parse_risk_level(std::string_view text);

/// Per-substance QT risk values; unlisted substances are 0.
class RiskTable {
  public:
    RiskTable() = default;
    explicit RiskTable(std::map<std::string, int> values);

    int risk_of(const std::string &substance_id) const noexcept;
    const std::map<std::string, int> &values() const noexcept { return values_; }

    static RiskTable load_csv(const std::string &path);
    void save_csv(const std::string &path) const;

  private:
    std::map<std::string, int> values_;
};

struct ExposureWindow {
    int length_days{120};

    explicit ExposureWindow(int days = 120);
};

/// Sum-then-band aggregation. level = number of thresholds <= total, so the
/// default {1, 2, 3} maps 0 -> L0, 1 -> LI, 2 -> LII, >=3 -> LIII.
struct BandPolicy {
    std::array<int, 3> thresholds{1, 2, 3};

    RiskLevel band(int total) const noexcept;
};

/// Distinct non-topical substances handled within [day - L, day].
std::set<std::string> concurrent_medications(std::span<const EventRecord> events, Date day,
                                             const ExposureWindow &window);

RiskLevel aggregate_risk(const std::set<std::string> &substances, const RiskTable &table,
                         const BandPolicy &policy = {});

struct DateRange {
    Date first;
    Date last;
};

/// Daily risk level for one patient over the period, run-length encoded: one
/// entry per change of level, dated at the first day of the run.
struct RiskRun {
    Date start;
    RiskLevel level;
};
std::vector<RiskRun> daily_risk_runs(std::span<const EventRecord> patient_events,
                                     DateRange period, const RiskTable &table,
                                     const ExposureWindow &window, const BandPolicy &policy = {});

/// Emits concept-2006 risk-level events for every patient of a sorted
/// WITH_JANUSMED table. Throws ValueError on an empty period.
std::vector<EventRecord> annotate_daily_risk(const EventTable &t, DateRange period,
                                             const RiskTable &table,
                                             const ExposureWindow &window = ExposureWindow{},
                                             const BandPolicy &policy = {});

/// Route class label carried by concept-2007 events ("DF_JM_1" = enteral).
std::string route_class(Route route);

/// One concept-2007 event per medication-handling row with a known route.
std::vector<EventRecord> route_events(const EventTable &t);

} // namespace kdfe::risk
