#pragma once

#include "kdfe/core/events.hpp"
#include "kdfe/date.hpp"
#include "kdfe/dsl/feature_code.hpp"
#include "kdfe/dsl/registry.hpp"

#include <optional>
#include <span>
#include <vector>

namespace kdfe::dsl {

/// A selector resolved against a registry, ready to test events.
class SelectorMatcher {
  public:
    SelectorMatcher(const Selector &s, const Registry &registry);

    bool matches(const EventRecord &e) const;

  private:
    enum class Mode { All, Prefix, Exact };
    std::vector<int> concepts_;
    Mode mode_{Mode::Exact};
    std::size_t prefix_length_{0};
    std::string value_;
    bool risk_level_{false};
};

struct Evaluation {
    std::optional<double> value;
    /// Date the value is attached to: the latest anchor involved.
    std::optional<Date> anchor;
};

/// Left-to-right evaluation over one patient's sorted events.
///
/// State is a current event stream plus a list of completed anchors. A
/// selector directly after a selector narrows the stream; after an operator
/// (or at the start) it closes the current segment, pushing the segment's
/// anchor (date of its last event, absent if empty), and selects from all
/// events. 1050/1060 keep the first/last event. 1040 and 1070 emit 1/0 and
/// the stream size when final; mid-pipeline they gate on a non-empty stream.
/// 1030 closes the segment and emits |a_last - a_prev|. 1033 emits the days
/// between the current anchor and the reference date. A code ending in a
/// selector is an indicator. Missing anchors yield an absent value.
Evaluation evaluate_detailed(const FeatureExpr &e, std::span<const EventRecord> events,
                             Date reference_date, const Registry &registry = Registry::builtin());

std::optional<double> evaluate_feature(const FeatureExpr &e, std::span<const EventRecord> events,
                                       Date reference_date,
                                       const Registry &registry = Registry::builtin());

/// Throws ContractViolation unless events are in sort_events order.
void require_sorted(std::span<const EventRecord> events);

} // namespace kdfe::dsl
