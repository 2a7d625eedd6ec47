#include "kdfe/dsl/evaluate.hpp"

#include "kdfe/error.hpp"
#include "kdfe/risk/risk.hpp"

#include <cstdlib>

namespace kdfe::dsl {

namespace {

std::string canonical_risk(const std::string &value) {
    try {
        return risk::to_string(risk::parse_risk_level(value));
    } catch (const ValueError &) {
        return value;
    }
}

} // namespace

SelectorMatcher::SelectorMatcher(const Selector &s, const Registry &registry) {
    const auto &info = registry.concept_info(s.concept_id);
    concepts_.push_back(info.id);
    concepts_.insert(concepts_.end(), info.includes.begin(), info.includes.end());
    risk_level_ = info.value_format == ValueFormat::RiskLevel;
    if (s.value == "ALL") {
        mode_ = Mode::All;
    } else if (s.hierarchy_level) {
        const auto level = static_cast<std::size_t>(*s.hierarchy_level);
        if (level >= info.hierarchy_prefix_lengths.size()) {
            throw ValueError("concept " + std::to_string(info.id) + " has no hierarchy level H" +
                             std::to_string(level));
        }
        mode_ = Mode::Prefix;
        prefix_length_ = info.hierarchy_prefix_lengths[level];
        value_ = s.value;
    } else {
        mode_ = Mode::Exact;
        value_ = risk_level_ ? canonical_risk(s.value) : s.value;
    }
}

bool SelectorMatcher::matches(const EventRecord &e) const {
    bool concept_ok = false;
    for (int c : concepts_) {
        if (c == e.concept_type_id) {
            concept_ok = true;
            break;
        }
    }
    if (!concept_ok) {
        return false;
    }
    switch (mode_) {
    case Mode::All: return true;
    case Mode::Prefix:
        return e.value_char.size() >= prefix_length_ &&
               e.value_char.compare(0, prefix_length_, value_) == 0 &&
               value_.size() == prefix_length_;
    case Mode::Exact:
        if (risk_level_ && e.value_char.find(',') != std::string::npos) {
            return canonical_risk(e.value_char) == value_;
        }
        return e.value_char == value_;
    }
    return false;
}

void require_sorted(std::span<const EventRecord> events) {
    for (std::size_t i = 1; i < events.size(); ++i) {
        const auto &a = events[i - 1];
        const auto &b = events[i];
        // Patient id is irrelevant within one patient's stream.
        const bool out_of_order =
            b.observation_start_date < a.observation_start_date ||
            (b.observation_start_date == a.observation_start_date &&
             (b.concept_type_id < a.concept_type_id ||
              (b.concept_type_id == a.concept_type_id && b.value_char < a.value_char)));
        if (out_of_order) {
            throw ContractViolation("events are not sorted (position " + std::to_string(i) + ")");
        }
    }
}

Evaluation evaluate_detailed(const FeatureExpr &e, std::span<const EventRecord> events,
                             Date reference_date, const Registry &registry) {
    require_sorted(events);
    std::vector<std::size_t> stream;
    std::vector<std::optional<Date>> anchors;
    bool in_segment = false;
    bool prev_selector = false;

    auto segment_anchor = [&]() -> std::optional<Date> {
        if (stream.empty()) {
            return std::nullopt;
        }
        return events[stream.back()].observation_start_date;
    };

    Evaluation result;
    for (std::size_t i = 0; i < e.terms.size(); ++i) {
        const bool last = i + 1 == e.terms.size();
        if (const auto *sel = std::get_if<Selector>(&e.terms[i])) {
            SelectorMatcher matcher{*sel, registry};
            std::vector<std::size_t> next;
            if (prev_selector) {
                for (auto idx : stream) {
                    if (matcher.matches(events[idx])) {
                        next.push_back(idx);
                    }
                }
            } else {
                if (in_segment) {
                    anchors.push_back(segment_anchor());
                }
                for (std::size_t idx = 0; idx < events.size(); ++idx) {
                    if (matcher.matches(events[idx])) {
                        next.push_back(idx);
                    }
                }
                in_segment = true;
            }
            stream = std::move(next);
            prev_selector = true;
            if (last) {
                result.value = stream.empty() ? 0.0 : 1.0;
                result.anchor = segment_anchor();
            }
            continue;
        }
        prev_selector = false;
        switch (std::get<Operator>(e.terms[i]).opcode) {
        case Opcode::FirstEvent:
            if (stream.size() > 1) {
                stream.resize(1);
            }
            break;
        case Opcode::LastEvent:
            if (stream.size() > 1) {
                stream = {stream.back()};
            }
            break;
        case Opcode::HaveObservation:
            if (last) {
                result.value = stream.empty() ? 0.0 : 1.0;
                result.anchor = segment_anchor();
            } else if (stream.empty()) {
                return {};
            }
            break;
        case Opcode::NumberOfObservations:
            if (last) {
                result.value = static_cast<double>(stream.size());
                result.anchor = segment_anchor();
            } else if (stream.empty()) {
                return {};
            }
            break;
        case Opcode::DaysBetween: {
            anchors.push_back(segment_anchor());
            in_segment = false;
            if (anchors.size() < 2 || !anchors.back() || !anchors[anchors.size() - 2]) {
                return {};
            }
            const Date a = *anchors[anchors.size() - 2];
            const Date b = *anchors.back();
            result.value = static_cast<double>(std::abs(b - a));
            result.anchor = std::max(a, b);
            break;
        }
        case Opcode::DaysBeforeDate: {
            const auto anchor = segment_anchor();
            if (!anchor) {
                return {};
            }
            result.value = static_cast<double>(std::abs(reference_date - *anchor));
            result.anchor = anchor;
            break;
        }
        }
    }
    return result;
}

std::optional<double> evaluate_feature(const FeatureExpr &e, std::span<const EventRecord> events,
                                       Date reference_date, const Registry &registry) {
    return evaluate_detailed(e, events, reference_date, registry).value;
}

} // namespace kdfe::dsl
