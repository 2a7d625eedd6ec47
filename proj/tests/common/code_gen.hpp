#pragma once

// Generator of valid feature-code ASTs and the printed example codes, shared
// by the unit and acceptance tests.

#include "kdfe/dsl/feature_code.hpp"

#include <random>
#include <string>
#include <vector>

namespace testing::codes {

inline const std::vector<std::string> &printed() {
    static const std::vector<std::string> codes{
        "H0_2065=I49",
        "2065=I499",
        "2100=I499",
        "2105=ALL-1060-2007=DF_JM_1-1040-1033",
        "2105=ALL-1060-2007=DF_JM_1-1070-1033",
        "2007=DF_JM_1-1060-2105=ALL-1050-1030",
        "2006=RL_1,000-1060-2105=ALL-1050-1030",
    };
    return codes;
}

/// Invalid codes and whether each must raise UnknownOpcodeError (otherwise
/// SyntaxError).
inline const std::vector<std::pair<std::string, bool>> &invalid() {
    static const std::vector<std::pair<std::string, bool>> codes{
        {"9999", true},          {"2065=I49-9999", true}, {"", false},
        {"2065=I49--1070", false}, {"2065=I49-", false},    {"Hx_2065=I49", false},
        {"H_2065=I49", false},   {"2065=", false},        {"206=I49", false},
        {"1070", false},         {"2065=I49-1070-1050", false}, {"2065=I49-1060", false},
        {"2065=I49-1033-1070", false}, {"2065=I49-abc", false},
    };
    return codes;
}

inline kdfe::dsl::Selector random_selector(std::mt19937 &rng) {
    static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_,.";
    kdfe::dsl::Selector s;
    s.concept_id = 1000 + static_cast<int>(rng() % 9000);
    if (rng() % 3 == 0) {
        s.hierarchy_level = static_cast<int>(rng() % 12);
    }
    if (rng() % 5 == 0) {
        s.value = "ALL";
    } else {
        const auto len = 1 + rng() % 8;
        for (std::size_t i = 0; i < len; ++i) {
            s.value += alphabet[rng() % alphabet.size()];
        }
    }
    return s;
}

/// Valid by construction: starts with a selector, reducers follow
/// selectors, 1030/1033 only last, never ends on a reducer.
inline std::vector<kdfe::dsl::Term> random_terms(std::mt19937 &rng) {
    using namespace kdfe::dsl;
    std::vector<Term> terms{random_selector(rng)};
    const auto extra = rng() % 7;
    for (std::size_t i = 0; i < extra; ++i) {
        const bool after_selector = std::holds_alternative<Selector>(terms.back());
        const auto pick = rng() % 4;
        if (pick == 0) {
            terms.push_back(random_selector(rng));
        } else if (pick == 1 && after_selector) {
            terms.push_back(Operator{rng() % 2 ? Opcode::FirstEvent : Opcode::LastEvent});
        } else {
            terms.push_back(Operator{rng() % 2 ? Opcode::HaveObservation : Opcode::NumberOfObservations});
        }
    }
    const auto tail = rng() % 4;
    if (tail == 1) {
        terms.push_back(Operator{Opcode::DaysBetween});
    } else if (tail == 2) {
        terms.push_back(Operator{Opcode::DaysBeforeDate});
    } else if (auto *op = std::get_if<Operator>(&terms.back()); op && is_reducer(op->opcode)) {
        terms.push_back(Operator{Opcode::NumberOfObservations});
    }
    return terms;
}

} // namespace testing::codes
