#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace kdfe::dsl {

enum class Opcode : int {
    DaysBetween = 1030,
    DaysBeforeDate = 1033,
    HaveObservation = 1040,
    FirstEvent = 1050,
    LastEvent = 1060,
    NumberOfObservations = 1070,
};

inline constexpr std::array<Opcode, 6> kAllOpcodes{
    Opcode::DaysBetween,    Opcode::DaysBeforeDate, Opcode::HaveObservation,
    Opcode::FirstEvent,     Opcode::LastEvent,      Opcode::NumberOfObservations,
};

std::optional<Opcode> opcode_from_int(int code) noexcept;
constexpr bool is_reducer(Opcode op) noexcept {
    return op == Opcode::FirstEvent || op == Opcode::LastEvent;
}

/// `[H<level>_]<concept>=<value>`; value "ALL" matches every event of the
/// concept.
struct Selector {
    std::optional<int> hierarchy_level;
    int concept_id{0};
    std::string value;

    bool operator==(const Selector &) const = default;
};

struct Operator {
    Opcode opcode;

    bool operator==(const Operator &) const = default;
};

using Term = std::variant<Selector, Operator>;

/// Parsed compound feature code, e.g. "2007=DF_JM_1-1060-2105=ALL-1050-1030".
struct FeatureExpr {
    std::vector<Term> terms;
    std::string source_text;

    /// Structural equality (source text ignored).
    bool operator==(const FeatureExpr &other) const { return terms == other.terms; }

    std::size_t selector_count() const noexcept;
    /// Leading run of selector terms, as its own expression.
    FeatureExpr leading_selectors() const;
};

FeatureExpr parse_feature_code(std::string_view text);
std::string render_feature_code(const FeatureExpr &e);
std::string render_term(const Term &t);

/// Checks the structural invariants; throws SyntaxError.
void validate_structure(const FeatureExpr &e);

/// Builds an expression from terms, validating and filling source_text.
FeatureExpr make_expr(std::vector<Term> terms);

} // namespace kdfe::dsl
