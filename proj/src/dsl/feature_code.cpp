#include "kdfe/dsl/feature_code.hpp"

#include "kdfe/error.hpp"

#include <algorithm>
#include <cstdio>

namespace kdfe::dsl {

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

int to_int(std::string_view s) {
    int v = 0;
    for (char c : s) {
        v = v * 10 + (c - '0');
    }
    return v;
}

Selector parse_selector(std::string_view seg, std::string_view whole) {
    const auto eq = seg.find('=');
    auto lhs = seg.substr(0, eq);
    auto value = seg.substr(eq + 1);
    Selector s;
    if (!lhs.empty() && lhs[0] == 'H') {
        const auto us = lhs.find('_');
        if (us == std::string_view::npos) {
            throw SyntaxError("malformed hierarchy prefix in '" + std::string{seg} + "' of '" +
                              std::string{whole} + "'");
        }
        auto level = lhs.substr(1, us - 1);
        if (!all_digits(level) || (level.size() > 1 && level[0] == '0') || level.size() > 6) {
            throw SyntaxError("malformed hierarchy prefix in '" + std::string{seg} + "' of '" +
                              std::string{whole} + "'");
        }
        s.hierarchy_level = to_int(level);
        lhs = lhs.substr(us + 1);
    }
    if (lhs.size() != 4 || !all_digits(lhs)) {
        throw SyntaxError("concept id must be 4 digits in '" + std::string{seg} + "' of '" +
                          std::string{whole} + "'");
    }
    if (value.empty()) {
        throw SyntaxError("empty selector value in '" + std::string{seg} + "' of '" +
                          std::string{whole} + "'");
    }
    s.concept_id = to_int(lhs);
    s.value = std::string{value};
    return s;
}

} // namespace

std::optional<Opcode> opcode_from_int(int code) noexcept {
    for (auto op : kAllOpcodes) {
        if (static_cast<int>(op) == code) {
            return op;
        }
    }
    return std::nullopt;
}

std::size_t FeatureExpr::selector_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(terms.begin(), terms.end(), [](const Term &t) {
        return std::holds_alternative<Selector>(t);
    }));
}

FeatureExpr FeatureExpr::leading_selectors() const {
    std::vector<Term> lead;
    for (const auto &t : terms) {
        if (!std::holds_alternative<Selector>(t)) {
            break;
        }
        lead.push_back(t);
    }
    return make_expr(std::move(lead));
}

void validate_structure(const FeatureExpr &e) {
    const auto text = render_feature_code(e);
    if (e.terms.empty()) {
        throw SyntaxError("empty feature code");
    }
    if (!std::holds_alternative<Selector>(e.terms.front())) {
        throw SyntaxError("feature code must start with a selector: '" + text + "'");
    }
    for (std::size_t i = 0; i < e.terms.size(); ++i) {
        const auto *op = std::get_if<Operator>(&e.terms[i]);
        if (!op) {
            continue;
        }
        const bool last = i + 1 == e.terms.size();
        if (is_reducer(op->opcode) && !std::holds_alternative<Selector>(e.terms[i - 1])) {
            throw SyntaxError("reducer " + std::to_string(static_cast<int>(op->opcode)) +
                              " must follow a selector in '" + text + "'");
        }
        if ((op->opcode == Opcode::DaysBetween || op->opcode == Opcode::DaysBeforeDate) && !last) {
            throw SyntaxError("operator " + std::to_string(static_cast<int>(op->opcode)) +
                              " must end the feature code '" + text + "'");
        }
        if (last && is_reducer(op->opcode)) {
            throw SyntaxError("feature code cannot end with reducer " +
                              std::to_string(static_cast<int>(op->opcode)) + ": '" + text + "'");
        }
    }
}

FeatureExpr parse_feature_code(std::string_view text) {
    if (text.empty()) {
        throw SyntaxError("empty feature code");
    }
    FeatureExpr e;
    e.source_text = std::string{text};
    std::size_t pos = 0;
    while (true) {
        const auto dash = text.find('-', pos);
        auto seg = text.substr(pos, dash == std::string_view::npos ? std::string_view::npos : dash - pos);
        if (seg.empty()) {
            throw SyntaxError("empty segment in feature code '" + std::string{text} + "'");
        }
        if (seg.find('=') != std::string_view::npos) {
            e.terms.emplace_back(parse_selector(seg, text));
        } else if (all_digits(seg)) {
            const auto op = seg.size() == 4 ? opcode_from_int(to_int(seg)) : std::nullopt;
            if (!op) {
                throw UnknownOpcodeError("unknown operator code '" + std::string{seg} +
                                         "' in '" + std::string{text} + "'");
            }
            e.terms.emplace_back(Operator{*op});
        } else {
            throw SyntaxError("segment '" + std::string{seg} +
                              "' is neither a selector nor an operator code");
        }
        if (dash == std::string_view::npos) {
            break;
        }
        pos = dash + 1;
    }
    validate_structure(e);
    return e;
}

std::string render_term(const Term &t) {
    if (const auto *s = std::get_if<Selector>(&t)) {
        char concept_text[16];
        std::snprintf(concept_text, sizeof concept_text, "%04d", s->concept_id);
        std::string out;
        if (s->hierarchy_level) {
            out += "H" + std::to_string(*s->hierarchy_level) + "_";
        }
        out += concept_text;
        out += "=";
        out += s->value;
        return out;
    }
    return std::to_string(static_cast<int>(std::get<Operator>(t).opcode));
}

std::string render_feature_code(const FeatureExpr &e) {
    std::string out;
    for (std::size_t i = 0; i < e.terms.size(); ++i) {
        if (i) {
            out += '-';
        }
        out += render_term(e.terms[i]);
    }
    return out;
}

FeatureExpr make_expr(std::vector<Term> terms) {
    FeatureExpr e;
    e.terms = std::move(terms);
    for (const auto &t : e.terms) {
        if (const auto *s = std::get_if<Selector>(&t)) {
            if (s->value.empty() || s->value.find('-') != std::string::npos) {
                throw SyntaxError("selector value must be non-empty and free of '-'");
            }
        }
    }
    validate_structure(e);
    e.source_text = render_feature_code(e);
    return e;
}

} // namespace kdfe::dsl
