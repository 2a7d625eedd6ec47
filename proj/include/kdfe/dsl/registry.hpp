#pragma once

#include "kdfe/dsl/feature_code.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kdfe::dsl {

struct OperatorInfo {
    Opcode opcode;
    std::string name;
    std::string description;
    /// "reducer", "scalar", "gate" or "anchor-pair".
    std::string arity;
};

enum class ValueFormat { Text, RiskLevel };

struct ConceptInfo {
    int id{0};
    std::string name;
    std::string description;
    std::string arity{"selector"};
    /// Code prefix length for hierarchy level h (index h).
    std::vector<std::size_t> hierarchy_prefix_lengths;
    /// Member concepts matched by this grouping concept (e.g. "All diagnosis").
    std::vector<int> includes;
    ValueFormat value_format{ValueFormat::Text};
};

class Registry {
  public:
    Registry() = default;

    /// Built-in operator and concept tables.
    static const Registry &builtin();
    static Registry from_json(const nlohmann::json &j);
    static Registry load(const std::string &path);
    nlohmann::json to_json() const;

    void add(OperatorInfo info);
    void add(ConceptInfo info);

    const OperatorInfo *find_operator(Opcode op) const noexcept;
    const ConceptInfo *find_concept(int id) const noexcept;
    /// Throws UnknownConceptError.
    const ConceptInfo &concept_info(int id) const;

    /// Level names, "First parent level" for H0 and so on.
    std::string hierarchy_level_name(int level) const;

    const std::map<int, ConceptInfo> &concepts() const noexcept { return concepts_; }

  private:
    std::map<int, OperatorInfo> operators_;
    std::map<int, ConceptInfo> concepts_;
    std::vector<std::string> level_names_;
};

/// English rendering of a feature code in pipeline order. Throws
/// UnknownConceptError for concepts absent from the registry.
std::string describe_feature(const FeatureExpr &e, const Registry &registry = Registry::builtin());

} // namespace kdfe::dsl
