#pragma once

namespace kdfe::concepts {

// 4-digit concept type ids used by the synthetic generator, the default
// DSL registry and the risk annotator.
inline constexpr int kDiagnosis = 2060;
inline constexpr int kVentricularArrhythmia = 2065;
inline constexpr int kAllDiagnosis = 2105;
inline constexpr int kHospitalization = 2020;
inline constexpr int kJanusmedRiskLevel = 2006;
inline constexpr int kRouteOfAdministration = 2007;
inline constexpr int kDrugDispensation = 3010;
inline constexpr int kDrugAdministration = 3011;

constexpr bool is_diagnosis(int concept_id) noexcept {
    return concept_id == kDiagnosis || concept_id == kVentricularArrhythmia;
}

/// Dispensation at a pharmacy or administration in a care setting.
constexpr bool is_medication_handling(int concept_id) noexcept {
    return concept_id == kDrugDispensation || concept_id == kDrugAdministration;
}

} // namespace kdfe::concepts
