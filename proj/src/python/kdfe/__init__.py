"""aKDFE feature engineering and evaluation engine."""

from ._kdfe import (
    KdfeError,
    ValidationError,
    anova_f,
    auroc,
    build_features,
    compute_metrics,
    describe_feature,
    evaluate_feature,
    parse_feature_code,
    pearson,
    render_feature_code,
    report,
    risk_level,
    run_experiments,
    synth,
    test_hypotheses,
)

__all__ = [
    "KdfeError",
    "ValidationError",
    "anova_f",
    "auroc",
    "build_features",
    "compute_metrics",
    "describe_feature",
    "evaluate_feature",
    "parse_feature_code",
    "pearson",
    "render_feature_code",
    "report",
    "risk_level",
    "run_experiments",
    "synth",
    "test_hypotheses",
]
