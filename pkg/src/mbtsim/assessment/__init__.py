"""Competency assessment: objective registry, run metrics, grading and aggregation."""
from .forms import (
    decision_to_markdown,
    form_from_dict,
    form_to_dict,
    form_to_json,
    form_to_markdown,
    ingest_human_form,
)
from .grading import (
    FAIL,
    GRADED,
    PASS,
    SATISFACTORY,
    UNSATISFACTORY,
    AssessorDecision,
    CompetencyGrade,
    GradingForm,
    Level,
    RubricConfig,
    assess,
    grade_run,
    run_summative,
)
from .metrics import MetricsConfig, RunMetrics, TruncatedLogError, extract_metrics
from .registry import (
    ObjectiveNotFound,
    ObjectiveRecord,
    RegistryError,
    coverage_report,
    load_registry,
    lookup,
    scope_counts,
)

__all__ = [
    "decision_to_markdown", "form_from_dict", "form_to_dict", "form_to_json", "form_to_markdown",
    "ingest_human_form",
    "FAIL", "GRADED", "PASS", "SATISFACTORY", "UNSATISFACTORY", "AssessorDecision", "CompetencyGrade",
    "GradingForm", "Level", "RubricConfig", "assess", "grade_run", "run_summative",
    "MetricsConfig", "RunMetrics", "TruncatedLogError", "extract_metrics",
    "ObjectiveNotFound", "ObjectiveRecord", "RegistryError", "coverage_report", "load_registry", "lookup",
    "scope_counts",
]
