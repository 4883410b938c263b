"""Model selection: df, information criteria, grouped CV and significance."""

from .criteria import (
    effective_df,
    exact_binomial_pvalue,
    information_criteria,
    median_aggregate,
    rescale,
)

# cv depends on the solver, which itself imports .criteria; load it lazily
_CV_NAMES = {"CvPlan", "CvReport", "GridPoint", "evaluate_oos", "grid_search", "make_cv_plan",
             "full_grid", "write_rate_surface", "write_report"}

__all__ = [
    "effective_df",
    "exact_binomial_pvalue",
    "information_criteria",
    "median_aggregate",
    "rescale",
    *sorted(_CV_NAMES),
]


def __getattr__(name):
    if name in _CV_NAMES:
        from . import cv

        return getattr(cv, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
