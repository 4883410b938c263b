"""Problem and result containers shared by the solver, losses and oracles.

Penalty convention used throughout the package: for a squared loss the
minimised objective is

    1/2 ||y - X b||^2 + (lambdaG / 2) b' G b + (lambda2 / 2) ||b||^2
        + (lambda1 / 2) sum_j w_j |b_j|

i.e. half of the classical ``||y - Xb||^2 + lambda1 |b|_1 + lambdaG b'Gb``
form, so soft-thresholding happens at ``lambda1 / 2`` and the null model
holds for ``lambda1 >= 2 max_j |X_j' y|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .graph import PenaltyGraph, zero_graph


@dataclass(frozen=True)
class LossKind:
    tag: str = "squared"
    delta: float | None = None

    def __post_init__(self):
        if self.tag not in ("squared", "huber", "hinge"):
            raise ParameterError(f"unknown loss {self.tag!r}")
        if self.tag != "squared" and not (self.delta is not None and self.delta > 0):
            raise ParameterError(f"{self.tag} loss needs delta > 0")

    @classmethod
    def squared(cls):
        return cls("squared")

    @classmethod
    def huber(cls, delta):
        return cls("huber", float(delta))

    @classmethod
    def hinge(cls, delta):
        """Huberized hinge loss with knee ``delta``."""
        return cls("hinge", float(delta))


@dataclass(frozen=True, eq=False)
class FitSpec:
    """Everything needed to define one penalised problem (or a lambda1 path).

    ``adaptive_weights`` multiplies the l1 level per coordinate; ``inf``
    marks a coordinate that is excluded from the model.  When weights are
    present the l1 level is ``lambda1_star`` if given, else ``lambda1``.
    """

    loss: LossKind = field(default_factory=LossKind.squared)
    lambda1: float = 0.0
    path: tuple | None = None
    lambda2: float = 0.0
    lambdaG: float = 0.0
    graph: PenaltyGraph | None = None
    adaptive_weights: np.ndarray | None = None
    lambda1_star: float | None = None
    with_intercept: bool = False
    tol: float = 1e-6
    max_sweeps: int = 10000
    density_cap: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambdaG"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.lambda1_star is not None and self.lambda1_star < 0:
            raise ParameterError("lambda1_star must be non-negative")
        if self.path is not None:
            path = tuple(float(v) for v in self.path)
            if any(v < 0 for v in path):
                raise ParameterError("lambda1 path values must be non-negative")
            if any(b >= a for a, b in zip(path, path[1:])):
                raise ParameterError("lambda1 path must be strictly descending")
            object.__setattr__(self, "path", path)
        if self.adaptive_weights is not None:
            w = np.asarray(self.adaptive_weights, dtype=float)
            if np.any(~(w > 0)):
                raise ParameterError("adaptive weights must be positive")
            object.__setattr__(self, "adaptive_weights", w)
        if self.tol <= 0:
            raise ParameterError("tol must be positive")
        if not 0 <= self.density_cap <= 1:
            raise ParameterError("density_cap must lie in [0, 1]")

    @property
    def l1_level(self) -> float:
        if self.adaptive_weights is not None and self.lambda1_star is not None:
            return self.lambda1_star
        return self.lambda1

    def l1_weights(self, p: int) -> np.ndarray:
        """Per-coordinate threshold ``(level / 2) * w_j`` (``inf`` = excluded)."""
        level = self.l1_level / 2.0
        if self.adaptive_weights is None:
            return np.full(p, level)
        w = self.adaptive_weights
        if w.shape != (p,):
            raise ParameterError(f"adaptive weights must have length {p}")
        with np.errstate(invalid="ignore"):
            out = level * w
        out[np.isinf(w)] = np.inf
        return out

    def graph_for(self, p: int) -> PenaltyGraph:
        return self.graph if self.graph is not None else zero_graph(p)

    def at(self, lambda1: float) -> "FitSpec":
        """Copy with a single lambda1 (the l1 level of an adaptive fit)."""
        if self.adaptive_weights is not None and self.lambda1_star is not None:
            return replace(self, lambda1_star=float(lambda1), path=None)
        return replace(self, lambda1=float(lambda1), path=None)


@dataclass(eq=False)
class FitResult:
    beta: np.ndarray
    alpha: np.ndarray | None = None
    intercept: float = 0.0
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    sweeps: int = 0
    converged: bool = False
    status: str = "converged"
    lambda1: float = 0.0
    kkt: float = np.nan
    df: float | None = None
    aic: float | None = None
    bic: float | None = None
    kappa: float | None = None

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1]) if self.objective_trace.size else np.nan
