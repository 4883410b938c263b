"""Binary classifiers built on the regression engine.

Optimal-scoring classifiers (SPDA) regress two-point class scores on the
centred, unit-norm columns of ``X`` and cut the fitted scores at the
midpoint of the two class means.  SVGN fits the huberized hinge directly
with an unpenalised intercept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import solver
from .errors import (
    DegenerateColumnError,
    FormatError,
    LabelError,
    ParameterError,
    ResampleError,
    ShapeError,
)
from .graph import identity_graph
from .problem import FitResult, FitSpec, LossKind

SPDA_VARIANTS = ("graphnet", "robust", "adaptive", "adaptive-robust", "lasso", "elastic-net")
VARIANTS = SPDA_VARIANTS + ("svgn", "linear-svm-baseline")


@dataclass(frozen=True, eq=False)
class ScoredTargets:
    indicator: np.ndarray
    theta: np.ndarray
    scored: np.ndarray


def _as_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=float).ravel()
    classes = np.unique(y)
    if not set(classes.tolist()) <= {-1.0, 1.0}:
        raise LabelError("labels must be -1 or +1")
    if classes.size < 2:
        raise LabelError("labels contain a single class")
    return y


def optimal_scores(labels) -> ScoredTargets:
    """Two-point scores with mean zero and mean square one.

    Column 0 of the indicator is the ``-1`` class and column 1 the ``+1``
    class; ``theta = (-sqrt(n+/n-), sqrt(n-/n+))``.
    """
    y = _as_labels(labels)
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    indicator = np.column_stack([~pos, pos]).astype(float)
    theta = np.array([-math.sqrt(n_pos / n_neg), math.sqrt(n_neg / n_pos)])
    return ScoredTargets(indicator, theta, indicator @ theta)


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    """Fitted linear rule ``label = +1 if x'beta >= threshold else -1``.

    ``beta`` is on the original feature scale; ``column_means`` and
    ``column_norms`` record the training standardization.
    """

    variant: str
    beta: np.ndarray
    threshold: float
    column_norms: np.ndarray
    column_means: np.ndarray
    params: dict = field(default_factory=dict)
    train_accuracy: float = float("nan")
    status: str = "converged"
    fit: FitResult | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return int(self.beta.size)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.p:
            raise ShapeError(f"model expects {self.p} features, got {X.shape[1]}")
        return X @ self.beta

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= self.threshold, 1.0, -1.0)


def predict(model: ClassifierModel, X):
    """Return ``(labels, decision_values)``."""
    d = model.decision_function(X)
    return np.where(d >= model.threshold, 1.0, -1.0), d


def accuracy(model: ClassifierModel, X, labels) -> float:
    labels = np.asarray(labels, dtype=float).ravel()
    if labels.size == 0:
        raise ShapeError("no rows to score")
    return float(np.mean(model.predict(X) == labels))


def _standardize_centered(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("X must be two-dimensional")
    mu = X.mean(axis=0)
    Xc = X - mu
    norms = np.linalg.norm(Xc, axis=0)
    zero = np.flatnonzero(norms <= 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0))))
    if zero.size:
        raise DegenerateColumnError(f"column {int(zero[0])} is constant")
    return Xc / norms, mu, norms


def variant_spec(variant: str, p: int, lambda1: float, lambdaG: float = 0.0, lambda2: float = 0.0,
                 graph=None, delta: float = 1.0, lambda1_star: float | None = None,
                 tol: float = 1e-6, max_sweeps: int = 10000, density_cap: float = 1.0) -> FitSpec:
    """Build the :class:`FitSpec` a classifier variant runs on."""
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    if variant in ("robust", "adaptive-robust"):
        loss = LossKind.huber(delta)
    elif variant in ("svgn", "linear-svm-baseline"):
        loss = LossKind.hinge(delta)
    else:
        loss = LossKind.squared()
    if variant == "lasso":
        lambdaG, lambda2, graph = 0.0, 0.0, None
    elif variant in ("elastic-net", "linear-svm-baseline"):
        lambdaG, graph = 0.0, None
    if variant == "linear-svm-baseline":
        lambda1 = 0.0
        lambda2 = lambda2 if lambda2 > 0 else 1.0
    if graph is None:
        graph = identity_graph(p)
    return FitSpec(loss=loss, lambda1=float(lambda1), lambda2=float(lambda2), lambdaG=float(lambdaG),
                   graph=graph, lambda1_star=lambda1_star,
                   with_intercept=variant in ("svgn", "linear-svm-baseline"),
                   tol=tol, max_sweeps=max_sweeps, density_cap=density_cap)


def model_params(spec: FitSpec) -> dict:
    return {
        "lambda1": spec.lambda1,
        "lambdaG": spec.lambdaG,
        "lambda2": spec.lambda2,
        "delta": spec.loss.delta if spec.loss.delta is not None else float("nan"),
        "lambda1_star": spec.lambda1_star if spec.lambda1_star is not None else float("nan"),
    }


def _check_variant(spec: FitSpec, variant: str):
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    if variant in ("robust", "adaptive-robust"):
        want = "huber"
    elif variant in ("svgn", "linear-svm-baseline"):
        want = "hinge"
    else:
        want = "squared"
    if spec.loss.tag != want:
        raise ParameterError(f"variant {variant!r} needs a {want!r} loss, got {spec.loss.tag!r}")


@dataclass(frozen=True, eq=False)
class Prepared:
    """Training data as seen by the regression engine."""

    Xs: np.ndarray
    target: np.ndarray
    labels: np.ndarray
    means: np.ndarray
    norms: np.ndarray
    hinge: bool


def prepare(X, labels, variant: str) -> Prepared:
    """Centre and scale ``X`` and build the engine target for ``variant``."""
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    y = _as_labels(labels)
    Xs, mu, norms = _standardize_centered(X)
    if Xs.shape[0] != y.size:
        raise ShapeError(f"labels have {y.size} entries but X has {Xs.shape[0]} rows")
    hinge = variant in ("svgn", "linear-svm-baseline")
    target = y if hinge else optimal_scores(y).scored
    return Prepared(Xs, target, y, mu, norms, hinge)


def fit_classifier_path(X, labels, specs, variant: str, strict: bool = True) -> list:
    """Fit one classifier per spec, warm-starting each solve from the previous one.

    Specs are best ordered by decreasing ``lambda1``.  With ``strict=False`` a
    failing spec yields its exception in the output list instead of
    aborting the path.
    """
    prep = prepare(X, labels, variant)
    specs = list(specs)
    for spec in specs:
        _check_variant(spec, variant)
    specs = [replace(s, with_intercept=prep.hinge) for s in specs]
    fits = solver.fit_variant_path(prep.Xs, prep.target, specs, variant.startswith("adaptive"), strict)
    out = []
    for spec, res in zip(specs, fits):
        if isinstance(res, Exception):
            out.append(res)
            continue
        beta = res.beta / prep.norms
        if prep.hinge:
            threshold = float(prep.means @ beta - res.intercept)
            name = variant
        else:
            fitted = prep.Xs @ res.beta
            y = prep.labels
            cut = 0.5 * (fitted[y > 0].mean() + fitted[y < 0].mean())
            threshold = float(cut + prep.means @ beta)
            name = f"spda-{variant}"
        model = ClassifierModel(name, beta, threshold, prep.norms, prep.means, model_params(spec),
                                status=res.status, fit=res)
        out.append(replace(model, train_accuracy=accuracy(model, X, prep.labels)))
    return out


def fit_spda(X, labels, spec: FitSpec, variant: str = "graphnet") -> ClassifierModel:
    """Optimal-scoring classifier on centred, unit-norm columns.

    ``variant`` selects plain, robust (Huber) or adaptive fitting; the loss
    in ``spec`` must agree with it.  The cutoff is the midpoint of the two
    class means of the fitted scores.
    """
    if variant not in SPDA_VARIANTS:
        raise ParameterError(f"{variant!r} is not an optimal-scoring variant")
    return fit_classifier_path(X, labels, [spec], variant)[0]


def fit_svgn_classifier(X, labels, spec: FitSpec, variant: str = "svgn") -> ClassifierModel:
    """Huberized-hinge classifier with an unpenalised intercept."""
    if variant not in ("svgn", "linear-svm-baseline"):
        raise ParameterError(f"{variant!r} is not a hinge variant")
    return fit_classifier_path(X, labels, [spec], variant)[0]


def fit_classifier(X, labels, spec: FitSpec, variant: str) -> ClassifierModel:
    return fit_classifier_path(X, labels, [spec], variant)[0]


# -------------------------------------------------------------- resampling


def balanced_resample(labels, group_ids, per_subject: int = 80, per_class: int | None = None,
                      seed=0) -> np.ndarray:
    """Row indices with exactly ``per_class`` rows of each class per group.

    A class with at least ``per_class`` rows in a group is sampled without
    replacement, otherwise with replacement.  Groups are visited in sorted
    order and a single generator seeded by ``seed`` drives every draw.
    """
    y = np.asarray(labels, dtype=float).ravel()
    g = np.asarray(group_ids).ravel()
    if y.size != g.size:
        raise ShapeError("labels and group_ids differ in length")
    if per_class is None:
        per_class = per_subject // 2
    if per_class <= 0:
        raise ParameterError("per_class must be positive")
    rng = np.random.default_rng(seed)
    out = []
    for group in np.unique(g):
        rows = np.flatnonzero(g == group)
        for cls in (1.0, -1.0):
            pool = rows[y[rows] == cls]
            if pool.size == 0:
                raise ResampleError(f"group {group} has no trials of class {int(cls):+d}")
            out.append(rng.choice(pool, size=per_class, replace=pool.size < per_class))
    return np.concatenate(out)


def downsample_majority(labels, seed: int = 0) -> np.ndarray:
    """Sorted row indices keeping every minority row and an equal-size random majority subset."""
    y = _as_labels(labels)
    pos, neg = np.flatnonzero(y > 0), np.flatnonzero(y < 0)
    small, big = (pos, neg) if pos.size <= neg.size else (neg, pos)
    rng = np.random.default_rng(seed)
    keep = rng.choice(big, size=small.size, replace=False)
    return np.sort(np.concatenate([small, keep]))


# ----------------------------------------------------------- serialization


def _fmt_list(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_model(model: ClassifierModel, path):
    lines = [
        "# graphnet classifier",
        f"variant = {model.variant}",
        f"p = {model.p}",
        f"threshold = {model.threshold!r}",
        f"train_accuracy = {model.train_accuracy!r}",
        f"status = {model.status}",
    ]
    lines += [f"param.{k} = {float(v)!r}" for k, v in sorted(model.params.items())]
    lines += [
        f"column_norms = {_fmt_list(model.column_norms)}",
        f"column_means = {_fmt_list(model.column_means)}",
        "coefficients",
    ]
    lines += [repr(float(b)) for b in model.beta]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> ClassifierModel:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    header = {}
    try:
        start = lines.index("coefficients")
    except ValueError:
        raise FormatError(f"{path}: missing 'coefficients' section") from None
    for ln in lines[:start]:
        if not ln or ln.startswith("#"):
            continue
        key, sep, value = ln.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header line {ln!r}")
        header[key.strip()] = value.strip()
    try:
        p = int(header["p"])
        beta = np.array([float(v) for v in lines[start + 1:] if v])
        norms = np.array([float(v) for v in header["column_norms"].split(",")])
        means = np.array([float(v) for v in header["column_means"].split(",")])
        model = ClassifierModel(
            header["variant"], beta, float(header["threshold"]), norms, means,
            {k[6:]: float(v) for k, v in header.items() if k.startswith("param.")},
            float(header.get("train_accuracy", "nan")),
            header.get("status", "converged"),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad model file ({exc})") from None
    if not beta.size == norms.size == means.size == p:
        raise FormatError(f"{path}: coefficient count does not match p={p}")
    return model
