"""Grouped cross-validation and grid search for the classifiers."""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import classify
from ..errors import GraphNetError, ParameterError, PlanError, ShapeError
from ..tensor_io import write_vector
from .criteria import exact_binomial_pvalue, median_aggregate


@dataclass(frozen=True)
class CvPlan:
    scheme: str
    k: int
    folds: tuple  # ((train_groups, test_groups), ...)
    seed: int

    def __len__(self):
        return len(self.folds)


def make_cv_plan(group_ids, k: int = 1, n_folds: int | None = None, seed: int = 0) -> CvPlan:
    """Leave-``k``-groups-out folds.

    ``k = 1`` holds out every group once.  For ``k > 1``, ``n_folds``
    (default 25) distinct random ``k``-subsets are drawn; folds may share
    groups.
    """
    groups = np.unique(np.asarray(group_ids).ravel())
    g = groups.size
    if k < 1:
        raise PlanError("k must be at least 1")
    if g < k + 1:
        raise PlanError(f"need more than {k} groups to hold out {k}, found {g}")
    if k == 1:
        tests = [(grp,) for grp in groups]
    else:
        n_folds = 25 if n_folds is None else int(n_folds)
        if n_folds > math.comb(g, k):
            raise PlanError(f"only {math.comb(g, k)} distinct {k}-subsets of {g} groups exist")
        rng = np.random.default_rng(seed)
        seen, tests = set(), []
        while len(tests) < n_folds:
            pick = tuple(sorted(rng.choice(groups, size=k, replace=False).tolist()))
            if pick not in seen:
                seen.add(pick)
                tests.append(pick)
    folds = []
    for test in tests:
        test = tuple(t.item() if hasattr(t, "item") else t for t in test)
        train = tuple(grp.item() for grp in groups if grp not in test)
        folds.append((train, test))
    scheme = "leave-one-group-out" if k == 1 else f"leave-{k}-groups-out"
    return CvPlan(scheme, int(k), tuple(folds), int(seed))


@dataclass(frozen=True)
class GridPoint:
    """One tuning setting.

    The quadratic penalty is ``lambdaG * (G + shift * eta * I)`` with
    ``eta = 1 / lambdaG`` (so ``shift`` is an absolute ridge level when
    ``lambdaG > 0``, and has no effect when ``lambdaG = 0``).
    """

    lambda1: float
    lambdaG: float = 0.0
    shift: float = 0.0
    delta: float = 1.0
    lambda1_star: float = 1.0


GRID_LAMBDA1 = tuple(float(v) for v in range(10, 100))
GRID_LAMBDAG = (0.0, 1e1, 1e2, 1e3, 1e4, 1e5)
GRID_SHIFTS = (0.0, 1.0, 1e2, 1e3, 1e4)
GRID_DELTAS = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0, 2.0, 10.0, 100.0)
GRID_LAMBDA1_STAR = (1.0, 0.1, 0.01)


def full_grid() -> list:
    """Full tuning-grid preset (90 x 5 x 6 x 10 x 3 points)."""
    return [GridPoint(l1, lg, s, d, ls) for l1, s, lg, d, ls in itertools.product(
        GRID_LAMBDA1, GRID_SHIFTS, GRID_LAMBDAG, GRID_DELTAS, GRID_LAMBDA1_STAR)]


def _ridge(point: GridPoint, variant: str) -> tuple:
    """``(lambdaG, lambda2)`` of the effective quadratic penalty."""
    if variant == "lasso" or point.lambdaG == 0:
        return 0.0, 0.0
    if variant in ("elastic-net", "linear-svm-baseline"):
        return 0.0, point.lambdaG + point.shift
    return point.lambdaG, point.shift


def _effective_key(point: GridPoint, variant: str) -> tuple:
    """Settings that actually change the fit; grid points sharing a key share a fit."""
    lg, l2 = _ridge(point, variant)
    uses_delta = variant in ("robust", "adaptive-robust", "svgn", "linear-svm-baseline")
    uses_star = variant.startswith("adaptive")
    l1 = 0.0 if variant == "linear-svm-baseline" else point.lambda1
    return (lg, l2, point.delta if uses_delta else None,
            point.lambda1_star if uses_star else None), l1


def _spec_for(key, lambda1, variant, p, graph, options):
    lg, l2, delta, star = key
    return classify.variant_spec(
        variant, p, lambda1, lambdaG=lg, lambda2=l2, graph=graph,
        delta=1.0 if delta is None else delta, lambda1_star=star,
        tol=options["tol"], max_sweeps=options["max_sweeps"], density_cap=options["density_cap"])


@dataclass
class CvReport:
    plan: CvPlan
    variant: str
    grid: list  # one dict per grid point, in grid order
    best: GridPoint
    folds: list  # per-fold dicts for the best point
    median_test_acc: float
    median_beta: np.ndarray
    median_threshold: float
    oos: dict | None = None
    settings: dict = field(default_factory=dict)

    @property
    def rate_surface(self) -> list:
        return [(g["lambda1"], g["lambdaG"], g["shift"], g["delta"], g["lambda1_star"], g["median_rate"])
                for g in self.grid]

    def to_dict(self, median_beta_file: str | None = None) -> dict:
        return {
            "scheme": self.plan.scheme,
            "k": self.plan.k,
            "seed": self.plan.seed,
            "variant": self.variant,
            "settings": self.settings,
            "fold": [{"fold": i, "train_groups": list(f["train_groups"]), "test_groups": list(f["test_groups"])}
                     for i, f in enumerate(self.folds)],
            "train_acc": [f["train_acc"] for f in self.folds],
            "train_acc_raw": [f["train_acc_raw"] for f in self.folds],
            "test_acc": [f["test_acc"] for f in self.folds],
            "median_test_acc": self.median_test_acc,
            "best": asdict(self.best),
            "median_threshold": self.median_threshold,
            "grid": self.grid,
            "median_beta_file": median_beta_file,
            "oos": self.oos,
        }

    def to_json(self, median_beta_file: str | None = None) -> str:
        return json.dumps(_jsonable(self.to_dict(median_beta_file)), sort_keys=True, indent=1) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fold_rows(groups, fold, labels, resample, per_class, seed, index):
    train_groups, test_groups = fold
    train_rows = np.flatnonzero(np.isin(groups, train_groups))
    test_rows = np.flatnonzero(np.isin(groups, test_groups))
    if resample:
        picked = classify.balanced_resample(labels[train_rows], groups[train_rows],
                                            per_class=per_class, seed=[seed, index])
        fit_rows = train_rows[picked]
    else:
        fit_rows = train_rows
    return fit_rows, train_rows, test_rows


def grid_search(X, y, groups, plan: CvPlan, grid, variant: str = "graphnet", graph=None,
                resample: bool = True, per_class: int = 40, threads: int | None = 1,
                tol: float = 1e-6, max_sweeps: int = 10000, density_cap: float = 1.0,
                X_oos=None, y_oos=None, oos_seed: int = 0) -> CvReport:
    """Cross-validated accuracy of every grid point.

    Each fold fits on the (optionally class-balanced, resampled) training
    groups and scores the raw held-out groups.  Points that share an
    effective penalty are fitted once; points differing only in ``lambda1``
    form a warm-started path.  A failing fit marks its point with an
    ``error`` entry and a ``nan`` rate instead of stopping the search.
    """
    grid = list(grid)
    if not grid:
        raise ParameterError("grid is empty")
    if variant not in classify.VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    groups = np.asarray(groups).ravel()
    if not (X.shape[0] == y.size == groups.size):
        raise ShapeError("X, y and groups disagree on the number of rows")
    p = X.shape[1]
    options = {"tol": tol, "max_sweeps": max_sweeps, "density_cap": density_cap}

    # effective settings -> descending unique lambda1 values
    paths: dict = {}
    where = []
    for point in grid:
        key, l1 = _effective_key(point, variant)
        paths.setdefault(key, set()).add(l1)
        where.append((key, l1))
    paths = {key: sorted(l1s, reverse=True) for key, l1s in paths.items()}
    keys = list(paths)

    rows = [_fold_rows(groups, fold, y, resample, per_class, plan.seed, i)
            for i, fold in enumerate(plan.folds)]

    def run(item):
        fi, key = item
        fit_rows, train_rows, test_rows = rows[fi]
        specs = [_spec_for(key, l1, variant, p, graph, options) for l1 in paths[key]]
        try:
            models = classify.fit_classifier_path(X[fit_rows], y[fit_rows], specs, variant, strict=False)
        except GraphNetError as exc:
            models = [exc] * len(specs)
        out = {}
        for l1, m in zip(paths[key], models):
            if isinstance(m, Exception):
                out[l1] = {"error": f"{type(m).__name__}: {m}"}
            else:
                out[l1] = {
                    "train_acc": m.train_accuracy,
                    "train_acc_raw": classify.accuracy(m, X[train_rows], y[train_rows]),
                    "test_acc": classify.accuracy(m, X[test_rows], y[test_rows]),
                }
        return out

    items = [(fi, key) for fi in range(len(plan.folds)) for key in keys]
    workers = threads if threads else (os.cpu_count() or 1)
    if workers <= 1:
        results = [run(it) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, items))
    table = {it: res for it, res in zip(items, results)}

    surface = []
    best_i, best_rate = None, -np.inf
    for i, (point, (key, l1)) in enumerate(zip(grid, where)):
        per_fold = [table[(fi, key)][l1] for fi in range(len(plan.folds))]
        errors = [r["error"] for r in per_fold if "error" in r]
        entry = asdict(point)
        if errors:
            entry["median_rate"] = float("nan")
            entry["error"] = errors[0]
        else:
            entry["median_rate"] = float(np.median([r["test_acc"] for r in per_fold]))
            if entry["median_rate"] > best_rate:
                best_i, best_rate = i, entry["median_rate"]
        surface.append(entry)
    if best_i is None:
        raise GraphNetError("every grid point failed: " + surface[0].get("error", "unknown error"))

    # refit the winning path prefix per fold to recover coefficients
    best = grid[best_i]
    key, l1 = where[best_i]
    prefix = [v for v in paths[key] if v >= l1]
    folds, betas, thresholds = [], [], []
    for fi, fold in enumerate(plan.folds):
        fit_rows, train_rows, test_rows = rows[fi]
        specs = [_spec_for(key, v, variant, p, graph, options) for v in prefix]
        model = classify.fit_classifier_path(X[fit_rows], y[fit_rows], specs, variant)[-1]
        betas.append(model.beta)
        thresholds.append(model.threshold)
        r = table[(fi, key)][l1]
        folds.append({"train_groups": fold[0], "test_groups": fold[1], **r})
    median_beta = median_aggregate(betas)
    report = CvReport(
        plan=plan, variant=variant, grid=surface, best=best, folds=folds,
        median_test_acc=best_rate, median_beta=median_beta,
        median_threshold=float(np.median(thresholds)),
        settings={"resample": resample, "per_class": per_class, "tol": tol,
                  "max_sweeps": max_sweeps, "density_cap": density_cap},
    )
    if X_oos is not None:
        report.oos = evaluate_oos(median_beta, report.median_threshold, X_oos, y_oos, seed=oos_seed)
    return report


def evaluate_oos(beta, threshold, X, y, seed: int = 0, downsample: bool = True) -> dict:
    """Accuracy and exact binomial p-value of a fixed linear rule on an external set.

    The majority class is downsampled to the minority count first.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    if X.shape[1] != beta.size:
        raise ShapeError(f"model expects {beta.size} features, got {X.shape[1]}")
    rows = classify.downsample_majority(y, seed) if downsample else np.arange(y.size)
    pred = np.where(X[rows] @ beta >= threshold, 1.0, -1.0)
    correct = int(np.sum(pred == y[rows]))
    return {"n": int(rows.size), "correct": correct, "accuracy": correct / rows.size,
            "p_value": exact_binomial_pvalue(correct, int(rows.size))}


def write_rate_surface(report: CvReport, path):
    """CSV of ``lambda1, lambdaG, shift, delta, lambda1_star, median_rate``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda1", "lambdaG", "shift", "delta", "lambda1_star", "median_rate"])
        for row in report.rate_surface:
            w.writerow([repr(float(v)) for v in row])


def write_report(report: CvReport, out_dir, prefix: str = "cv"):
    """Write ``<prefix>_report.json``, ``<prefix>_rate_surface.csv`` and ``<prefix>_median_beta.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    beta_name = f"{prefix}_median_beta.csv"
    write_vector(report.median_beta, os.path.join(out_dir, beta_name))
    write_rate_surface(report, os.path.join(out_dir, f"{prefix}_rate_surface.csv"))
    with open(os.path.join(out_dir, f"{prefix}_report.json"), "w") as fh:
        fh.write(report.to_json(beta_name))
