"""Command-line interface: ``graphnet {fit,cv,predict,simulate,verify}``.

Every subcommand reads an optional ``key = value`` config file; any key
can also be given as a flag (``--max-sweeps 500`` sets ``max_sweeps``),
and flags win.  Exit codes: 0 success, 2 config error, 3 data error,
4 verification failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import classify, oracle, solver
from .errors import ConfigError, DataError, FormatError, GraphNetError, ParameterError, SpecError, VerificationError
from .graph import identity_graph, laplacian, lattice_laplacian, read_edge_list
from .losses import objective_value
from .modelsel import exact_binomial_pvalue
from .modelsel import cv as cvmod
from .tensor_io import (
    LatticeShape,
    SyntheticSpec,
    generate_synthetic,
    read_coefficient_volume,
    read_matrix,
    read_vector,
    standardize,
    write_coefficient_volume,
    write_matrix,
    write_vector,
)

log = logging.getLogger("graphnet")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3, 4

# ------------------------------------------------------------------ config


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _dims(text):
    dims = tuple(int(v) for v in str(text).replace("x", ",").split(",") if v.strip())
    if len(dims) != 4:
        raise ValueError("need four comma-separated dims nx,ny,nz,nt")
    return dims


def _lambda1(text):
    return "auto" if str(text).strip().lower() == "auto" else _floats(text)


def _threads(text):
    n = int(text)
    if n < 1:
        raise ValueError("threads must be >= 1")
    return n


_COMMON = {
    "format": (str, None),
    "header": (_bool, False),
    "seed": (int, 0),
    "threads": (_threads, None),
    "tol": (float, 1e-6),
    "max_sweeps": (int, 10000),
}
_GRAPH = {
    "graph": (str, "auto"),
    "lattice": (_dims, None),
    "mask": (str, None),
    "edges": (str, None),
}
_PENALTY = {
    "variant": (str, "graphnet"),
    "density_cap": (float, 1.0),
}

KEYS = {
    "fit": {**_COMMON, **_GRAPH, **_PENALTY,
            "data": (str, None), "target": (str, None), "out": (str, None),
            "task": (str, "auto"), "lambda1": (_lambda1, "auto"), "n_lambdas": (int, 30),
            "lambda_ratio": (float, 0.05), "criterion": (str, "bic"),
            "lambdaG": (float, 0.0), "lambda2": (float, 0.0), "delta": (float, 1.0),
            "lambda1_star": (float, None)},
    "cv": {**_COMMON, **_GRAPH, **_PENALTY,
           "data": (str, None), "target": (str, None), "groups": (str, None), "out": (str, None),
           "grid": (str, "custom"), "lambda1": (_floats, (10.0,)), "lambdaG": (_floats, (0.0,)),
           "shift": (_floats, (0.0,)), "delta": (_floats, (1.0,)), "lambda1_star": (_floats, (1.0,)),
           "k": (int, 1), "n_folds": (int, 25), "per_class": (int, 40), "resample": (_bool, True),
           "oos_data": (str, None), "oos_target": (str, None), "prefix": (str, "cv")},
    "predict": {"model": (str, None), "data": (str, None), "target": (str, None), "out": (str, None),
                "format": (str, None), "header": (_bool, False), "downsample": (_bool, False),
                "seed": (int, 0)},
    "simulate": {"lattice": (_dims, None), "n": (int, None), "out": (str, None), "format": (str, "binary"),
                 "blob_count": (int, 2), "blob_radius": (int, 1), "amplitude": (float, 1.0),
                 "noise_sigma": (float, 1.0), "seed": (int, 0), "kind": (str, "continuous"),
                 "n_groups": (int, 1), "blob_time_extent": (int, None)},
    "verify": {"instances": (int, 10), "seed": (int, 0), "tolerance": (float, 1e-4),
               "n_max": (int, 60), "p_max": (int, 30), "out": (str, None)},
}
REQUIRED = {
    "fit": ("data", "target", "out"),
    "cv": ("data", "target", "groups", "out"),
    "predict": ("model", "data"),
    "simulate": ("lattice", "n", "out"),
    "verify": (),
}


def parse_config_text(text: str, command: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in KEYS[command]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} for '{command}'")
        raw[key] = value.strip()
    return raw


def resolve_config(command: str, raw: dict) -> dict:
    """Convert raw strings, fill defaults and check required keys."""
    cfg = {}
    for key, (conv, default) in KEYS[command].items():
        if key in raw and raw[key] is not None:
            try:
                cfg[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
        else:
            cfg[key] = default
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r} for '{command}'")
    return cfg


def load_config(command: str, path: str | None, overrides: dict) -> dict:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = parse_config_text(fh.read(), command)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return resolve_config(command, raw)


# ----------------------------------------------------------------- helpers


def _read_x(cfg, key="data"):
    try:
        return read_matrix(cfg[key], format=cfg.get("format"), header=cfg.get("header", False))
    except FileNotFoundError:
        raise DataError(f"{key}: no such file {cfg[key]}") from None


def _read_y(cfg, key="target", dtype=float):
    try:
        return read_vector(cfg[key], header=cfg.get("header", False), dtype=dtype)
    except FileNotFoundError:
        raise DataError(f"{key}: no such file {cfg[key]}") from None


def _lattice(cfg) -> LatticeShape | None:
    if cfg.get("lattice") is None:
        return None
    mask = None
    if cfg.get("mask"):
        mask = read_coefficient_volume(cfg["mask"]) != 0
    return LatticeShape(cfg["lattice"], mask)


def _graph(cfg, p):
    kind = cfg["graph"]
    shape = _lattice(cfg)
    if kind == "auto":
        kind = "lattice" if shape is not None else ("edges" if cfg.get("edges") else "identity")
    if kind == "lattice":
        if shape is None:
            raise ConfigError("graph = lattice needs the 'lattice' key")
        if shape.p != p:
            raise DataError(f"lattice has {shape.p} features but data has {p} columns")
        return lattice_laplacian(shape)
    if kind == "edges":
        if not cfg.get("edges"):
            raise ConfigError("graph = edges needs the 'edges' key")
        return laplacian(read_edge_list(cfg["edges"], p))
    if kind == "identity":
        return identity_graph(p)
    raise ConfigError(f"unknown graph kind {kind!r}")


def _is_labels(y) -> bool:
    return set(np.unique(y).tolist()) <= {-1.0, 1.0}


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else repr(v) for v in row) + "\n")


# ---------------------------------------------------------------- commands


def cmd_fit(cfg) -> int:
    X = np.asarray(_read_x(cfg), dtype=float)
    y = _read_y(cfg)
    if y.size != X.shape[0]:
        raise DataError(f"target has {y.size} entries but data has {X.shape[0]} rows")
    n, p = X.shape
    variant = cfg["variant"]
    task = cfg["task"]
    if task == "auto":
        task = "classification" if (_is_labels(y) or variant == "svgn") else "regression"
    if task not in ("classification", "regression"):
        raise ConfigError(f"unknown task {task!r}")
    if task == "regression" and variant in ("svgn", "linear-svm-baseline"):
        raise ConfigError(f"variant {variant!r} is a classifier")
    graph = _graph(cfg, p)

    def spec_at(l1):
        return classify.variant_spec(variant, p, l1, lambdaG=cfg["lambdaG"], lambda2=cfg["lambda2"],
                                     graph=graph, delta=cfg["delta"], lambda1_star=cfg["lambda1_star"],
                                     tol=cfg["tol"], max_sweeps=cfg["max_sweeps"],
                                     density_cap=cfg["density_cap"])

    if task == "classification":
        prep = classify.prepare(X, y, variant)
        Xs, target = prep.Xs, prep.target
    else:
        D = standardize(X)
        Xs, target = np.asarray(D.values), y
    lambdas = cfg["lambda1"]
    if lambdas == "auto":
        lmax = solver.lambda_max(Xs, target, spec_at(0.0))
        lambdas = solver.default_path(lmax, cfg["n_lambdas"], cfg["lambda_ratio"])
    lambdas = tuple(sorted(set(lambdas), reverse=True))
    specs = [spec_at(l1) for l1 in lambdas]

    if task == "classification":
        models = classify.fit_classifier_path(X, y, specs, variant)
        fits = [m.fit for m in models]
    else:
        fits = solver.fit_variant_path(Xs, target, specs, variant.startswith("adaptive"))
        models = [classify.ClassifierModel(f"regression-{variant}", r.beta / D.column_norms, float("nan"),
                                           np.asarray(D.column_norms), np.zeros(p), classify.model_params(s),
                                           status=r.status, fit=r)
                  for s, r in zip(specs, fits)]
    rows = []
    for s, r in zip(specs, fits):
        r.df, _, r.aic, r.bic = solver.model_criteria(Xs, target, s, r)
        rows.append((s.lambda1, r.df, r.aic, r.bic, int(np.count_nonzero(r.beta)), r.status))
    crit = cfg["criterion"]
    if crit not in ("aic", "bic"):
        raise ConfigError(f"criterion must be 'aic' or 'bic', got {crit!r}")
    best = fits.index(solver.select(fits, crit)) if len(fits) > 1 else 0
    model, res = models[best], fits[best]

    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    classify.save_model(model, os.path.join(out, "model.txt"))
    write_vector(model.beta, os.path.join(out, "coefficients.csv"))
    _write_csv(os.path.join(out, "trace.csv"), ["step", "objective"],
               [(str(i), float(v)) for i, v in enumerate(res.objective_trace)])
    _write_csv(os.path.join(out, "path.csv"), ["lambda1", "df", "aic", "bic", "nnz", "status"],
               [(float(a), float(b), float(c), float(d), str(e), f) for a, b, c, d, e, f in rows])
    shape = _lattice(cfg)
    if shape is not None:
        write_coefficient_volume(model.beta, shape, os.path.join(out, "coefficients_volume.txt"))
    print(f"variant={model.variant} lambda1={specs[best].lambda1!r} objective={res.objective!r} "
          f"nnz={int(np.count_nonzero(model.beta))} status={res.status} sweeps={res.sweeps}"
          + (f" train_accuracy={model.train_accuracy!r}" if task == "classification" else ""))
    return EXIT_OK


def _cv_grid(cfg):
    if cfg["grid"] == "full":
        return cvmod.full_grid()
    if cfg["grid"] != "custom":
        raise ConfigError(f"grid must be 'full' or 'custom', got {cfg['grid']!r}")
    return [cvmod.GridPoint(l1, lg, s, d, ls)
            for l1 in sorted(cfg["lambda1"], reverse=True) for lg in cfg["lambdaG"]
            for s in cfg["shift"] for d in cfg["delta"] for ls in cfg["lambda1_star"]]


def cmd_cv(cfg) -> int:
    X = np.asarray(_read_x(cfg), dtype=float)
    y = _read_y(cfg)
    groups = _read_y(cfg, "groups", dtype=str)
    if not (y.size == groups.size == X.shape[0]):
        raise DataError("data, target and groups disagree on the number of rows")
    plan = cvmod.make_cv_plan(groups, cfg["k"], cfg["n_folds"], cfg["seed"])
    graph = _graph(cfg, X.shape[1])
    X_oos = y_oos = None
    if cfg["oos_data"]:
        if not cfg["oos_target"]:
            raise ConfigError("missing required key 'oos_target' (oos_data is set)")
        X_oos = np.asarray(_read_x(cfg, "oos_data"), dtype=float)
        y_oos = _read_y(cfg, "oos_target")
    report = cvmod.grid_search(
        X, y, groups, plan, _cv_grid(cfg), cfg["variant"], graph=graph, resample=cfg["resample"],
        per_class=cfg["per_class"], threads=cfg["threads"], tol=cfg["tol"], max_sweeps=cfg["max_sweeps"],
        density_cap=cfg["density_cap"], X_oos=X_oos, y_oos=y_oos, oos_seed=cfg["seed"])
    cvmod.write_report(report, cfg["out"], cfg["prefix"])
    shape = _lattice(cfg)
    if shape is not None:
        write_coefficient_volume(report.median_beta, shape,
                                 os.path.join(cfg["out"], f"{cfg['prefix']}_median_beta_volume.txt"))
    line = (f"folds={len(plan)} median_test_acc={report.median_test_acc!r} "
            f"nnz={int(np.count_nonzero(report.median_beta))}")
    if report.oos is not None:
        line += f" oos_accuracy={report.oos['accuracy']!r} oos_p_value={report.oos['p_value']:.3g}"
    print(line)
    return EXIT_OK


def cmd_predict(cfg) -> int:
    try:
        model = classify.load_model(cfg["model"])
    except FileNotFoundError:
        raise DataError(f"model: no such file {cfg['model']}") from None
    X = np.asarray(_read_x(cfg), dtype=float)
    y = _read_y(cfg) if cfg["target"] else None
    rows = np.arange(X.shape[0])
    if y is not None:
        if y.size != X.shape[0]:
            raise DataError(f"target has {y.size} entries but data has {X.shape[0]} rows")
        if cfg["downsample"]:
            rows = classify.downsample_majority(y, cfg["seed"])
    regression = model.variant.startswith("regression-")
    decision = model.decision_function(X[rows])
    labels = None if regression else np.where(decision >= model.threshold, 1.0, -1.0)
    if cfg["out"]:
        header = ["row", "decision"] + ([] if regression else ["label"])
        table = [(str(int(r)), float(d)) + (() if regression else (str(int(lab)),))
                 for r, d, lab in zip(rows, decision, labels if labels is not None else decision)]
        _write_csv(cfg["out"], header, table)
    if y is not None and not regression:
        correct = int(np.sum(labels == y[rows]))
        total = int(rows.size)
        pval = exact_binomial_pvalue(correct, total)
        print(f"n={total} correct={correct} accuracy={correct / total!r} p_value={pval:.3g}")
    else:
        print(f"n={int(rows.size)} predictions written" if cfg["out"] else f"n={int(rows.size)}")
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    shape = LatticeShape(cfg["lattice"])
    spec = SyntheticSpec(blob_count=cfg["blob_count"], blob_radius=cfg["blob_radius"],
                         amplitude=cfg["amplitude"], noise_sigma=cfg["noise_sigma"], seed=cfg["seed"],
                         kind=cfg["kind"], blob_time_extent=cfg["blob_time_extent"],
                         n_groups=cfg["n_groups"])
    X, target, truth = generate_synthetic(shape, spec, cfg["n"])
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    fmt = cfg["format"]
    if fmt not in ("binary", "csv"):
        raise ConfigError(f"format must be 'binary' or 'csv', got {fmt!r}")
    write_matrix(X.values, os.path.join(out, "X.bin" if fmt == "binary" else "X.csv"), format=fmt)
    write_vector(target.values, os.path.join(out, "y.csv"))
    write_vector(target.group_ids, os.path.join(out, "groups.csv"))
    write_vector(truth.beta_true, os.path.join(out, "beta_true.csv"))
    write_vector(truth.support, os.path.join(out, "support.csv"))
    write_coefficient_volume(truth.beta_true, shape, os.path.join(out, "beta_true_volume.txt"))
    print(f"n={cfg['n']} p={shape.p} support={truth.support.size} seed={cfg['seed']}")
    return EXIT_OK


def run_verification(instances: int, seed: int, n_max: int = 60, p_max: int = 30) -> list:
    """Main solver against the oracles on random small instances.

    Returns ``(check, max_gap, all_converged)`` rows.
    """
    rng = np.random.default_rng(seed)
    rows = []
    enum_gap, enum_count = 0.0, 0
    for tag in ("squared", "huber", "hinge"):
        worst, ok = 0.0, True
        for _ in range(instances):
            X, y, spec = oracle.random_instance(rng, tag, (min(20, n_max), n_max), (min(5, p_max), p_max))
            res = solver.fit(X, y, spec)
            G = spec.graph_for(X.shape[1])
            main = objective_value(spec, X, y, G, res.beta, intercept=res.intercept)
            ref = oracle.oracle_prox_gradient(X, y, spec)
            ok = ok and res.converged and ref.converged
            worst = max(worst, oracle.objective_gap(main, ref.objective))
            if tag == "squared" and X.shape[1] <= 8:
                exact = oracle.oracle_sign_enumeration(X, y, spec)
                enum_gap = max(enum_gap, oracle.objective_gap(main, exact.objective))
                enum_count += 1
        rows.append((f"{tag}:prox-grad", worst, ok))
    # dedicated tiny squared-loss instances for the exact enumeration
    for _ in range(instances):
        X, y, spec = oracle.random_instance(rng, "squared", (min(20, n_max), n_max), (3, 8))
        res = solver.fit(X, y, spec)
        main = objective_value(spec, X, y, spec.graph_for(X.shape[1]), res.beta)
        exact = oracle.oracle_sign_enumeration(X, y, spec)
        enum_gap = max(enum_gap, oracle.objective_gap(main, exact.objective))
        enum_count += 1
    rows.append(("squared:sign-enumeration", enum_gap, True))
    return rows


def cmd_verify(cfg) -> int:
    rows = run_verification(cfg["instances"], cfg["seed"], cfg["n_max"], cfg["p_max"])
    tol = cfg["tolerance"]
    lines, failed = [], False
    for name, gap, ok in rows:
        passed = ok and gap < tol
        failed = failed or not passed
        lines.append(f"{name} instances={cfg['instances']} max_gap={gap:.3e} "
                     f"converged={'yes' if ok else 'no'} {'PASS' if passed else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    if failed:
        raise VerificationError(f"objective gap not below tolerance {tol:g}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "predict": cmd_predict, "simulate": cmd_simulate,
            "verify": cmd_verify}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="key = value configuration file")
        for key, (conv, _) in KEYS[name].items():
            flag = "--" + key.replace("_", "-")
            if conv is _bool:
                sp.add_argument(flag, dest=key, nargs="?", const="true", default=None, metavar="BOOL")
            else:
                sp.add_argument(flag, dest=key, default=None, metavar=key.upper())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.command, args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError, SpecError) as exc:
        code = EXIT_CONFIG
        msg = str(exc)
    except (DataError, FormatError) as exc:
        code = EXIT_DATA
        msg = str(exc)
    except VerificationError as exc:
        code = EXIT_VERIFY
        msg = str(exc)
    except GraphNetError as exc:
        code = EXIT_OTHER
        msg = str(exc)
    except Exception as exc:  # noqa: BLE001 - last-resort single-line diagnostic
        code = EXIT_OTHER
        msg = f"{type(exc).__name__}: {exc}"
    print(f"graphnet {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
