"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 no feasible backscore,
1 any other library error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .corrmat import load_correlations, save_correlations
from .curves import load_curves, normalize_curves, save_curves
from .exceptions import MetricRegError, NoFeasibleSolution, ValidationError
from .pipeline import DistanceRegression, load_model, make_space
from .pls import DesignBlock
from .report import explanation_summary, render_report, to_plain
from .shapes import load_landmarks, save_landmarks
from .synth import KINDS, load_points, save_points, synth_dataset

logger = logging.getLogger("metricreg")

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2, 3

# Config keys and their parsers; anything else is rejected.
_CONFIG_KEYS = {
    "dataset": str,
    "predictor": str,
    "predictor_space": str,
    "response": str,
    "response_space": str,
    "predictor_dims": int,
    "response_dims": int,
    "variance": float,
    "k_max": int,
    "a_max": int,
    "n_components": int,
    "response_focus": int,
    "tol_score": float,
    "residuals": str,
    "squared": lambda v: v.lower() in ("1", "true", "yes", "on"),
    "seed": int,
    "model": str,
}


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Keys ``covariate.NAME = file.csv`` add quantitative covariate blocks
    and ``categorical.NAME = file.csv`` categorical ones. Relative file
    paths resolve against the config file's directory.
    """
    cfg = {"covariates": {}, "categoricals": {}}
    root = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("covariate.") or key.startswith("categorical."):
                kind, name = key.split(".", 1)
                cfg[kind + "s"][name] = os.path.join(root, value)
                continue
            if key not in _CONFIG_KEYS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            if value == "" or value.lower() == "none":
                cfg[key] = None
                continue
            try:
                cfg[key] = _CONFIG_KEYS[key](value)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    for key in ("dataset", "predictor", "response", "model"):
        if cfg.get(key):
            cfg[key] = os.path.join(root, cfg[key])
    if cfg.get("dataset"):
        with open(cfg["dataset"]) as fh:
            man = json.load(fh)
        droot = os.path.dirname(cfg["dataset"])
        for role in ("predictor", "response"):
            cfg.setdefault(role, os.path.join(droot, man[role]["file"]))
            cfg.setdefault(f"{role}_space", man[role]["space"])
    for role in ("predictor", "response"):
        if not cfg.get(role) or not cfg.get(f"{role}_space"):
            raise ValidationError(f"config needs {role} and {role}_space (or a dataset)")
    return cfg


def load_objects(space, path):
    """Return ``(ids, objects)`` from a file in ``space``'s format."""
    if space == "shape":
        return load_landmarks(path)
    if space == "curve":
        return load_curves(path)
    if space == "corr":
        return load_correlations(path)
    if space == "euclidean":
        return load_points(path)
    raise ValidationError(f"unknown space {space!r}")


def save_objects(space, path, ids, objects):
    if space == "shape":
        save_landmarks(path, ids, objects)
    elif space == "curve":
        save_curves(path, ids, objects)
    elif space == "corr":
        save_correlations(path, ids, objects)
    else:
        save_points(path, ids, objects)


def _load_column(path, ids, kind):
    rows = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "subject" or len(header) < 2:
            raise ValidationError(f"{path}: expected columns subject,value")
        for line in fh:
            if line.strip():
                parts = line.strip().split(",")
                rows[parts[0]] = parts[1]
    missing = [i for i in ids if i not in rows]
    if missing:
        raise ValidationError(f"{path}: missing subjects {missing[:5]}")
    vals = [rows[i] for i in ids]
    return np.array([float(v) for v in vals]) if kind == "covariate" else np.array(vals)


def _model_from_config(cfg):
    params = {k: cfg[k] for k in _CONFIG_KEYS if k in cfg and k not in ("dataset", "predictor", "response", "model")}
    params = {k: v for k, v in params.items() if v is not None}
    params["predictor_space"] = cfg["predictor_space"]
    params["response_space"] = cfg["response_space"]
    return DistanceRegression(**params)


def cmd_synth(args):
    ds = synth_dataset(args.kind, n=args.n, seed=args.seed, signal=args.signal)
    path = ds.save(args.out_dir)
    cfg = os.path.join(args.out_dir, "fit.cfg")
    with open(cfg, "w") as fh:
        fh.write(f"# fit configuration for {args.kind}\ndataset = dataset.json\nseed = {args.seed}\nmodel = model.pkl\n")
    print(json.dumps({"dataset": path, "config": cfg, "n": ds.n}, sort_keys=True))
    return EXIT_OK


def cmd_distmat(args):
    space = make_space(args.space)
    ids, objs = load_objects(args.space, args.input)
    if args.space == "curve":
        objs, _ = normalize_curves(objs)
    D = space.distance_matrix(objs)
    np.savetxt(args.out, D, delimiter=",", fmt="%.17g")
    print(json.dumps({"n": len(ids), "out": args.out}, sort_keys=True))
    return EXIT_OK


def cmd_fit(args):
    cfg = read_config(args.config)
    ids, X = load_objects(cfg["predictor_space"], cfg["predictor"])
    yids, Y = load_objects(cfg["response_space"], cfg["response"])
    if ids != yids:
        raise ValidationError("predictor and response files list different subjects")
    blocks = {}
    for name, path in cfg["covariates"].items():
        blocks[name] = DesignBlock(name, "covariate", _load_column(path, ids, "covariate"))
    for name, path in cfg["categoricals"].items():
        blocks[name] = DesignBlock(name, "categorical", _load_column(path, ids, "categorical"))
    model = _model_from_config(cfg).fit(X, Y, covariates=list(blocks.values()) or None)
    model.ids_ = ids
    out = args.out or cfg.get("model") or "model.pkl"
    model.save(out)
    summary = model.summary()
    summary["model"] = os.path.basename(out)
    print(json.dumps(to_plain(summary), sort_keys=True))
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    ids, X = load_objects(model.x_space_.name, args.input)
    scores = model.predict_scores(X)
    Y = model.predict(X)
    if args.out:
        save_objects(model.y_space_.name, args.out, ids, Y)
    print(json.dumps({"ids": ids, "scores": to_plain(scores)}, sort_keys=True))
    return EXIT_OK


def cmd_explain(args):
    model = load_model(args.model)
    ex = model.explain_component(args.component, args.c, args.amplification)
    text = json.dumps(to_plain(explanation_summary(ex)), sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_INFEASIBLE if ex.errors and args.strict else EXIT_OK


def cmd_test(args):
    model = load_model(args.model)
    res = model.permutation_test(args.target, R=args.R, seed=args.seed)
    text = res.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_report(args):
    model = load_model(args.model)
    explanations = [model.explain_component(j, args.c, args.amplification) for j in args.component]
    perm = model.permutation_test(args.target, R=args.R, seed=args.seed) if args.R > 0 else None
    paths = render_report(model, args.out_dir, explanations, perm)
    print(json.dumps({"files": [os.path.basename(p) for p in paths]}, sort_keys=True))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="metricreg", description="Distance-based regression between metric spaces.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--n", type=int, default=36)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--signal", type=float, default=1.0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("distmat", help="compute a distance matrix")
    s.add_argument("--space", choices=["shape", "curve", "corr", "euclidean"], required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_distmat)

    s = sub.add_parser("fit", help="fit a model from a key = value config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="model file (overrides the config's model key)")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predict responses for new predictor objects")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("explain", help="perturb one predictor component")
    s.add_argument("--model", required=True)
    s.add_argument("--component", type=int, default=1)
    s.add_argument("--c", type=float, default=2.0)
    s.add_argument("--amplification", type=float, default=1.0)
    s.add_argument("--strict", action="store_true", help="exit 3 if any side fails to backscore")
    s.add_argument("--out")
    s.set_defaults(func=cmd_explain)

    s = sub.add_parser("test", help="permutation F-test")
    s.add_argument("--model", required=True)
    s.add_argument("--target", default="response", help="'response' or a design block name")
    s.add_argument("--R", type=int, default=1000)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("report", help="write summary JSON and SVG figures")
    s.add_argument("--model", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--component", type=int, nargs="*", default=[1])
    s.add_argument("--c", type=float, default=2.0)
    s.add_argument("--amplification", type=float, default=1.0)
    s.add_argument("--target", default="response")
    s.add_argument("--R", type=int, default=0, help="permutations to include (0 skips the test)")
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NoFeasibleSolution as err:
        print(f"error: {err}", file=sys.stderr)
        if err.target is not None:
            print(f"target score: {np.asarray(err.target).tolist()}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValidationError, FileNotFoundError, KeyError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except MetricRegError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
