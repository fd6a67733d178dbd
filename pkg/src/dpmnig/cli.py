"""
Command-line entry point.

::

    dpmnig fit --data X.csv --config run.cfg --out DIR [--truth T.csv] [--scale]
    dpmnig simulate --spec {sim1,sim2,FILE.json} --seed N --out DIR
    dpmnig evaluate --pred P.csv --truth T.csv

``fit`` writes ``DIR/report.json`` and ``DIR/labels.csv`` and streams one JSON
record per chain per sweep to standard error.  Exit codes: 0 on success, 2
when the sampler stopped at ``max_iter`` without converging (the report is
still written), 1 on bad input.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .datagen import generate, load_spec, sim1_spec, sim2_spec
from .evaluation import adjusted_rand_index, cross_tab
from .inference import summarize
from .sampler import GibbsConfig, run

__all__ = ["InputError", "cmd_evaluate", "cmd_fit", "cmd_simulate", "load_config", "main",
           "read_labels", "read_matrix"]

SEED_ENV = "DPMNIG_SEED"
_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


class InputError(ValueError):
    """Unreadable or malformed user input."""


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path):
    """
    Read a numeric CSV.  A first row with any non-numeric cell is a header.

    Returns
    -------
    (ndarray, list of str or None)

    Raises
    ------
    InputError
        Naming the 1-based row and column of the first bad cell.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    numbered = [(k + 1, [c.strip() for c in r]) for k, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise InputError(f"{path}: no data rows")
    header = None
    if not all(_is_number(c) for c in numbered[0][1]):
        header = numbered[0][1]
        numbered = numbered[1:]
    if not numbered:
        raise InputError(f"{path}: header but no data rows")
    width = len(header) if header is not None else len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for i, (line, cells) in enumerate(numbered):
        if len(cells) != width:
            raise InputError(f"{path}: row {line} has {len(cells)} columns, expected {width}")
        for j, c in enumerate(cells):
            try:
                v = float(c)
            except ValueError:
                raise InputError(f"{path}: row {line}, column {j + 1}: non-numeric value {c!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {line}, column {j + 1}: non-finite value {c!r}")
            out[i, j] = v
    return out, header


def read_labels(path):
    """Read one integer label per line; an optional non-numeric header line is skipped."""
    mat, _ = read_matrix(path)
    if mat.shape[1] != 1:
        raise InputError(f"{path}: expected one label per line, found {mat.shape[1]} columns")
    col = mat[:, 0]
    if not np.all(col == np.round(col)):
        raise InputError(f"{path}: labels must be integers")
    return col.astype(np.int64)


def _write_labels(path, labels):
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{int(v)}\n" for v in labels)


def _parse_value(key, raw, default):
    if isinstance(default, bool):
        v = _BOOL.get(raw.lower())
        if v is None:
            raise InputError(f"config key {key!r}: expected a boolean, got {raw!r}")
        return v
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise InputError(f"config key {key!r}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise InputError(f"config key {key!r}: expected a number, got {raw!r}") from None
    return raw


def load_config(path=None, scale=False, environ=None):
    """
    Parse a flat ``key = value`` file into ``(GibbsConfig, scale)``.

    Blank lines and ``#`` comments are ignored.  Keys are the fields of
    :class:`~dpmnig.sampler.GibbsConfig` plus ``scale``.  The ``DPMNIG_SEED``
    environment variable overrides ``seed``.
    """
    environ = os.environ if environ is None else environ
    defaults = GibbsConfig().to_dict()
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc.strerror}") from None
        for k, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":" if ":" in line else None
            if sep is None:
                raise InputError(f"config line {k}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split(sep, 1))
            if key == "scale":
                scale = _parse_value(key, raw, False) or scale
            elif key in defaults:
                values[key] = _parse_value(key, raw, defaults[key])
            else:
                raise InputError(f"config line {k}: unknown key {key!r}")
    if environ.get(SEED_ENV):
        try:
            values["seed"] = int(environ[SEED_ENV])
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer") from None
    try:
        return GibbsConfig(**values), bool(scale)
    except ValueError as exc:
        raise InputError(f"config: {exc}") from None


def _finite(obj):
    """Replace non-finite floats by None and arrays by lists so json round-trips."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _component_report(result):
    comps = []
    for g, p in enumerate(result.params_hat):
        entry = {"id": g}
        for name in ("gamma", "mu", "beta", "sigma"):
            item = {"mean": getattr(p, name), "mc_se": result.mc_se[name][g]}
            if result.intervals is not None:
                lo, hi = result.intervals[name]
                item["lower"], item["upper"] = lo[g], hi[g]
            entry[name] = item
        comps.append(entry)
    return comps


def _emit(record):
    sys.stderr.write(json.dumps(_finite(record)) + "\n")


def cmd_fit(data_path, config_path, out_path, truth_path=None, scale=False, stream=True):
    """Fit the model to a CSV and write the report and MAP labels; returns an exit code."""
    try:
        cfg, scale = load_config(config_path, scale)
        x, header = read_matrix(data_path)
        truth = read_labels(truth_path) if truth_path else None
        if truth is not None and truth.shape[0] != x.shape[0]:
            raise InputError(f"truth has {truth.shape[0]} labels but data has {x.shape[0]} rows")
        if x.shape[0] < 2:
            raise InputError("need at least two rows")
        if scale:
            sd = x.std(axis=0)
            if np.any(sd == 0):
                raise InputError("cannot scale a constant column")
            x = (x - x.mean(axis=0)) / sd
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    draws, diag = run(x, cfg, _emit if stream else None)
    result = summarize(draws, diag)
    elapsed = time.perf_counter() - t0
    report = {
        "config": {**cfg.to_dict(), "scale": scale},
        "data": {"path": str(data_path), "n": x.shape[0], "d": x.shape[1], "columns": header},
        "converged": diag.converged,
        "g_hat": result.g_hat,
        "modal_g": result.diagnostics["modal_g"],
        "labels": result.labels_map,
        "level": result.level,
        "components": _component_report(result),
        "psrf_trace": [{"iteration": i, "psrf": v} for i, v in diag.psrf_trace],
        "sweeps": diag.sweep_records,
        "n_sweeps": diag.n_sweeps,
        "burn_in": diag.burn_in,
        "n_retained": len(draws),
        "counters": diag.diag,
        "wall_clock_seconds": elapsed,
        "started": started,
    }
    if truth is not None:
        table = cross_tab(truth, result.labels_map)
        report["ari"] = adjusted_rand_index(truth, result.labels_map)
        report["cross_tab"] = {"rows": table.rows, "cols": table.cols, "counts": table.counts}
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(_finite(report), fh, indent=1)
        fh.write("\n")
    _write_labels(out / "labels.csv", result.labels_map)
    if not diag.converged:
        print(f"warning: no convergence after {diag.n_sweeps} sweeps; partial report written",
              file=sys.stderr)
        return 2
    return 0


def cmd_simulate(spec, seed, out_path):
    """Write ``data.csv`` and ``truth.csv`` for a named design or a JSON spec file."""
    try:
        if spec == "sim1":
            mix = sim1_spec()
        elif spec == "sim2":
            mix = sim2_spec()
        else:
            try:
                mix = load_spec(spec)
            except OSError as exc:
                raise InputError(f"cannot read spec {spec}: {exc.strerror}") from None
            except (ValueError, TypeError) as exc:
                raise InputError(f"invalid spec {spec}: {exc}") from None
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    x, truth = generate(mix, seed)
    out = Path(out_path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "data.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(x.shape[1])])
        w.writerows([[repr(float(v)) for v in row] for row in x])
    _write_labels(out / "truth.csv", truth)
    return 0


def cmd_evaluate(pred_path, truth_path):
    """Print the ARI and the cross-tabulation of two label files."""
    try:
        pred = read_labels(pred_path)
        truth = read_labels(truth_path)
        if pred.shape[0] != truth.shape[0]:
            raise InputError(f"length mismatch: {pred.shape[0]} predicted vs {truth.shape[0]} true labels")
        ari = adjusted_rand_index(truth, pred)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"ARI {ari:.6f}")
    print(cross_tab(truth, pred).format())
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="dpmnig", description="Dirichlet process mixture of MNIG distributions")
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", help="fit the mixture to a CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--config")
    f.add_argument("--out", required=True)
    f.add_argument("--truth")
    f.add_argument("--scale", action="store_true", help="standardize every column first")
    f.add_argument("--quiet", action="store_true", help="do not stream per-sweep records")
    s = sub.add_parser("simulate", help="generate a simulated dataset")
    s.add_argument("--spec", required=True, help="sim1, sim2 or a JSON spec file")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    e = sub.add_parser("evaluate", help="compare two label files")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "fit":
        return cmd_fit(args.data, args.config, args.out, args.truth, args.scale, not args.quiet)
    if args.command == "simulate":
        if args.seed < 0:
            print("error: seed must be nonnegative", file=sys.stderr)
            return 1
        return cmd_simulate(args.spec, args.seed, args.out)
    return cmd_evaluate(args.pred, args.truth)


if __name__ == "__main__":
    sys.exit(main())
