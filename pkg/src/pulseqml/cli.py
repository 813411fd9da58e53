"""Command-line experiment runner.

Exit codes: 0 success, 2 config error, 3 unsupported model, 4 numerical
failure, 5 budget exceeded. No environment variables are consulted.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, fliess, lie, svgplot, training
from .config import ConfigError, get_float, get_int, load_yaml, model_from_config, require
from .dynamics import PulseSchedule, predict_batch
from .errors import (
    BudgetExceededError,
    InvalidArgumentError,
    NumericalIntegrityError,
    PulseQMLError,
    RangeViolationError,
    UnsupportedModelError,
)

EXIT_OK, EXIT_CONFIG, EXIT_UNSUPPORTED, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4, 5
CURVE_POINTS = 401


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_json(path: Path, payload):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


class Run:
    """Parsed flags plus the loaded config for one subcommand invocation."""

    def __init__(self, args):
        self.args = args
        self.cfg = load_yaml(args.config)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        seed = args.seed if args.seed is not None else self.cfg.get("seed", 0)
        self.seed = get_int({"seed": seed}, "seed", minimum=0)
        self.threads = max(1, args.threads or os.cpu_count() or 1)

    def say(self, text):
        print(text)


def _matrix_label(b: np.ndarray, real_span: bool) -> str:
    d = b.shape[0]
    n = int(round(math.log2(d)))
    if 2**n != d:
        return f"dense {d}x{d}"
    coeffs = lie.pauli_decompose(-1j * b if real_span else b, tol=1e-9)
    terms = []
    for label, c in sorted(coeffs.items()):
        c = complex(c)
        if abs(c.imag) < 1e-9:
            terms.append(f"{c.real:+.6f}*{label}")
        else:
            terms.append(f"({c.real:+.6f}{c.imag:+.6f}j)*{label}")
    return " ".join(terms) if terms else "0"


def cmd_check_lie(run: Run) -> int:
    model, family = model_from_config(run.cfg)
    include_drift = bool(run.cfg.get("include_drift", False))
    max_dim = run.cfg.get("max_dim")
    closure = lie.dynamical_lie_algebra(model, include_drift=include_drift,
                                        max_dim=None if max_dim is None else int(max_dim))
    controllable = lie.is_fully_controllable(closure)
    d = model.dim
    summary = [
        ("hilbert_dim", d),
        ("closure_dimension", closure.dimension),
        ("su_dimension", d * d - 1),
        ("fully_controllable", controllable),
        ("truncated", closure.truncated),
        ("include_drift", include_drift),
    ]
    write_csv(run.out / "lie_report.csv", ["quantity", "value"], summary)
    labels = [_matrix_label(b, True) for b in closure.basis]
    write_csv(run.out / "lie_basis.csv", ["index", "element"], list(enumerate(labels)))
    if run.args.json:
        write_json(run.out / "lie_report.json", {**dict(summary), "basis": labels})
    run.say(f"closure dimension {closure.dimension} (su({d}) has {d * d - 1}); "
            f"fully controllable: {str(controllable).lower()}")
    return EXIT_OK


def cmd_check_expressivity(run: Run) -> int:
    model, _ = model_from_config(run.cfg)
    k_max = get_int(run.cfg, "k_max", lie.DEFAULT_K_MAX, minimum=0)
    tol = get_float(run.cfg, "tol", 1e-10, positive=True)
    chain = lie.s_chain(model, k_max)
    report = lie.expressivity_check(model, k_max, tol, chain=chain)
    with_support = model.dim <= 16 and 2 ** int(round(math.log2(model.dim))) == model.dim
    rows = []
    for row in report.per_k:
        support = " ".join(lie.pauli_support(chain[row.k])) if with_support else ""
        rows.append((row.k, row.dimension, row.residual, row.vanishes, support))
    write_csv(run.out / "expressivity.csv", ["k", "dimension", "residual", "vanishes", "pauli_support"], rows)
    summary = [
        ("verdict", report.verdict.value),
        ("period", report.period),
        ("period_start", report.period_start),
        ("conclusive", report.conclusive),
        ("k_max", k_max),
        ("tol", tol),
    ]
    write_csv(run.out / "expressivity_summary.csv", ["quantity", "value"], summary)
    if run.args.json:
        payload = report.to_dict()
        for entry, row in zip(payload["per_k"], rows):
            entry["pauli_support"] = row[4]
        write_json(run.out / "expressivity.json", payload)
    vanishing = report.vanishing_orders()
    run.say(f"verdict {report.verdict.value}; period {report.period}; vanishing k: {vanishing or 'none'}")
    return EXIT_OK


def _schedule_from_config(run: Run, model, seed_offset=0) -> PulseSchedule:
    sched = require(run.cfg, "schedule")
    dt = get_float(sched, "dt", where="schedule", positive=True)
    if "amplitudes" in sched:
        try:
            return PulseSchedule(np.asarray(sched["amplitudes"], dtype=float), dt)
        except (InvalidArgumentError, ValueError) as exc:
            raise ConfigError("schedule.amplitudes", str(exc)) from None
    K = get_int(sched, "K", where="schedule", minimum=1)
    scale = get_float(sched, "init_scale", 1.0, where="schedule")
    return training.init_schedule(K, model.n_controls, dt, scale, run.seed + seed_offset)


def _dataset_from_config(run: Run):
    target = require(run.cfg, "target")
    if isinstance(target, dict):
        rows = require(target, "table", "target")
        data = training.table_dataset(rows)
        return data, lambda x: np.interp(x, data.x[:, 0], data.y), "table"
    n_points = get_int(run.cfg, "n_points", 200, minimum=2)
    domain = tuple(run.cfg.get("domain", (-1.0, 1.0)))
    name = str(target).upper()
    if name not in training.TARGETS:
        raise ConfigError("target", f"unknown target {target!r}; choose from {sorted(training.TARGETS)}")
    return training.sample_target(name, n_points, domain), training.TARGETS[name], name


def cmd_fit(run: Run) -> int:
    model, _ = model_from_config(run.cfg)
    if model.n_inputs != 1:
        raise UnsupportedModelError("fit supports single-input models")
    data, target_fn, target_name = _dataset_from_config(run)
    tcfg = run.cfg.get("train", {}) or {}
    try:
        config = training.TrainConfig(
            iterations=get_int(tcfg, "iterations", 100, "train", minimum=0),
            learning_rate=get_float(tcfg, "learning_rate", 0.1, "train", positive=True),
            adam_beta1=get_float(tcfg, "adam_beta1", 0.9, "train"),
            adam_beta2=get_float(tcfg, "adam_beta2", 0.999, "train"),
            adam_eps=get_float(tcfg, "adam_eps", 1e-8, "train", positive=True),
            init_scale=get_float(tcfg, "init_scale", 1.0, "train"),
            seed=run.seed,
        )
    except InvalidArgumentError as exc:
        raise ConfigError("train", str(exc)) from None
    sched_cfg = dict(require(run.cfg, "schedule"))
    sched_cfg.setdefault("init_scale", config.init_scale)
    run.cfg["schedule"] = sched_cfg
    schedule = _schedule_from_config(run, model)
    result = training.train(model, schedule, data, config)

    write_csv(run.out / "loss_history.csv", ["iteration", "loss", "grad_norm"],
              [(i, l, g) for i, (l, g) in enumerate(zip(result.loss_history, result.grad_norms))])
    p = model.n_controls
    amps = result.final_schedule.amplitudes
    write_csv(run.out / "schedule.csv", ["step", "t_start"] + [f"theta_{j + 1}" for j in range(p)],
              [(k, k * schedule.dt, *amps[k]) for k in range(amps.shape[0])])
    lo, hi = float(data.x.min()), float(data.x.max())
    xs = np.linspace(lo, hi, CURVE_POINTS)
    fitted = predict_batch(model, xs, result.final_schedule)
    target = target_fn(xs)
    write_csv(run.out / "curve.csv", ["x", "target", "fitted"], zip(xs, target, fitted))
    summary = {
        "target": target_name,
        "iterations": config.iterations,
        "initial_loss": result.loss_history[0],
        "final_loss": result.final_loss,
        "K": schedule.n_steps,
        "dt": schedule.dt,
        "seed": run.seed,
    }
    if run.args.json:
        write_json(run.out / "fit_summary.json", summary)
    if run.args.svg:
        svg = svgplot.line_plot(
            [{"x": xs, "y": target, "label": "target", "dashed": True},
             {"x": xs, "y": fitted, "label": "model"}],
            title=f"fit to {target_name}", xlabel="x", ylabel="output",
            inset={"series": [{"x": list(range(len(result.loss_history))), "y": result.loss_history}],
                   "ylog": True, "title": "loss"},
        )
        (run.out / "fit.svg").write_text(svg)
    run.say(f"final loss {result.final_loss:.6e} after {config.iterations} iterations "
            f"({result.wall_time:.1f} s)")
    return EXIT_OK


def cmd_fliess(run: Run) -> int:
    model, _ = model_from_config(run.cfg)
    schedule = _schedule_from_config(run, model)
    max_len = get_int(run.cfg, "max_len", fliess.DEFAULT_MAX_LEN, minimum=0)
    substeps = get_int(run.cfg, "substeps", fliess.DEFAULT_SUBSTEPS, minimum=1)
    budget = get_int(run.cfg, "budget", fliess.DEFAULT_TUPLE_BUDGET, minimum=1)
    oracle = bool(run.cfg.get("oracle", False))
    series = fliess.fliess_series(model, schedule, max_len, substeps, budget)
    header = ["k", "C_k", "max_len", "tail"]
    if oracle:
        header += ["fd_oracle", "abs_diff"]
    rows = []
    for (k, c), tail in zip(series.coefficients, series.tails):
        row = [k, c, max_len, tail]
        if oracle:
            if k <= 3:
                fd = fliess.finite_difference_taylor(model, schedule, k)
                row += [fd, abs(c - fd)]
            else:
                row += [None, None]
        rows.append(row)
    write_csv(run.out / "fliess.csv", header, rows)
    if run.args.json:
        write_json(run.out / "fliess.json", [dict(zip(header, r)) for r in rows])
    run.say("\n".join(f"C_{r[0]} = {r[1]: .6e}" for r in rows))
    return EXIT_OK


def _variance_series(run: Run):
    series = require(run.cfg, "series")
    if not isinstance(series, list) or not series:
        raise ConfigError("series", "must be a non-empty list")
    dt = get_float(run.cfg, "dt", 0.1, positive=True)
    num_samples = get_int(run.cfg, "num_samples", 200, minimum=2)
    probe = run.cfg.get("probe", [0, 0])
    if isinstance(probe, str):
        if probe.lower() != "all":
            raise ConfigError("probe", "use a [step, control] pair or 'all'")
        probe = "all"
    else:
        try:
            probe = (int(probe[0]), int(probe[1]))
        except (TypeError, ValueError, IndexError):
            raise ConfigError("probe", f"expected [step, control], got {probe!r}") from None
    budget = get_int(run.cfg, "dim_budget", diagnostics.DEFAULT_DIM_BUDGET, minimum=2)
    return series, dt, num_samples, probe, budget


def cmd_variance(run: Run) -> int:
    series, dt, num_samples, probe, budget = _variance_series(run)
    records, plotted = [], []
    for i, entry in enumerate(series):
        where = f"series[{i}]"
        family_name = require(entry, "family", where)
        sizes = entry.get("sizes", [entry["size"]] if "size" in entry else None)
        if sizes is None:
            raise ConfigError(f"{where}.sizes", "missing")
        k_values = entry.get("K_values", [entry["K"]] if "K" in entry else None)
        if k_values is None:
            raise ConfigError(f"{where}.K", "missing")
        options = {k: entry[k] for k in ("initial_state", "observable") if k in entry}
        try:
            kind = diagnostics.FamilyKind(str(family_name).lower())
        except ValueError:
            raise ConfigError(f"{where}.family", f"unknown family {family_name!r}") from None
        try:
            if len(k_values) == 1:
                recs = diagnostics.sweep_size(kind, [int(s) for s in sizes], int(k_values[0]), dt, num_samples,
                                              run.seed, run.threads, budget, options, probe=probe)
                plotted.append(("size", kind.value, recs))
            else:
                recs = []
                for s in sizes:
                    fam = diagnostics.ModelFamily(kind, int(s), **options)
                    if fam.hilbert_dim > budget:
                        raise BudgetExceededError(f"dimension {fam.hilbert_dim} exceeds the budget of {budget}",
                                                  required=fam.hilbert_dim, budget=budget)
                    layer = diagnostics.sweep_layers(fam, [int(k) for k in k_values], dt, num_samples,
                                                     run.seed, run.threads, probe=probe)
                    plotted.append(("K", f"{kind.value} {s}", layer))
                    recs += layer
        except InvalidArgumentError as exc:
            raise ConfigError(where, str(exc)) from None
        records += recs
    header = ["family", "size", "K", "dt", "num_samples", "seed", "param_index", "variance"]
    write_csv(run.out / "variance.csv", header, [[r.csv_row()[h] for h in header] for r in records])
    if run.args.json:
        write_json(run.out / "variance.json", [r.csv_row() for r in records])
    if run.args.svg and plotted:
        by_k = any(axis == "K" for axis, _, _ in plotted)
        lines = [{"x": [r.K if axis == "K" else r.size for r in recs], "y": [r.variance for r in recs],
                  "label": label, "markers": True} for axis, label, recs in plotted if (axis == "K") == by_k]
        svg = svgplot.line_plot(lines, xlog=by_k, ylog=True,
                                title="gradient variance", xlabel="K" if by_k else "size",
                                ylabel="Var[dL/dtheta]")
        (run.out / "variance.svg").write_text(svg)
    for r in records:
        run.say(f"{r.family:>10} size={r.size:<3} K={r.K:<5} var={r.variance:.6e}")
    return EXIT_OK


COMMANDS = {
    "check-lie": cmd_check_lie,
    "check-expressivity": cmd_check_expressivity,
    "fit": cmd_fit,
    "fliess": cmd_fliess,
    "variance": cmd_variance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulseqml", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--svg", action="store_true", help="also write an SVG plot")
        p.add_argument("--json", action="store_true", help="also write JSON mirrors of the reports")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](Run(args))
    except (ConfigError, RangeViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnsupportedModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except BudgetExceededError as exc:
        print(f"error: {exc} (required {exc.required}, budget {exc.budget})", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalIntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PulseQMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
