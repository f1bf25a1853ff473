"""Command-line front end: spec parsing, experiment dispatch, CSV output.

Spec files are YAML::

    experiment: sinr_vs_m
    output: sinr.csv          # optional; --out overrides
    format: csv               # or csv+plot-script
    overrides:
      M: 50                   # SystemConfig fields or harness options
      trials: 100
      scenario:
        type: scenario2
        cell_radius_m: 1000
        user_circle_radius_m: 800

Unknown override keys are rejected.  Environment variables prefixed with
SUPMIMO_ (e.g. SUPMIMO_TRIALS=10) override spec values, and CLI flags win
over both.  Exit status is 0 on success and nonzero otherwise, with a
machine-readable category on stderr: "error <category>: message".
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

import numpy as np
import yaml

from . import analytics
from .hybrid import greedy_partition
from .simharness import EXPERIMENTS, MetricsRecord, RunOptions, run_experiment
from .sysmodel import Scenario1, Scenario2, SystemConfig

ENV_PREFIX = "SUPMIMO_"

CSV_HEADER = "experiment,method,sweep_var,sweep_value,user,metric,value,trials,analytic_value"

_CONFIG_FIELDS = {
    "L": int, "K": int, "M": int, "C_u": int, "C": int, "tau": int, "r": int,
    "P": int, "snr_db": float, "omega": float, "path_loss_exponent": float,
    "iterations": int, "seed": int,
}
_OPTION_FIELDS = {
    "trials": int, "threads": int, "rho_form": str, "selection": str,
    "m_values": tuple, "k_values": tuple, "m_per_k": int, "radii_m": tuple,
    "placements": int, "inner_realizations": int, "rate_cap": bool,
}

# experiment-specific defaults applied before user overrides
_EXPERIMENT_DEFAULTS = {
    "rate_vs_m": {"P": 16},
    "sinr_cdf": {"M": 300, "scenario": {"type": "scenario1"}},
    "ber_vs_k": {"C_u": 70, "scenario": {"type": "scenario1"}},
    "sum_rate_vs_sir": {"L": 19, "C_u": 40, "M": 200, "omega": 10.0},
}


class SpecError(ValueError):
    """Malformed or inconsistent experiment spec."""


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    config: SystemConfig
    options: RunOptions
    output: str | None
    format: str


def _parse_scenario(raw) -> Scenario1 | Scenario2:
    if not isinstance(raw, dict) or "type" not in raw:
        raise SpecError("scenario override must be a mapping with a 'type' key")
    kind = raw["type"]
    args = {k: float(v) for k, v in raw.items() if k != "type"}
    try:
        if kind == "scenario1":
            return Scenario1(**args)
        if kind == "scenario2":
            return Scenario2(**args)
    except TypeError as exc:
        raise SpecError(f"bad scenario parameters: {exc}") from None
    raise SpecError(f"unknown scenario type {kind!r}")


def _coerce(key: str, value, target):
    try:
        if target is bool:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes"):
                return True
            if str(value).lower() in ("0", "false", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if target is tuple:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            if not isinstance(value, (list, tuple)):
                raise ValueError("expected a list")
            return tuple(float(v) if "." in str(v) else int(v) for v in value)
        return target(value)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"override {key!r}: {exc}") from None


def _apply_overrides(config_kwargs, option_kwargs, overrides, source):
    for key, value in overrides.items():
        if key == "scenario":
            config_kwargs["scenario"] = value if isinstance(value, (Scenario1, Scenario2)) \
                else _parse_scenario(value)
        elif key in _CONFIG_FIELDS:
            config_kwargs[key] = _coerce(key, value, _CONFIG_FIELDS[key])
        elif key in _OPTION_FIELDS:
            option_kwargs[key] = _coerce(key, value, _OPTION_FIELDS[key])
        else:
            raise SpecError(f"unknown override key {key!r} (from {source})")


def _env_overrides() -> dict:
    out = {}
    known = {name.lower(): name for name in (*_CONFIG_FIELDS, *_OPTION_FIELDS)}
    for env_key, value in sorted(os.environ.items()):
        if not env_key.startswith(ENV_PREFIX):
            continue
        name = env_key[len(ENV_PREFIX):].lower()
        if name in known:
            out[known[name]] = value
        elif name in ("experiment", "output", "format"):
            continue
        else:
            raise SpecError(f"unknown environment override {env_key}")
    return out


def parse_config(path: str, cli_overrides: dict | None = None) -> ExperimentSpec:
    """Load a YAML spec; defaults, then file, then env, then CLI flags."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: top level must be a mapping")
    unknown_top = set(raw) - {"experiment", "output", "format", "overrides"}
    if unknown_top:
        raise SpecError(f"{path}: unknown top-level keys {sorted(unknown_top)}")
    experiment = raw.get("experiment")
    if experiment not in EXPERIMENTS:
        raise SpecError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    overrides = raw.get("overrides") or {}
    if not isinstance(overrides, dict):
        raise SpecError("overrides must be a mapping")

    config_kwargs: dict = {}
    option_kwargs: dict = {}
    _apply_overrides(config_kwargs, option_kwargs, _EXPERIMENT_DEFAULTS.get(experiment, {}),
                     "experiment defaults")
    _apply_overrides(config_kwargs, option_kwargs, overrides, path)
    _apply_overrides(config_kwargs, option_kwargs, _env_overrides(), "environment")
    _apply_overrides(config_kwargs, option_kwargs, cli_overrides or {}, "command line")

    if "tau" not in config_kwargs:
        r = config_kwargs.get("r", 1)
        K = config_kwargs.get("K", 5)
        config_kwargs["tau"] = r * K
    try:
        config = SystemConfig(**config_kwargs)
        options = RunOptions(**option_kwargs)
    except (TypeError, ValueError) as exc:
        raise SpecError(str(exc)) from None
    fmt = raw.get("format", "csv")
    if fmt not in ("csv", "csv+plot-script"):
        raise SpecError(f"format must be 'csv' or 'csv+plot-script', got {fmt!r}")
    return ExperimentSpec(
        experiment=experiment, config=config, options=options,
        output=raw.get("output"), format=fmt,
    )


def _format_value(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def emit_csv(records, path: str) -> None:
    """Write metric records as UTF-8, LF-terminated, round-trippable CSV."""
    lines = [CSV_HEADER]
    for rec in records:
        lines.append(",".join((
            rec.experiment, rec.method, rec.sweep_var, _format_value(rec.sweep_value),
            rec.user, rec.metric, _format_value(rec.value), str(rec.trials),
            _format_value(rec.analytic_value),
        )))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from None


def parse_csv(path: str) -> list:
    """Read back a CSV produced by emit_csv."""
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise SpecError(f"{path}: unexpected header {header!r}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 9:
                raise SpecError(f"{path}: malformed row {line!r}")
            records.append(MetricsRecord(
                experiment=parts[0], method=parts[1], sweep_var=parts[2],
                sweep_value=float(parts[3]), user=parts[4], metric=parts[5],
                value=float(parts[6]), trials=int(parts[7]),
                analytic_value=None if parts[8] == "" else float(parts[8]),
            ))
    return records


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Plot the metric CSV sitting next to this script.\"\"\"
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
series = defaultdict(list)
with open(path, encoding="utf-8") as fh:
    for row in csv.DictReader(fh):
        key = (row["method"], row["metric"])
        series[key].append((float(row["sweep_value"]), float(row["value"])))
for (method, metric), points in sorted(series.items()):
    points.sort()
    plt.plot([p[0] for p in points], [p[1] for p in points], marker="o",
             label=f"{{method}} ({{metric}})")
plt.xlabel("sweep value")
plt.ylabel("metric value")
plt.legend()
plt.grid(True, alpha=0.4)
plt.savefig(path + ".png", dpi=150, bbox_inches="tight")
print("wrote", path + ".png")
"""


def _write_plot_script(csv_path: str) -> str:
    script_path = csv_path + ".plot.py"
    with open(script_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_PLOT_SCRIPT.format(csv_name=os.path.basename(csv_path)))
    return script_path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    spec_path = args.spec_flag or args.spec_pos
    if not spec_path:
        raise SpecError("missing spec path: pass it positionally or with --spec")
    if args.spec_flag and args.spec_pos and args.spec_flag != args.spec_pos:
        raise SpecError("conflicting spec paths given positionally and with --spec")
    cli_overrides = {}
    if args.seed is not None:
        cli_overrides["seed"] = args.seed
    if args.trials is not None:
        cli_overrides["trials"] = args.trials
    if args.threads is not None:
        cli_overrides["threads"] = args.threads
    spec = parse_config(spec_path, cli_overrides)
    out_path = args.out or spec.output
    if not out_path:
        raise SpecError("no output path: set 'output' in the spec or pass --out")
    records = run_experiment(spec.config, spec.experiment, spec.options)
    emit_csv(records, out_path)
    print(f"wrote {len(records)} records to {out_path}")
    if spec.format == "csv+plot-script":
        print(f"wrote {_write_plot_script(out_path)}")
    return 0


def _cmd_list(_args) -> int:
    for name in EXPERIMENTS:
        print(name)
    return 0


_ANALYTIC_FORMS = {
    "optimal-rho": (("M", int), ("L", int), ("K", int), ("C_u", int)),
    "kappa-symmetric": (("K", int), ("L", int), ("beta", float)),
    "sp-lower-bound": (("L", int), ("K", int), ("C_u", int), ("M", int), ("lambda2", float)),
}


def _cmd_analytic(args) -> int:
    form = args.formula
    if form not in _ANALYTIC_FORMS:
        raise SpecError(f"unknown formula {form!r}; expected one of {sorted(_ANALYTIC_FORMS)}")
    sig = _ANALYTIC_FORMS[form]
    if len(args.params) != len(sig):
        names = " ".join(name for name, _ in sig)
        raise SpecError(f"{form} needs parameters: {names}")
    vals = [typ(p) for (_name, typ), p in zip(sig, args.params)]
    if form == "optimal-rho":
        lam2, mu2 = analytics.optimal_rho(*vals, approximate=args.approx)
        print(f"lambda2={lam2!r} mu2={mu2!r}")
    elif form == "kappa-symmetric":
        print(repr(analytics.kappa_symmetric(*vals)))
    else:
        print(repr(analytics.sinr_sp_lower_bound(*vals)))
    return 0


def _cmd_partition(args) -> int:
    import csv as _csv

    rows = []
    with open(args.beta_csv, encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        expected = {"bs_cell", "user_cell", "user_index", "beta"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise SpecError(f"{args.beta_csv}: header must be bs_cell,user_cell,user_index,beta")
        for row in reader:
            rows.append((int(row["bs_cell"]), int(row["user_cell"]),
                         int(row["user_index"]), float(row["beta"])))
    if not rows:
        raise SpecError(f"{args.beta_csv}: no data rows")
    L = max(max(r[0] for r in rows), max(r[1] for r in rows)) + 1
    K = max(r[2] for r in rows) + 1
    beta = np.zeros((L, L, K))
    seen = np.zeros((L, L, K), dtype=bool)
    for j, l, k, value in rows:
        beta[j, l, k] = value
        seen[j, l, k] = True
    if not seen.all():
        raise SpecError(f"{args.beta_csv}: missing entries for some (bs_cell, user_cell, user_index)")
    result = greedy_partition(beta, args.r, args.c_u, args.tau, args.mu2)
    for (l, k) in sorted(result.partition.u_tp):
        print(f"tp,{l},{k}")
    for (l, k) in sorted(result.partition.u_sp):
        print(f"sp,{l},{k}")
    print(f"cost,{result.cost!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supmimo",
        description="Multi-cell massive MIMO uplink simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a YAML spec")
    run_p.add_argument("spec_pos", nargs="?", metavar="spec",
                       help="path to the YAML experiment spec")
    run_p.add_argument("--spec", dest="spec_flag", help="alternative way to pass the spec path")
    run_p.add_argument("--out", help="output CSV path (overrides the spec)")
    run_p.add_argument("--seed", type=int, help="master seed override")
    run_p.add_argument("--trials", type=int, help="trial count override")
    run_p.add_argument("--threads", type=int, help="worker thread count")
    run_p.set_defaults(fn=_cmd_run)

    list_p = sub.add_parser("list-experiments", help="list experiment names")
    list_p.set_defaults(fn=_cmd_list)

    an_p = sub.add_parser("analytic", help="evaluate a closed-form expression")
    an_p.add_argument("formula", help="|".join(sorted(_ANALYTIC_FORMS)))
    an_p.add_argument("params", nargs="*", help="positional formula parameters")
    an_p.add_argument("--approx", action="store_true", help="use the approximate power split")
    an_p.set_defaults(fn=_cmd_analytic)

    part_p = sub.add_parser("partition", help="run the greedy pilot-type partitioner")
    part_p.add_argument("beta_csv", help="CSV with header bs_cell,user_cell,user_index,beta")
    part_p.add_argument("--c-u", dest="c_u", type=int, default=100)
    part_p.add_argument("--tau", type=int, default=5)
    part_p.add_argument("--r", type=int, default=1)
    part_p.add_argument("--mu2", type=float, default=0.5, help="pilot power fraction")
    part_p.set_defaults(fn=_cmd_partition)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SpecError as exc:
        print(f"error config: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, IOError) as exc:
        print(f"error io: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error invalid-parameter: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
