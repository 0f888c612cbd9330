"""Command-line interface.

Exit codes: 0 success, 2 parse error, 3 numerical degeneracy, 4 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import EnetConfig, enet_var
from .bench import CONDITION1_THRESHOLD, METHODS, ConditionReport, Design, check_condition1, run_experiment
from .core import PatternKind, TimeSeriesData, generate_pattern, simulate_var
from .eas import EasParams, calibrate_d
from .estim import RankDeficient
from .gfi import DegenerateGraph
from .gimh import ChainConfig, DegenerateChain, InitKind, run_chain
from .reporting import CsvFormatError, emit_report, export_csv, ingest_csv

EXIT_PARSE, EXIT_NUMERIC, EXIT_CONFIG = 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat run configuration; every field is a ``key = value`` line in the config file."""

    command: str = "select"
    input_path: Optional[str] = None
    output_dir: str = "out"
    seed: int = 0
    difference: bool = False
    # h-function
    epsilon_mode: str = "practical"
    rho: float = 0.49
    d: Optional[float] = None
    c_bound: float = 1.0
    g_o_size_hint: Optional[int] = None
    # chain
    steps: int = 20000
    burn_in: int = 5000
    draws: int = 250
    init: str = "diagonal"
    max_size: Optional[int] = None
    move_add: float = 1 / 3
    move_remove: float = 1 / 3
    move_swap: float = 1 / 3
    normalize_residuals: bool = False
    # elastic net
    l1_ratio: float = 0.5
    cv_folds: int = 5
    tol: float = 1e-7
    max_iter: int = 10000
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    # output / simulation / bench
    dot_threshold: float = 0.05
    cond1_threshold: float = CONDITION1_THRESHOLD
    pattern: str = "random"
    p: int = 4
    n: int = 120
    seeds: int = 20
    methods: str = ",".join(METHODS)
    processes: int = 1

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        unknown = sorted(set(values) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls()
        for k, v in values.items():
            setattr(cfg, k, _coerce(cls, k, v))
        return cfg

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def eas_params(self, d: float) -> EasParams:
        return EasParams(self.epsilon_mode, self.rho, d, self.c_bound, self.g_o_size_hint)

    def chain_config(self) -> ChainConfig:
        return ChainConfig(self.steps, self.burn_in, self.draws, self.seed, InitKind(self.init), self.max_size,
                           (self.move_add, self.move_remove, self.move_swap))

    def enet_config(self) -> EnetConfig:
        return EnetConfig(None, self.l1_ratio, self.cv_folds, self.tol, self.max_iter, self.n_lambda,
                          self.lambda_min_ratio)


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _coerce(cls, key: str, value):
    hint = {f.name: f.type for f in fields(cls)}[key]
    if value is None:
        return None
    base = hint.replace("Optional[", "").rstrip("]")
    typ = _TYPES[base]
    if typ is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "1", "yes"):
            return True
        if text in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if typ is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot convert {value!r} to {base}") from None


def load_config(path) -> dict:
    """Read a flat TOML ``key = value`` file."""
    try:
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config must be flat; found tables {nested}")
    return values


def dump_config(values: dict) -> str:
    lines = []
    for k, v in values.items():
        if v is None:
            continue
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, (int, float)):
            text = repr(v)
        else:
            text = json.dumps(str(v))
        lines.append(f"{k} = {text}")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="easvar", description="EAS graph selection for stable VAR(1) models")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_input=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--output", dest="output_dir", help="output directory")
        p.add_argument("--seed", type=int)
        if with_input:
            p.add_argument("--input", dest="input_path", help="CSV: header of names, one row per time point")
            p.add_argument("--difference", action="store_const", const=True, default=None,
                           help="use first differences")

    sim = sub.add_parser("simulate", help="simulate a VAR(1) series from a random pattern")
    common(sim, with_input=False)
    sim.add_argument("--pattern")
    sim.add_argument("--p", type=int)
    sim.add_argument("--n", type=int)

    sel = sub.add_parser("select", help="run the graph sampler on a CSV series")
    common(sel)
    sel.add_argument("--steps", type=int)
    sel.add_argument("--burn-in", dest="burn_in", type=int)
    sel.add_argument("--draws", type=int)
    sel.add_argument("--d", type=float, help="RSS floor (default: elastic-net calibration)")

    chk = sub.add_parser("check", help="evaluate Condition 1 on a CSV series")
    common(chk)
    chk.add_argument("--threshold", dest="cond1_threshold", type=float)

    bench = sub.add_parser("bench", help="run a simulation design")
    common(bench, with_input=False)
    bench.add_argument("--design", help="flat config file with the design keys")
    bench.add_argument("--pattern")
    bench.add_argument("--p", type=int)
    bench.add_argument("--n", type=int)
    bench.add_argument("--seeds", type=int)
    bench.add_argument("--steps", type=int)
    bench.add_argument("--burn-in", dest="burn_in", type=int)
    bench.add_argument("--methods")
    bench.add_argument("--processes", type=int)

    ing = sub.add_parser("ingest", help="parse a CSV series and write it back canonically")
    common(ing)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    for attr in ("config", "design"):
        path = getattr(args, attr, None)
        if path:
            values.update(load_config(path))
    for k, v in vars(args).items():
        if k in ("config", "design") or v is None:
            continue
        values[k] = v
    return RunConfig.from_mapping(values)


def _cmd_simulate(cfg: RunConfig) -> int:
    a0, g0 = generate_pattern(PatternKind.parse(cfg.pattern), cfg.p, cfg.seed)
    data = simulate_var(a0, np.ones(cfg.p), cfg.n, cfg.seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(data, out / "series.csv")
    truth = {"schema_version": 1, "pattern": cfg.pattern, "p": cfg.p, "n": cfg.n, "seed": cfg.seed,
             "a0": a0.tolist(), "graph": g0.vec_indices()}
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out / 'series.csv'} and {out / 'truth.json'}")
    return 0


def _load_input(cfg: RunConfig) -> tuple[TimeSeriesData, list[str]]:
    if not cfg.input_path:
        raise ConfigError("--input is required")
    return ingest_csv(cfg.input_path, cfg.difference)


def _cmd_select(cfg: RunConfig) -> int:
    data, names = _load_input(cfg)
    d = cfg.d
    if d is None:
        _, g_enet = enet_var(data, cfg.enet_config())
        d = calibrate_d(data, g_enet)
    params = cfg.eas_params(d)
    result = run_chain(data, params, cfg.chain_config(), normalize_residuals=cfg.normalize_residuals)
    value, ok = check_condition1(data, cfg.cond1_threshold)
    conditions = ConditionReport(value, cfg.cond1_threshold, ok)
    metrics = {"map_size": result.map_graph.size, "acceptance_rate": result.acceptance_rate, "d": d,
               "distinct_graphs": len(result.visits)}
    emit_report(result, metrics, conditions, cfg.output_dir, cfg.as_dict(), names, cfg.dot_threshold)
    print(f"MAP graph (vec indices): {result.map_graph.vec_indices()}; report in {cfg.output_dir}")
    return 0


def _cmd_check(cfg: RunConfig) -> int:
    data, _ = _load_input(cfg)
    value, ok = check_condition1(data, cfg.cond1_threshold)
    print(json.dumps({"n": data.n, "p": data.p, "cond1_value": value,
                      "cond1_threshold": cfg.cond1_threshold, "cond1_pass": ok}, indent=2))
    return 0


def _cmd_bench(cfg: RunConfig) -> int:
    design = Design(cfg.p, cfg.n, cfg.pattern, cfg.seeds, cfg.steps, cfg.burn_in, cfg.draws, cfg.l1_ratio)
    methods = tuple(m.strip() for m in cfg.methods.split(",") if m.strip())
    bad = set(methods) - set(METHODS)
    if bad:
        raise ConfigError(f"unknown methods: {sorted(bad)}")
    result = run_experiment(design, methods, cfg.processes)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.to_csv(), encoding="utf-8")
    (out / "results.json").write_text(result.to_json() + "\n", encoding="utf-8")
    table = result.format_table()
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def _cmd_ingest(cfg: RunConfig) -> int:
    data, names = _load_input(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_csv(data, out / "series.csv", names)
    value, ok = check_condition1(data, cfg.cond1_threshold)
    print(f"p = {data.p}, n = {data.n}; Condition 1 value {value:.4f} "
          f"({'passes' if ok else 'fails'} threshold {cfg.cond1_threshold:g})")
    return 0


COMMANDS = {"simulate": _cmd_simulate, "select": _cmd_select, "check": _cmd_check,
            "bench": _cmd_bench, "ingest": _cmd_ingest}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except (CsvFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RankDeficient, DegenerateGraph, DegenerateChain) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
