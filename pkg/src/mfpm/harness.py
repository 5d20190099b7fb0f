"""Experiment driver: budget sweeps over repeated realizations, CSV output.

Within a repetition every policy sees the same world (edge outcomes), drawn
from the root seed and the repetition index; decision randomness comes from
a separate stream per (repetition, policy). Budgets are swept in one pass
per (repetition, policy), which gives the same rows as separate runs.

The main CSV holds only deterministic columns so reruns are byte-identical;
wall-clock times go to ``<output>.timing.csv`` and per-(policy, budget)
means to ``<output>.summary.csv``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diffusion import sample_realization
from .estimation import DEFAULT_SAMPLE_CAP
from .network import (ParamConfig, build_multi_level, load_network, parse_bool, parse_kv_file)
from .policies import DETERMINISTIC, EXPECTED, POLICY_NAMES, PolicyParams, run_policy_sweep

log = logging.getLogger(__name__)

COLUMNS = ("dataset", "policy", "q", "budget", "rep", "seeds", "total_cost", "realized_profit",
           "estimated_profit", "rr_sets_or_sims_used")
TIMING_COLUMNS = ("policy", "budget", "rep", "wallclock_ms")
ENV_STREAM, DECISION_STREAM = 1, 2


class ConfigError(ValueError):
    pass


class SummaryError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    output: str
    network: ParamConfig = field(default_factory=ParamConfig)
    budgets: tuple = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
    policies: tuple = ("SAG", "AMP", "AMD", "AR")
    repetitions: int = 30
    eps: float = 0.5
    eta: float = 0.1
    delta_prime: float = 0.1
    eps_hat: float = 0.1
    mc_sims: int = 500
    seed: int = 0
    workers: int = 1
    rr_cap: int = DEFAULT_SAMPLE_CAP
    knapsack: str = EXPECTED

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.budgets or any(not b >= 0 for b in self.budgets):
            raise ConfigError("budgets must be a nonempty list of nonnegative numbers")
        bad = [p for p in self.policies if p not in POLICY_NAMES]
        if bad or not self.policies:
            raise ConfigError(f"unknown policy {bad}; choose from {', '.join(POLICY_NAMES)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.knapsack not in (EXPECTED, DETERMINISTIC):
            raise ConfigError(f"knapsack must be '{EXPECTED}' or '{DETERMINISTIC}'")

    @property
    def q(self) -> int:
        return self.network.q

    @property
    def policy_params(self) -> PolicyParams:
        return PolicyParams(self.eps, self.eta, self.delta_prime, self.eps_hat, self.mc_sims,
                            self.rr_cap, self.knapsack)

    @classmethod
    def from_mapping(cls, kv: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        kv = dict(kv)
        try:
            dataset, output = kv.pop("dataset"), kv.pop("output")
        except KeyError as exc:
            raise ConfigError(f"missing required key {exc.args[0]!r}") from None
        if base_dir is not None:
            dataset = str(base_dir / dataset) if not Path(dataset).is_absolute() else dataset
            output = str(base_dir / output) if not Path(output).is_absolute() else output
        net_keys = ("q", "directed", "rng_seed", "cost_range", "profit_range")
        network = ParamConfig.from_mapping({k: kv.pop(k) for k in net_keys if k in kv})
        conv = {
            "budgets": lambda v: tuple(_floats(v)),
            "policies": lambda v: tuple(p.strip().upper() for p in v.replace(",", " ").split()),
            "repetitions": int, "eps": float, "eta": float, "delta_prime": float,
            "eps_hat": float, "mc_sims": int, "seed": int, "workers": int,
            "rr_cap": lambda v: int(float(v)), "knapsack": str.strip,
        }
        kwargs = {}
        for key, value in kv.items():
            if key == "deterministic_knapsack":
                if parse_bool(value):
                    kwargs["knapsack"] = DETERMINISTIC
                continue
            if key not in conv:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = conv[key](value)
        return cls(dataset=dataset, output=output, network=network, **kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_mapping(parse_kv_file(path), path.parent)


def _fmt(x: float) -> str:
    return repr(float(x))


def _cell(task):
    """Run one (policy, repetition) cell over all positive budgets."""
    cfg, net, mlg, policy, rep = task
    root = cfg.seed
    world = sample_realization(mlg, np.random.default_rng([root, ENV_STREAM, rep]))
    decision = np.random.default_rng([root, DECISION_STREAM, rep, POLICY_NAMES.index(policy)])
    positive = [b for b in cfg.budgets if b > 0]
    results = run_policy_sweep(policy, net, mlg, positive, decision, world,
                               cfg.policy_params) if positive else {}
    rows, timing = [], []
    for b in cfg.budgets:
        r = results.get(float(b))
        if r is None:
            seeds, cost, realized, est, used, wall = "", 0.0, 0.0, 0.0, 0, 0.0
        else:
            seeds = ";".join(net.labels[s] for s in r.seeds)
            cost, realized, est, used = r.total_cost, r.realized_profit, r.estimated_profit, \
                r.samples_used
            wall = r.wallclock * 1000.0
        rows.append((policy, float(b), rep, seeds, cost, realized, est, used))
        timing.append((policy, float(b), rep, wall))
    return rows, timing


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every (policy, budget, repetition) cell and write the CSV files.

    Returns the path of the main CSV.
    """
    net = load_network(cfg.dataset, cfg.network)
    mlg = build_multi_level(net)
    tasks = [(cfg, net, mlg, p, rep) for p in cfg.policies for rep in range(cfg.repetitions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            outputs = list(pool.map(_cell, tasks))
    else:
        outputs = [_cell(t) for t in tasks]
    rows = [r for out, _ in outputs for r in out]
    timing = [t for _, out in outputs for t in out]
    order = {p: i for i, p in enumerate(cfg.policies)}
    rows.sort(key=lambda r: (order[r[0]], r[1], r[2]))
    timing.sort(key=lambda r: (order[r[0]], r[1], r[2]))

    out = Path(cfg.output)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory for {out}: {exc}") from exc
    name = Path(cfg.dataset).stem
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for policy, b, rep, seeds, cost, realized, est, used in rows:
        w.writerow((name, policy, cfg.q, _fmt(b), rep, seeds, _fmt(cost), _fmt(realized),
                    _fmt(est), used))
    out.write_text(buf.getvalue(), encoding="utf-8")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for policy, b, rep, wall in timing:
        w.writerow((policy, _fmt(b), rep, f"{wall:.3f}"))
    timing_path(out).write_text(buf.getvalue(), encoding="utf-8")

    summary = summarize_rows(read_rows(out), _read_timing(timing_path(out)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summary:
        w.writerow([_fmt(s[k]) if isinstance(s[k], float) else s[k] for k in SUMMARY_COLUMNS])
    summary_path(out).write_text(buf.getvalue(), encoding="utf-8")
    log.info("wrote %d rows to %s", len(rows), out)
    return out


def timing_path(out: Path) -> Path:
    return out.with_name(out.stem + ".timing.csv")


def summary_path(out: Path) -> Path:
    return out.with_name(out.stem + ".summary.csv")


# ----------------------------------------------------------------- summaries

SUMMARY_COLUMNS = ("policy", "budget", "runs", "mean_profit", "std_profit", "mean_cost",
                   "std_cost", "mean_wallclock_ms")


def read_rows(path) -> list[dict]:
    """Parse a result CSV; raises SummaryError on anything malformed or empty."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise SummaryError(f"cannot read {path}: {exc}") from None
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise SummaryError(f"{path}: empty file")
    missing = [c for c in COLUMNS if c not in reader.fieldnames]
    if missing:
        raise SummaryError(f"{path}: missing columns {missing}")
    rows = []
    for lineno, raw in enumerate(reader, 2):
        try:
            if None in raw or any(raw[c] is None for c in COLUMNS):
                raise ValueError("wrong number of fields")
            rows.append({
                "policy": raw["policy"], "budget": float(raw["budget"]), "rep": int(raw["rep"]),
                "total_cost": float(raw["total_cost"]),
                "realized_profit": float(raw["realized_profit"]),
                "estimated_profit": float(raw["estimated_profit"]),
            })
        except ValueError as exc:
            raise SummaryError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise SummaryError(f"{path}: no data rows")
    return rows


def _read_timing(path) -> dict:
    path = Path(path)
    if not path.exists():
        return {}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            try:
                out[(raw["policy"], float(raw["budget"]), int(raw["rep"]))] = \
                    float(raw["wallclock_ms"])
            except (KeyError, TypeError, ValueError):
                continue
    return out


def summarize_rows(rows, timing=None) -> list[dict]:
    timing = timing or {}
    groups = defaultdict(list)
    for r in rows:
        groups[(r["policy"], r["budget"])].append(r)
    out = []
    for (policy, budget), rs in groups.items():
        profits = [r["realized_profit"] for r in rs]
        costs = [r["total_cost"] for r in rs]
        walls = [timing[(policy, budget, r["rep"])] for r in rs
                 if (policy, budget, r["rep"]) in timing]
        out.append({
            "policy": policy, "budget": budget, "runs": len(rs),
            "mean_profit": statistics.fmean(profits),
            "std_profit": statistics.stdev(profits) if len(rs) > 1 else 0.0,
            "mean_cost": statistics.fmean(costs),
            "std_cost": statistics.stdev(costs) if len(rs) > 1 else 0.0,
            "mean_wallclock_ms": statistics.fmean(walls) if walls else math.nan,
        })
    return out


def summarize(path) -> list[dict]:
    """Print per-(policy, budget) means to stdout and return them."""
    path = Path(path)
    table = summarize_rows(read_rows(path), _read_timing(timing_path(path)))
    print(f"{'policy':<7}{'budget':>8}{'runs':>6}{'mean_profit':>14}{'mean_cost':>12}"
          f"{'wallclock_ms':>14}")
    for s in table:
        print(f"{s['policy']:<7}{s['budget']:>8g}{int(s['runs']):>6}{s['mean_profit']:>14.4f}"
              f"{s['mean_cost']:>12.4f}{s['mean_wallclock_ms']:>14.1f}")
    return table


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
