"""Benchmark runner producing budget-by-solver tables.

Coordinate-descent solvers run once per trial up to the largest budget and
are checkpointed at every smaller one, so each table cell is the state after
exactly that many iterations and the time spent to reach it.  AP counts one
sweep (``r`` oracle calls) per ``r`` budget units.  Flow solvers have no
budget and fill a single row.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..core import BlockVector, DecomposableInstance, DSFMError, InputError, SolveReport
from ..flow import FLOW_EPS, solve_flow_ekd, solve_flow_ibfs
from ..gradient import GRADIENT_EPS, AcdmState, ProxState, rcdm_step, round_and_certify
from ..level0 import Level0, OraclePolicy

log = logging.getLogger(__name__)

SCHEMA = "dsfm-bench/1"
SOLVERS = ("ibfs", "ekd", "rcdm", "acdm", "ap")
FLOW_SOLVERS = ("ibfs", "ekd")
DEFAULT_BUDGETS = (5, 10, 100, 1000)


@dataclass
class BenchmarkConfig:
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    budgets: list = field(default_factory=lambda: list(DEFAULT_BUDGETS))
    oracle: str = "specific"
    oracle_per_kind: dict = field(default_factory=dict)
    seed: int = 0
    trials: int = 10
    strict: bool = False
    instance: str | None = None

    def __post_init__(self):
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise InputError(f"unknown solvers {bad}; choose from {list(SOLVERS)}")
        if not self.budgets or min(self.budgets) < 1:
            raise InputError("iteration budgets must be at least 1 (in multiples of r)")
        if self.trials < 1:
            raise InputError("trials must be at least 1")
        self.budgets = sorted(int(b) for b in self.budgets)
        OraclePolicy.parse(self.oracle)
        for spec in self.oracle_per_kind.values():
            OraclePolicy.parse(spec)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "BenchmarkConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise InputError(f"no such config file: {path}") from None
        except json.JSONDecodeError as err:
            raise InputError(f"{path}: invalid JSON ({err})") from None
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.instance is not None and not os.path.isabs(cfg.instance):
            cfg.instance = str(path.parent / cfg.instance)
        return cfg

    def level0(self, inst: DecomposableInstance, eps: float) -> Level0:
        per_kind = {k: OraclePolicy.parse(v) for k, v in self.oracle_per_kind.items()}
        return Level0(inst, OraclePolicy.parse(self.oracle), per_kind, eps=eps)


def _checkpoint(name, inst, level0, y, iterations, elapsed) -> SolveReport:
    S, value, gap = round_and_certify(y, inst)
    return SolveReport(
        solver=name, minimizer=S, value=value, lower_bound=value - gap, objective=y.objective(),
        iterations=iterations, oracle_calls=level0.calls.copy(), oracle_time=level0.time.copy(),
        wall_time=elapsed, certified=gap <= 1e-9 * (1.0 + abs(value)), converged=True,
        warnings=[f"{level0.inexact_calls} level-0 calls stopped early"] if level0.inexact_calls else [],
    )


def _run_descent(name, inst, cfg, seed, budgets):
    """Reports after ``b * r`` iterations for every ``b`` in ``budgets``."""
    level0 = cfg.level0(inst, GRADIENT_EPS)
    r = inst.r
    out = {}
    t0 = time.perf_counter()
    if name == "ap":
        deg = np.maximum(inst.degree, 1).astype(float)
        pots = inst.potentials
        a = [np.zeros(p.size) for p in pots]
        x = BlockVector.greedy(inst)
        for k in range(1, budgets[-1] + 1):
            x = BlockVector(inst, [level0.quad(i, -a[i], warm_start=x.blocks[i]) for i in range(r)])
            shift = x.aggregate / deg
            a = [xi - shift[p.support] for xi, p in zip(x.blocks, pots)]
            if k in budgets:
                out[k] = _checkpoint(name, inst, level0, x, k * r, time.perf_counter() - t0)
        return out
    prox = ProxState.start(inst, level0, seed=seed)
    if name == "rcdm":
        for b in budgets:
            while prox.iteration < b * r:
                rcdm_step(prox)
            out[b] = _checkpoint(name, inst, level0, prox.y, prox.iteration, time.perf_counter() - t0)
        return out
    state = AcdmState(prox)
    epoch = math.ceil(r * inst.n / 2)
    for b in budgets:
        while prox.iteration < b * r:
            state.step()
            if state.since == epoch:
                state.end_epoch()
        out[b] = _checkpoint(name, inst, level0, state.point(), prox.iteration, time.perf_counter() - t0)
    return out


def _run_flow(name, inst, cfg):
    level0 = cfg.level0(inst, FLOW_EPS)
    solver = solve_flow_ibfs if name == "ibfs" else solve_flow_ekd
    return solver(inst, level0=level0, strict=cfg.strict)


@dataclass
class BenchmarkRow:
    solver: str
    budget: int | None
    trials: int = 0
    failures: int = 0
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    oracle_calls: list = field(default_factory=list)
    certified: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return self.failures == 0

    def summary(self) -> dict:
        def mean(v):
            return float(np.mean(v)) if v else None

        return {
            "solver": self.solver,
            "budget": f"{self.budget}r" if self.budget else None,
            "trials": self.trials,
            "failures": self.failures,
            "complete": self.complete,
            "time": mean(self.times),
            "value": mean(self.values),
            "gap": mean(self.gaps),
            "oracle_calls": mean(self.oracle_calls),
            "certified": all(self.certified) if self.certified else False,
            "errors": sorted(set(self.errors)),
        }


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    n: int
    r: int
    rows: list

    def row(self, solver: str, budget: int | None = None) -> BenchmarkRow:
        for row in self.rows:
            if row.solver == solver and row.budget == budget:
                return row
        raise KeyError((solver, budget))

    def to_record(self) -> dict:
        return {
            "schema": SCHEMA,
            "n": self.n,
            "r": self.r,
            "trials": self.config.trials,
            "config": asdict(self.config),
            "columns": ["solver", "budget", "time", "value", "gap", "oracle_calls"],
            "rows": [row.summary() for row in self.rows],
        }

    def table(self) -> str:
        """Human-readable table; incomplete rows are marked with ``*``."""
        lines = [f"n = {self.n}, r = {self.r}; averaged over {self.config.trials} trials",
                 f"{'solver':<6} {'# iter':>8} {'time [s]':>10} {'value':>16} {'gap':>10} {'oracle calls':>13}"]
        for row in self.rows:
            s = row.summary()
            budget = s["budget"] or "-"
            if s["value"] is None:
                lines.append(f"{row.solver:<6} {budget:>8} {'failed':>10}  {'; '.join(s['errors'])}")
                continue
            mark = "" if row.complete else " *"
            flag = "" if s["certified"] else " (uncertified)"
            lines.append(f"{row.solver:<6} {budget:>8} {s['time']:>10.4f} {s['value']:>16.8g} "
                         f"{s['gap']:>10.2e} {s['oracle_calls']:>13.0f}{flag}{mark}")
        if any(not row.complete for row in self.rows):
            lines.append("* incomplete: some trials failed")
        return "\n".join(lines)


def run_benchmark(config: BenchmarkConfig, inst: DecomposableInstance) -> BenchmarkResult:
    """Run every configured solver ``config.trials`` times; trial ``t`` uses seed ``config.seed + t``."""
    rows = []
    for name in config.solvers:
        if name in FLOW_SOLVERS:
            group = {None: BenchmarkRow(name, None)}
        else:
            group = {b: BenchmarkRow(name, b) for b in config.budgets}
        for t in range(config.trials):
            try:
                if name in FLOW_SOLVERS:
                    reports = {None: _run_flow(name, inst, config)}
                else:
                    reports = _run_descent(name, inst, config, config.seed + t, config.budgets)
            except DSFMError as err:
                log.warning("%s trial %d failed: %s", name, t, err)
                for row in group.values():
                    row.trials += 1
                    row.failures += 1
                    row.errors.append(f"{err.category}: {err}")
                continue
            for key, rep in reports.items():
                row = group[key]
                row.trials += 1
                row.times.append(rep.wall_time)
                row.values.append(rep.value)
                row.gaps.append(rep.gap)
                row.oracle_calls.append(int(rep.oracle_calls.sum()))
                row.certified.append(bool(rep.certified))
                row.errors.extend(rep.warnings)
        rows.extend(group.values())
    return BenchmarkResult(config, inst.n, inst.r, rows)
