"""Continuous level-1 solvers for ``min 0.5 ||Ay||^2`` over ``y in P = prod B(f_i)``.

RCDM and ACDM update one block per iteration through the quadratic oracle;
alternating projections (AP) projects all blocks onto their base polytopes
and then onto the subspace ``{a: Aa = 0}``.  All solvers round through
:func:`round_and_certify`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import BlockVector, DecomposableInstance, InputError, SolveReport
from .level0 import Level0

GRADIENT_EPS = 1e-6


def round_and_certify(y: BlockVector | np.ndarray, inst: DecomposableInstance):
    """Best level set of ``x = Ay`` and its certificate gap ``f(S) - x^-(V)``.

    Accepts a :class:`BlockVector` or an aggregate vector in ``B(f)``.
    Returns ``(S, value, gap)``.
    """
    x = y.aggregate if isinstance(y, BlockVector) else np.asarray(y, dtype=float)
    order, prefix = inst.level_set_values(x)
    xs = x[order]
    cuts = np.concatenate([[0], np.flatnonzero(xs[1:] > xs[:-1]) + 1, [inst.n]])
    vals = prefix[cuts]
    best = vals.min()
    k = cuts[np.flatnonzero(vals <= best + 1e-12 * (1.0 + abs(best)))[0]]
    S = frozenset(order[:k].tolist())
    value = float(prefix[k])
    gap = value - float(np.minimum(x, 0.0).sum())
    return S, value, max(gap, 0.0)


class _Sampler:
    """Uniform block indices from a PCG64 stream, drawn in chunks."""

    def __init__(self, r: int, seed: int, chunk: int = 4096):
        self.r = r
        self.rng = np.random.default_rng(seed)
        self.chunk = chunk
        self.buf = np.empty(0, dtype=np.int64)
        self.pos = 0

    def __call__(self) -> int:
        if self.pos >= self.buf.size:
            self.buf = self.rng.integers(0, self.r, size=self.chunk)
            self.pos = 0
        i = int(self.buf[self.pos])
        self.pos += 1
        return i


@dataclass
class ProxState:
    inst: DecomposableInstance
    level0: Level0
    y: BlockVector
    seed: int = 0
    iteration: int = 0
    sampler: _Sampler = field(init=False, repr=False)

    def __post_init__(self):
        self.sampler = _Sampler(self.inst.r, self.seed)

    @classmethod
    def start(cls, inst, level0=None, y0=None, seed=0) -> "ProxState":
        level0 = level0 or Level0(inst, eps=GRADIENT_EPS)
        y = y0.copy() if y0 is not None else BlockVector.greedy(inst)
        return cls(inst, level0, y, seed)


def rcdm_step(state: ProxState, i: int | None = None) -> ProxState:
    """Exact minimization of ``0.5 ||Ay||^2`` over one uniformly sampled block."""
    if i is None:
        i = state.sampler()
    y = state.y
    sup = state.inst.potentials[i].support
    cur = y.blocks[i]
    y.set_block(i, state.level0.quad(i, y.aggregate[sup] - cur, warm_start=cur))
    state.iteration += 1
    return state


def _report(name, inst, level0, y, iterations, t0, history, converged=True):
    S, value, gap = round_and_certify(y, inst)
    return SolveReport(
        solver=name,
        minimizer=S,
        value=value,
        lower_bound=value - gap,
        objective=y.objective(),
        iterations=iterations,
        oracle_calls=level0.calls.copy(),
        oracle_time=level0.time.copy(),
        wall_time=time.perf_counter() - t0,
        certified=gap <= 1e-9 * (1.0 + abs(value)),
        converged=converged,
        warnings=[f"{level0.inexact_calls} level-0 calls stopped early"] if level0.inexact_calls else [],
        x=y,
        history=history,
    )


def _budget(inst, iterations, default=None):
    if iterations is None:
        iterations = 1000 * inst.r if default is None else default
    iterations = int(iterations)
    if iterations < 1:
        raise InputError("iteration budget must be at least 1")
    return iterations


def solve_rcdm(inst: DecomposableInstance, iterations: int | None = None, seed: int = 0,
               level0: Level0 | None = None, y0: BlockVector | None = None,
               tol: float | None = None, check_every: int | None = None) -> SolveReport:
    """Random coordinate descent; default budget ``1000 r`` iterations.

    With ``tol`` the run stops early once the rounded certificate gap is at
    most ``tol`` (checked every ``check_every`` iterations, default ``r``).
    """
    t0 = time.perf_counter()
    iterations = _budget(inst, iterations)
    state = ProxState.start(inst, level0, y0, seed)
    check_every = check_every or inst.r
    history = []
    while state.iteration < iterations:
        for _ in range(min(check_every, iterations - state.iteration)):
            rcdm_step(state)
        if tol is not None:
            gap = round_and_certify(state.y, inst)[2]
            history.append((state.iteration, state.y.objective(), gap))
            if gap <= tol:
                break
    return _report("rcdm", inst, state.level0, state.y, state.iteration, t0, history)


class AcdmState:
    """APPROX-style accelerated coordinate descent with the ``(u, z)`` change of variables.

    The iterate is ``x = theta^2 u + z``; only block ``i`` of ``u`` and ``z``
    changes per step.  ``frozen=True`` keeps ``r * theta = 1``, which turns
    every step into a plain RCDM step.
    """

    def __init__(self, prox: ProxState, frozen: bool = False):
        self.prox = prox
        self.frozen = frozen
        self.restart(prox.y)

    def restart(self, x: BlockVector):
        inst = self.prox.inst
        self.z = x.copy()
        self.u = [np.zeros(p.size) for p in inst.potentials]
        self.Au = np.zeros(inst.n)
        self.theta = 1.0 / inst.r
        self.theta_last = 0.0
        self.since = 0
        self.start = x.copy()
        self.f_start = x.objective()

    def point(self) -> BlockVector:
        if self.since == 0:
            return self.z.copy()
        t2 = self.theta_last ** 2
        return BlockVector(self.prox.inst, [t2 * u + z for u, z in zip(self.u, self.z.blocks)])

    def step(self):
        prox = self.prox
        inst = prox.inst
        r = inst.r
        i = prox.sampler()
        sup = inst.potentials[i].support
        th = self.theta
        zi = self.z.blocks[i]
        g = th * th * self.Au[sup] + self.z.aggregate[sup]
        if self.frozen:
            w = g - zi
        else:
            w = g / (r * th) - zi
        znew = prox.level0.quad(i, w, warm_start=zi)
        t = znew - zi
        self.z.set_block(i, znew)
        coef = (1.0 - r * th) / (th * th)
        if coef:
            self.u[i] = self.u[i] - coef * t
            self.Au[sup] -= coef * t
        self.theta_last = th
        if not self.frozen:
            self.theta = 0.5 * (math.sqrt(th ** 4 + 4 * th * th) - th * th)
        self.since += 1
        prox.iteration += 1

    def end_epoch(self, keep_end: bool = False) -> BlockVector:
        """Restart momentum from the better of the epoch's start and end points."""
        end = self.point()
        best = end if keep_end or end.objective() <= self.f_start else self.start
        self.prox.y = best
        self.restart(best)
        return best


def acdm_epoch(state: AcdmState, length: int | None = None) -> AcdmState:
    """One epoch of accelerated steps followed by a restart from the better of start/end."""
    inst = state.prox.inst
    for _ in range(length or math.ceil(inst.r * inst.n / 2)):
        state.step()
    state.end_epoch()
    return state


def solve_acdm(inst: DecomposableInstance, iterations: int | None = None, seed: int = 0,
               level0: Level0 | None = None, y0: BlockVector | None = None,
               tol: float | None = None, epoch_length: int | None = None,
               check_every: int | None = None) -> SolveReport:
    """Accelerated coordinate descent with restarts; epochs of ``ceil(r n / 2)`` steps by default."""
    t0 = time.perf_counter()
    iterations = _budget(inst, iterations)
    prox = ProxState.start(inst, level0, y0, seed)
    state = AcdmState(prox)
    epoch_length = epoch_length or math.ceil(inst.r * inst.n / 2)
    check_every = check_every or inst.r
    history = []
    while prox.iteration < iterations:
        state.step()
        done = False
        if tol is not None and (state.since % check_every == 0 or prox.iteration == iterations):
            cur = state.point()
            gap = round_and_certify(cur, inst)[2]
            history.append((prox.iteration, cur.objective(), gap))
            done = gap <= tol
        if done:
            state.end_epoch(keep_end=True)
            break
        if state.since == epoch_length or prox.iteration == iterations:
            state.end_epoch()
    return _report("acdm", inst, prox.level0, prox.y, prox.iteration, t0, history)


def solve_ap(inst: DecomposableInstance, iterations: int | None = None, level0: Level0 | None = None,
             tol: float | None = None) -> SolveReport:
    """Alternating projections between ``P`` and ``{a: Aa = 0}``.

    ``iterations`` counts sweeps of ``r`` oracle calls each (default 1000).

    The subspace projection subtracts ``(Ax)(v) / deg(v)`` from every block
    containing ``v``.  ``history`` holds ``||a - x||`` per sweep.
    """
    t0 = time.perf_counter()
    iterations = _budget(inst, iterations, default=1000)
    level0 = level0 or Level0(inst, eps=GRADIENT_EPS)
    pots = inst.potentials
    deg = np.maximum(inst.degree, 1).astype(float)
    a = [np.zeros(p.size) for p in pots]
    x = BlockVector.greedy(inst)
    history = []
    k = 0
    while k < iterations:
        blocks = [level0.quad(i, -a[i], warm_start=x.blocks[i]) for i in range(inst.r)]
        x = BlockVector(inst, blocks)
        dist = math.sqrt(sum(float((ai - xi) @ (ai - xi)) for ai, xi in zip(a, blocks)))
        shift = x.aggregate / deg
        a = [xi - shift[p.support] for xi, p in zip(blocks, pots)]
        k += 1
        history.append(dist)
        if tol is not None and round_and_certify(x, inst)[2] <= tol:
            break
    return _report("ap", inst, level0, x, k, t0, history)
