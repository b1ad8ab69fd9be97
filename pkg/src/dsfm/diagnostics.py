"""Empirical checks of the condition-number theory for DSFM.

The transport construction moves a point ``y`` of ``P`` onto the optimal set
``E = {x in P: Ax = s*}`` by augmenting along shortest positive-capacity
paths, reusing the flow module with target ``s*``.  Ratios reported here are
"certified": the distance to ``E`` is replaced by the distance to an explicit
point of ``E``, so each ratio upper-bounds the true ``kappa(y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import BlockVector, DecomposableInstance, DSFMError, InputError, SolverError, greedy_vertex
from .flow import FLOW_EPS, TAU_FLOW, AuxiliaryGraph, FlowStats, run_ekd
from .gradient import ProxState, rcdm_step
from .level0 import Level0, OracleRequest, fujishige_wolfe
from .potentials import MatchingCutPotential

TAU_D = 1e-6


class TransportError(DSFMError):
    """No positive-capacity path although some node still has a deficit."""

    category = "transport"


def min_norm_gap(inst: DecomposableInstance, z: np.ndarray) -> float:
    """Wolfe gap ``||z||^2 - min_{q in B(f)} <z, q>``; bounds ``||z - s*||^2`` for ``z in B(f)``."""
    q = inst.greedy(-z)
    return float(z @ z - z @ q)


def compute_sstar(inst: DecomposableInstance, precision: float = 1e-12, level0: Level0 | None = None,
                  max_iterations: int | None = None, seed: int = 0, cross_check: bool = True,
                  y0: BlockVector | None = None):
    """Min-norm point of ``B(f)`` by coordinate descent; returns ``(s_star, y)`` with ``Ay = s_star``.

    Runs until the min-norm gap is at most ``precision``.  For ``n <= 12``
    the result is compared with Fujishige-Wolfe run on ``f`` as a whole.
    ``y0`` seeds the descent (for instances with a known decomposition).
    """
    level0 = level0 or Level0(inst, eps=FLOW_EPS)
    max_iterations = max_iterations or 20000 * inst.r
    state = ProxState.start(inst, level0, y0=y0, seed=seed)
    chunk = 5 * inst.r
    gap = min_norm_gap(inst, state.y.aggregate)
    while gap > precision:
        if state.iteration >= max_iterations:
            raise SolverError(f"min-norm gap {gap:.3e} above {precision:.1e} after {state.iteration} iterations",
                              dump={"gap": gap, "iterations": state.iteration})
        for _ in range(chunk):
            rcdm_step(state)
        gap = min_norm_gap(inst, state.y.aggregate)
    sstar = state.y.aggregate.copy()
    if cross_check and inst.n <= 12:
        ref, st = fujishige_wolfe(OracleRequest(inst.as_potential(), np.zeros(inst.n), eps=1e-14))
        if np.abs(ref - sstar).max() > 1e-5 * (1.0 + np.abs(ref).max()):
            raise SolverError("coordinate descent and whole-function Wolfe disagree on s*",
                              dump={"rcdm": sstar.tolist(), "wolfe": ref.tolist()})
    return sstar, state.y


@dataclass
class TransportStats:
    augmentations: int
    residual_l1: float
    residual_l2: float
    dist_l2: float
    dist_l1: float
    dist_linf: float
    final_residual: float
    n: int

    @property
    def sqrt_n_bound(self) -> float:
        """``sqrt(n)/2 * ||Ay - s*||_1``."""
        return 0.5 * math.sqrt(self.n) * self.residual_l1

    @property
    def path_bound(self) -> float:
        """``sqrt((n-1)/2) * ||Ay - s*||_1``, from ``l1 <= (n-1)||.||_1`` and ``linf <= ||.||_1/2``."""
        return math.sqrt(max(self.n - 1, 0) / 2.0) * self.residual_l1

    @property
    def linf_bound(self) -> float:
        return 0.5 * self.residual_l1

    @property
    def l1_bound(self) -> float:
        """Per-path ``l1`` movement ``n * eps`` summed over paths."""
        return 0.5 * self.n * self.residual_l1

    @property
    def l1_path_bound(self) -> float:
        """``2 |Q| eps`` per path with ``|Q| <= n - 1`` arcs."""
        return max(self.n - 1, 0) * self.residual_l1


def decompose_transport(inst: DecomposableInstance, y: BlockVector, sstar: np.ndarray,
                        level0: Level0 | None = None, tau: float = TAU_FLOW, tau_d: float = TAU_D,
                        check_membership: bool = False):
    """Move ``y`` to a point ``x in P`` with ``Ax = s*``; returns ``(x, TransportStats)``.

    Raises
    ------
    TransportError
        if a deficit remains with no positive-capacity path to an excess,
        meaning ``s*`` is outside ``B(f)`` or a level-0 answer was inexact.
    """
    sstar = np.asarray(sstar, dtype=float)
    if sstar.shape != (inst.n,):
        raise InputError("target has the wrong length")
    level0 = level0 or Level0(inst, eps=FLOW_EPS)
    x = y.copy()
    graph = AuxiliaryGraph(inst, x, level0, target=sstar, tau=tau)
    stats = run_ekd(graph, stats=FlowStats())
    resid = x.aggregate - sstar
    if graph.sources().size:
        raise TransportError(f"no augmenting path; remaining deficit {graph.deficit().max():.3e}")
    if np.abs(resid).max(initial=0.0) > tau_d:
        raise TransportError(f"transport residual {np.abs(resid).max():.3e} above {tau_d:.1e}")
    if check_membership and not x.is_member(1e-7):
        raise SolverError("transport left the product of base polytopes")
    diff = x.flat() - y.flat()
    r0 = y.aggregate - sstar
    return x, TransportStats(
        augmentations=stats.augmentations,
        residual_l1=float(np.abs(r0).sum()),
        residual_l2=float(np.linalg.norm(r0)),
        dist_l2=float(np.linalg.norm(diff)),
        dist_l1=float(np.abs(diff).sum()),
        dist_linf=float(np.abs(diff).max(initial=0.0)),
        final_residual=float(np.abs(resid).max(initial=0.0)),
        n=inst.n,
    )


@dataclass
class DiagnosticsContext:
    inst: DecomposableInstance
    sstar: np.ndarray
    ystar: BlockVector
    level0: Level0
    tau_d: float = TAU_D

    @classmethod
    def build(cls, inst: DecomposableInstance, precision: float = 1e-12, seed: int = 0,
              tau_d: float = TAU_D, y0: BlockVector | None = None) -> "DiagnosticsContext":
        level0 = Level0(inst, eps=FLOW_EPS)
        sstar, ystar = compute_sstar(inst, precision, level0, seed=seed, y0=y0)
        return cls(inst, sstar, ystar, level0, tau_d)

    def transport(self, y: BlockVector):
        return decompose_transport(self.inst, y, self.sstar, self.level0, tau_d=self.tau_d)

    @property
    def kappa_bound(self) -> float:
        return self.inst.n * math.sqrt(self.inst.r) / 2.0 + 1.0


def random_point(inst: DecomposableInstance, rng: np.random.Generator, max_vertices: int = 3) -> BlockVector:
    """Blockwise convex mixture of 1..max_vertices random greedy vertices."""
    blocks = []
    for pot in inst.potentials:
        m = int(rng.integers(1, max_vertices + 1))
        verts = np.array([greedy_vertex(pot, rng.normal(size=pot.size)) for _ in range(m)])
        blocks.append(rng.dirichlet(np.ones(m)) @ verts)
    return BlockVector(inst, blocks)


def certified_ratio(ctx: DiagnosticsContext, y: BlockVector):
    """Ratio for ``y in P``: ``||x - y|| * sqrt(r) / ||Ay - s*||``, or None if ``Ay = s*``."""
    x, st = ctx.transport(y)
    if st.residual_l2 <= 1e-9:
        return None
    return st.dist_l2 * math.sqrt(ctx.inst.r) / st.residual_l2


def certified_ratio_affine(ctx: DiagnosticsContext, Y: np.ndarray):
    """Ratio for a dense ``(r, n)`` point ``Y`` with ``sum_i Y_i = s*``.

    ``q`` is the blockwise projection onto ``P`` (zero off the supports); the
    transported ``q`` gives the point of ``E``.  Returns None when ``Y in P``.
    """
    inst = ctx.inst
    q = BlockVector(inst, [ctx.level0.quad(i, -Y[i, p.support]) for i, p in enumerate(inst.potentials)])
    denom = float(np.linalg.norm(Y - q.dense()))
    if denom <= 1e-9:
        return None
    x, _ = ctx.transport(q)
    return float(np.linalg.norm(Y - x.dense())) / denom


def affine_sample(ctx: DiagnosticsContext, rng: np.random.Generator) -> np.ndarray:
    """Optimal decomposition plus a random perturbation with zero column sums."""
    inst = ctx.inst
    P = rng.normal(size=(inst.r, inst.n))
    P -= P.mean(axis=0)
    return ctx.ystar.dense() + P * math.exp(rng.normal())


@dataclass
class KappaStats:
    bound: float
    ratios_p: list = field(default_factory=list)
    ratios_a: list = field(default_factory=list)
    tol: float = TAU_D

    @property
    def ratios(self) -> np.ndarray:
        return np.array(self.ratios_p + self.ratios_a)

    @property
    def max(self) -> float:
        return float(self.ratios.max(initial=0.0))

    @property
    def violations(self) -> int:
        return int((self.ratios > self.bound + self.tol).sum())

    def to_record(self) -> dict:
        r = self.ratios
        return {
            "kind": "certified-ratio",
            "bound": self.bound,
            "samples": int(r.size),
            "max": self.max,
            "mean": float(r.mean()) if r.size else None,
            "quantiles": np.quantile(r, [0.5, 0.9, 0.99]).tolist() if r.size else [],
            "violations": self.violations,
        }


def estimate_kappa(ctx: DiagnosticsContext, samples: int = 200, seed: int = 0, strict: bool = False) -> KappaStats:
    """Certified ratios on points of ``P`` (even draws) and of ``A'`` (odd draws)."""
    rng = np.random.default_rng(seed)
    out = KappaStats(ctx.kappa_bound, tol=ctx.tau_d)
    for k in range(samples):
        if k % 2 == 0:
            val = certified_ratio(ctx, random_point(ctx.inst, rng))
            if val is not None:
                out.ratios_p.append(val)
        else:
            val = certified_ratio_affine(ctx, affine_sample(ctx, rng))
            if val is not None:
                out.ratios_a.append(val)
    if strict and out.violations:
        raise AssertionError(f"{out.violations} certified ratios exceed {out.bound:.6g}")
    return out


@dataclass
class EllStats:
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    tol: float = TAU_D

    @property
    def violations(self) -> int:
        return int(sum(a > b + self.tol for a, b in zip(self.lhs, self.rhs)))

    def to_record(self) -> dict:
        ratio = [a / b for a, b in zip(self.lhs, self.rhs) if b > 0]
        return {"kind": "ell-surrogate", "samples": len(self.lhs), "violations": self.violations,
                "max_ratio": max(ratio, default=0.0)}


def check_ell(ctx: DiagnosticsContext, samples: int = 200, seed: int = 0) -> EllStats:
    """``||y - x||^2 <= n^2/4 ||A(y - x)||^2`` with ``x`` the transported ``y``."""
    rng = np.random.default_rng(seed)
    n = ctx.inst.n
    out = EllStats(tol=ctx.tau_d)
    for _ in range(samples):
        y = random_point(ctx.inst, rng)
        x, st = ctx.transport(y)
        d = y.aggregate - x.aggregate
        out.lhs.append(st.dist_l2 ** 2)
        out.rhs.append(n * n / 4.0 * float(d @ d))
    return out


def mincut_path_family(n: int, r: int = 2) -> DecomposableInstance:
    """Unit-weight path on ``n`` nodes; edge ``j`` goes to matching ``j mod r``."""
    if n < 2 or r < 2 or r > n - 1:
        raise InputError("need n >= 2 and 2 <= r <= n - 1")
    groups = [[(j, j + 1) for j in range(k, n - 1, r)] for k in range(r)]
    return DecomposableInstance(n, [MatchingCutPotential(g) for g in groups])


def path_lowest_mode(inst: DecomposableInstance) -> BlockVector:
    """Point of ``P`` whose edge flows follow ``sin(pi (j + 1) / n)``."""
    n = inst.n
    blocks = []
    for pot in inst.potentials:
        heads = pot.support[0::2]
        t = np.sin(np.pi * (heads + 1) / n)
        b = np.empty(pot.size)
        b[0::2] = t
        b[1::2] = -t
        blocks.append(b)
    return BlockVector(inst, blocks)
