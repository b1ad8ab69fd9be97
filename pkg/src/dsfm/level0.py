"""Level-0 oracles: quadratic minimization and SFM over a single potential.

The generic quadratic oracle is the Fujishige-Wolfe minimum-norm-point
algorithm.  The reductions between the quadratic oracle and the
"SFM with modular weights" oracle live here as well.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    CapabilityError,
    CertificateError,
    DecomposableInstance,
    InputError,
    SubmodularPotential,
    check_base_membership,
    greedy_vertex,
    subset_masks,
)

BRUTE_LIMIT = 24
AUTO_BRUTE_LIMIT = 10

SfmOracle = Callable[[SubmodularPotential, np.ndarray], "tuple[np.ndarray, float]"]


@dataclass
class OracleRequest:
    potential: SubmodularPotential
    shift: np.ndarray
    eps: float = 1e-10
    max_major: int | None = None
    max_minor: int | None = None
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise InputError("oracle accuracy must be positive")
        self.shift = np.asarray(self.shift, dtype=float)


@dataclass
class WolfeStats:
    major: int = 0
    minor: int = 0
    dropped: int = 0
    converged: bool = False
    gap: float = np.inf
    history: list = field(default_factory=list)


def _affine_minimizer(points: np.ndarray):
    """Coefficients ``a`` (summing to one) minimizing ``||points.T @ a||``."""
    m = points.shape[0]
    gram = points @ points.T
    kkt = gram + 1.0
    try:
        beta = np.linalg.solve(kkt, np.ones(m))
    except np.linalg.LinAlgError:
        beta = np.linalg.lstsq(kkt, np.ones(m), rcond=None)[0]
    total = beta.sum()
    if not np.isfinite(total) or abs(total) < 1e-14:
        return None
    alpha = beta / total
    if np.linalg.norm(kkt @ beta - 1.0) > 1e-8 * max(1.0, np.abs(kkt).max()):
        return None
    return alpha


def fujishige_wolfe(req: OracleRequest):
    """Minimum-norm point of ``B(f) + w``; returns ``(y, stats)`` with ``y in B(f)``.

    Works on shifted points ``z = s + w``.  Stops when Wolfe's gap
    ``||z||^2 - min_s <z, s + w>`` drops below ``eps`` or after ``max_major``
    major cycles (then ``stats.converged`` is False).
    """
    pot, w = req.potential, req.shift
    stats = WolfeStats()

    def lin_min(z):
        return greedy_vertex(pot, -z) + w

    if req.warm_start is not None:
        atoms = [np.asarray(req.warm_start, dtype=float) + w]
    else:
        atoms = [lin_min(w)]
    lam = np.array([1.0])
    z = atoms[0].copy()
    max_minor = req.max_minor if req.max_minor is not None else 10 * (pot.size + 1)
    prev = np.inf

    while True:
        q = lin_min(z)
        zz = float(z @ z)
        gap = zz - float(z @ q)
        stats.gap = gap
        stats.history.append(zz)
        if gap <= max(req.eps, 1e-14 * zz):
            stats.converged = True
            break
        if zz >= prev:
            # no progress in a full major cycle: rounding noise dominates the gap
            stats.converged = gap <= 1e-9 * (1 + zz)
            break
        prev = zz
        if req.max_major is not None and stats.major >= req.max_major:
            break
        if any(np.allclose(q, a, rtol=0, atol=1e-12 * (1 + abs(a).max())) for a in atoms):
            # numerically stalled: q already spans the active face
            stats.converged = gap <= 1e-9 * (1 + zz)
            break
        stats.major += 1
        atoms.append(q)
        lam = np.append(lam, 0.0)
        for _ in range(max_minor):
            stats.minor += 1
            P = np.array(atoms)
            alpha = _affine_minimizer(P)
            if alpha is None:
                # degenerate affine hull: drop the atom with smallest weight (never the new one)
                drop = int(np.argmin(lam[:-1])) if len(atoms) > 1 else 0
                del atoms[drop]
                lam = np.delete(lam, drop)
                lam /= lam.sum()
                stats.dropped += 1
                continue
            if np.all(alpha > 1e-12):
                lam = alpha
                break
            neg = alpha <= 1e-12
            theta = np.min(lam[neg] / (lam[neg] - alpha[neg]))
            lam = theta * alpha + (1.0 - theta) * lam
            keep = lam > 1e-12
            keep[np.argmax(lam)] = True
            atoms = [a for a, k in zip(atoms, keep) if k]
            lam = lam[keep]
            lam /= lam.sum()
        z = lam @ np.array(atoms)
    return z - w, stats


def wolfe_oracle(pot: SubmodularPotential, w: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    return fujishige_wolfe(OracleRequest(pot, w, eps=eps))[0]


def brute_force_sfm(pot: SubmodularPotential, w: np.ndarray):
    """Exhaustive ``argmin_{S subset C} f(S) + w(S)``.

    Returns ``(mask, value)``; ties go to the lexicographically smallest set
    of element ids.
    """
    if pot.size > BRUTE_LIMIT:
        raise CapabilityError(f"brute force limited to supports of size <= {BRUTE_LIMIT}")
    masks = subset_masks(pot.size)
    vals = pot.all_values + masks @ np.asarray(w, dtype=float)
    best = vals.min()
    ties = np.flatnonzero(vals <= best + 1e-12 * (1.0 + abs(best)))
    if ties.size > 1:
        keys = [tuple(sorted(pot.support[masks[t]].tolist())) for t in ties]
        pick = ties[min(range(len(keys)), key=keys.__getitem__)]
    else:
        pick = ties[0]
    return masks[pick].copy(), float(vals[pick])


class _Minor(SubmodularPotential):
    """``g(S) = f(S | base) - f(base)`` for ``S`` inside ``free`` (local indices of the parent)."""

    def __init__(self, parent: SubmodularPotential, base: np.ndarray, free: np.ndarray):
        self.parent = parent
        self.base = base
        self.free = free
        super().__init__(parent.support[free])

    def _raw(self, masks):
        full = np.zeros((masks.shape[0], self.parent.size), dtype=bool)
        full[:, self.base] = True
        full[:, self.free] = masks
        return self.parent.evaluate_masks(full)


def quad_oracle_from_sfm(pot: SubmodularPotential, w: np.ndarray, sfm: SfmOracle | None = None,
                         tol: float = 1e-9, stats: dict | None = None) -> np.ndarray:
    """Exact quadratic oracle from an SFM-with-weights oracle by divide and conquer.

    On a block ``F`` (after contracting ``base``) the pivot level is the average
    ``a = g(F)/|F|`` of ``g = f + w``; a minimizer ``A`` of ``g(S) - a|S|``
    with negative value splits ``F`` into ``A`` and ``F - A``, otherwise the
    block is constant ``a``.  Uses at most ``2|C| - 1`` SFM calls.
    """
    w = np.asarray(w, dtype=float)
    if sfm is None and pot.size <= AUTO_BRUTE_LIMIT:
        return _table_divide_conquer(pot, w, tol, stats)
    sfm = sfm or brute_force_sfm
    k = pot.size
    z = np.empty(k)
    calls = 0
    scale = 1.0 + np.abs(w).sum() + abs(pot.total)
    stack = [(np.zeros(0, dtype=np.intp), np.arange(k))]
    while stack:
        base, free = stack.pop()
        if free.size == 1:
            z[free] = _minor_total(pot, base, free) + w[free].sum()
            continue
        minor = _Minor(pot, base, free)
        level = (minor.total + w[free].sum()) / free.size
        mask, val = sfm(minor, w[free] - level)
        calls += 1
        if val < -tol * scale and 0 < mask.sum() < free.size:
            inner, outer = free[mask], free[~mask]
            stack.append((base, inner))
            stack.append((np.concatenate([base, inner]), outer))
        else:
            z[free] = level
    y = z - w
    if stats is not None:
        stats["sfm_calls"] = calls
    _certify_min_norm(pot, y, w, tol * scale)
    # an external oracle may return a non-minimizer, which leaves y outside B(f)
    if k <= 12 and not check_base_membership(pot, y, tol * scale):
        raise CertificateError("inner SFM oracle not optimal: result outside the base polytope")
    return y


def _table_divide_conquer(pot, w, tol, stats):
    """Same recursion as :func:`quad_oracle_from_sfm` with brute-force SFM on bitmask codes."""
    k = pot.size
    masks = subset_masks(k)
    vals = pot.all_values
    codes = np.arange(1 << k)
    wsum = masks @ w
    pop = masks.sum(axis=1)
    z = np.empty(k)
    calls = 0
    scale = 1.0 + np.abs(w).sum() + abs(pot.total)
    stack = [(0, (1 << k) - 1)]
    while stack:
        base, free = stack.pop()
        nfree = bin(free).count("1")
        bits = [j for j in range(k) if free >> j & 1]
        if nfree == 1:
            j = bits[0]
            z[j] = vals[base | free] - vals[base] + w[j]
            continue
        level = (vals[base | free] - vals[base] + wsum[free]) / nfree
        sub = codes[(codes & ~free) == 0]
        g = vals[base | sub] - vals[base] + wsum[sub] - level * pop[sub]
        calls += 1
        a = int(np.argmin(g))
        A = int(sub[a])
        if g[a] < -tol * scale and A not in (0, free):
            stack.append((base, A))
            stack.append((base | A, free & ~A))
        else:
            z[bits] = level
    y = z - w
    if stats is not None:
        stats["sfm_calls"] = calls
    _certify_min_norm(pot, y, w, tol * scale)
    return y


def _minor_total(pot, base, free):
    full = np.zeros(pot.size, dtype=bool)
    full[base] = True
    lo = pot.value_mask(full)
    full[free] = True
    return pot.value_mask(full) - lo


def _certify_min_norm(pot, y, w, tol):
    """Raise if ``y`` fails Wolfe's optimality test for ``min ||y + w||``."""
    z = y + w
    s = greedy_vertex(pot, -z) + w
    gap = float(z @ z - z @ s)
    if abs(y.sum() - pot.total) > tol or gap > tol * (1.0 + float(np.abs(z).max(initial=0.0))):
        raise CertificateError(f"inner SFM oracle not optimal: min-norm gap {gap:.3e}")


def sfm_from_quad_oracle(pot: SubmodularPotential, w: np.ndarray,
                         quad: Callable[[SubmodularPotential, np.ndarray], np.ndarray] | None = None,
                         tol: float = 1e-9):
    """Smallest minimizer of ``f + w`` from one quadratic-oracle call.

    The minimizer is the negative support of ``y + w``; two thresholds around
    zero guard against rounding and the better candidate is kept.
    """
    w = np.asarray(w, dtype=float)
    y = (quad or _default_quad)(pot, w)
    z = y + w
    scale = tol * (1.0 + float(np.abs(z).max(initial=0.0)))
    cands = np.stack([z < -scale, z <= scale])
    vals = pot.evaluate_masks(cands) + cands @ w
    pick = 0 if vals[0] <= vals[1] + scale else 1
    return cands[pick], float(vals[pick])


def _default_quad(pot, w):
    if pot.has_quad_oracle:
        return pot.quad_oracle(w)
    if pot.size <= AUTO_BRUTE_LIMIT:
        return quad_oracle_from_sfm(pot, w)
    return wolfe_oracle(pot, w)


@dataclass(frozen=True)
class OraclePolicy:
    """How to answer level-0 queries for one potential kind.

    ``method`` is ``specific`` (closed form when available, otherwise exact
    generic), ``wolfe`` or ``brute``.  ``max_major=None`` runs Wolfe to
    convergence.
    """

    method: str = "specific"
    max_major: int | None = None
    max_minor: int | None = None
    warm_start: bool = False
    eps: float = 1e-10

    def __post_init__(self):
        if self.method not in ("specific", "wolfe", "brute"):
            raise InputError(f"unknown oracle method {self.method!r}")

    @property
    def exact(self) -> bool:
        return self.method != "wolfe" or self.max_major is None

    @classmethod
    def parse(cls, text: str) -> "OraclePolicy":
        """``specific``, ``brute``, ``wolfe``, ``wolfe:10`` or ``wolfe:10:warm``."""
        parts = text.split(":")
        if parts[0] != "wolfe":
            if len(parts) > 1:
                raise InputError(f"bad oracle policy {text!r}")
            return cls(parts[0])
        cap = int(parts[1]) if len(parts) > 1 and parts[1] else None
        warm = len(parts) > 2 and parts[2] == "warm"
        return cls("wolfe", max_major=cap, warm_start=warm)

    def __str__(self):
        if self.method != "wolfe":
            return self.method
        return "wolfe" + (f":{self.max_major}" if self.max_major else "") + (":warm" if self.warm_start else "")


class Level0:
    """Per-instance oracle dispatcher with call accounting."""

    def __init__(self, inst: DecomposableInstance, default: OraclePolicy | None = None,
                 per_kind: dict[str, OraclePolicy] | None = None, eps: float | None = None):
        self.inst = inst
        default = default or OraclePolicy()
        per_kind = per_kind or {}
        self.policies = [per_kind.get(p.kind, default) for p in inst.potentials]
        if eps is not None:
            self.policies = [
                OraclePolicy(pol.method, pol.max_major, pol.max_minor, pol.warm_start, eps) for pol in self.policies
            ]
        self._calls = [0] * inst.r
        self._time = [0.0] * inst.r
        self.inexact_calls = 0
        # closed-form oracles are called directly, bypassing the policy dispatch
        self._direct = [
            pot.quad_oracle if pol.method == "specific" and pot.has_quad_oracle else None
            for pot, pol in zip(inst.potentials, self.policies)
        ]

    @property
    def calls(self) -> np.ndarray:
        return np.array(self._calls, dtype=np.int64)

    @property
    def time(self) -> np.ndarray:
        return np.array(self._time)

    @property
    def exact(self) -> bool:
        return all(p.exact for p in self.policies)

    def quad(self, i: int, w: np.ndarray, warm_start: np.ndarray | None = None) -> np.ndarray:
        t0 = time.perf_counter()
        direct = self._direct[i]
        if direct is not None:
            y = direct(w)
        else:
            pot, pol = self.inst.potentials[i], self.policies[i]
            if pol.method == "wolfe":
                req = OracleRequest(pot, w, eps=pol.eps, max_major=pol.max_major, max_minor=pol.max_minor,
                                    warm_start=warm_start if pol.warm_start else None)
                y, st = fujishige_wolfe(req)
                if not st.converged:
                    self.inexact_calls += 1
            elif pol.method == "brute":
                y = quad_oracle_from_sfm(pot, w)
            else:
                y = _default_quad(pot, w)
        self._time[i] += time.perf_counter() - t0
        self._calls[i] += 1
        return y

    def sfm(self, i: int, w: np.ndarray):
        pot, pol = self.inst.potentials[i], self.policies[i]
        if pol.method == "brute":
            t0 = time.perf_counter()
            out = brute_force_sfm(pot, w)
            self._time[i] += time.perf_counter() - t0
            self._calls[i] += 1
            return out
        return sfm_from_quad_oracle(pot, w, lambda _p, ww: self.quad(i, ww))
