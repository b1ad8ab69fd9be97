"""Ground sets, submodular potentials, base polytopes and block vectors.

A decomposable function is ``f(S) = sum_i f_i(S)`` where every ``f_i`` only
looks at the coordinates of its support ``C_i``.  Potentials evaluate batches
of subsets of their support given as boolean masks of shape ``(m, |C_i|)``;
column ``j`` of a mask refers to element ``support[j]``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

TAU_BASE = 1e-8
MAX_ENUMERATION = 20


class DSFMError(Exception):
    """Base class for errors raised by this package."""

    category = "error"


class InputError(DSFMError, ValueError):
    category = "input"


class CapabilityError(DSFMError):
    """An exhaustive routine was asked to handle a support that is too large."""

    category = "capability"


class SubmodularityError(InputError):
    category = "submodularity"

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class OracleExactnessError(DSFMError):
    """A level-0 answer was provably not optimal."""

    category = "oracle-exactness"


class CertificateError(OracleExactnessError):
    category = "certificate"


class SolverError(DSFMError):
    category = "solver"

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


_SUBSET_CACHE: dict[int, np.ndarray] = {}


def subset_masks(k: int) -> np.ndarray:
    """All ``2**k`` subsets of ``range(k)`` as a boolean array; row ``m`` is bitmask ``m``."""
    if k > MAX_ENUMERATION + 4:
        raise CapabilityError(f"cannot enumerate subsets of a {k}-element support")
    masks = _SUBSET_CACHE.get(k)
    if masks is None:
        codes = np.arange(1 << k, dtype=np.int64)
        masks = ((codes[:, None] >> np.arange(k)) & 1).astype(bool)
        masks.setflags(write=False)
        _SUBSET_CACHE[k] = masks
    return masks


@dataclass(frozen=True)
class GroundSet:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InputError("ground set needs at least one element")

    def check(self, ids: Iterable[int]) -> np.ndarray:
        arr = np.asarray(list(ids), dtype=np.intp)
        if arr.size and (arr.min() < 0 or arr.max() >= self.n):
            raise InputError(f"element id out of range 0..{self.n - 1}")
        return arr


class SubmodularPotential:
    """A set function with effective support ``support``.

    Subclasses override :meth:`_raw` (batch evaluation on local masks) and may
    provide a specialized quadratic oracle through :meth:`quad_oracle`.
    Values are normalized so that ``f(empty) == 0``.
    """

    kind = "custom"

    def __init__(self, support: Sequence[int], fn: Callable[[np.ndarray], float] | None = None):
        support = np.asarray(support, dtype=np.intp).ravel()
        if support.size == 0:
            raise InputError("potential needs a non-empty support")
        if np.unique(support).size != support.size:
            raise InputError("support contains duplicate elements")
        self.support = support
        self.support.setflags(write=False)
        self._fn = fn
        self.local = {int(v): j for j, v in enumerate(support)}
        self._offset = 0.0
        self._offset = float(self._raw(np.zeros((1, self.size), dtype=bool))[0])

    @property
    def size(self) -> int:
        return int(self.support.size)

    def _raw(self, masks: np.ndarray) -> np.ndarray:
        if self._fn is None:
            raise NotImplementedError
        return np.array([float(self._fn(m)) for m in masks])

    def evaluate_masks(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        return self._raw(masks) - self._offset

    def value_mask(self, mask: np.ndarray) -> float:
        return float(self.evaluate_masks(np.asarray(mask, dtype=bool)[None, :])[0])

    def value(self, S: Iterable[int]) -> float:
        """``f_i(S)`` for a set of global element ids (elements off the support are ignored)."""
        return self.value_mask(self.mask_of(S))

    def mask_of(self, S: Iterable[int]) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        for v in S:
            j = self.local.get(int(v))
            if j is not None:
                mask[j] = True
        return mask

    def prefix_values(self, order: np.ndarray) -> np.ndarray:
        """Values of ``f`` on the ``k+1`` prefixes of a local ordering."""
        k = self.size
        masks = np.zeros((k + 1, k), dtype=bool)
        rows = np.arange(1, k + 1)
        tri = rows[:, None] > np.arange(k)[None, :]
        masks[1:, order] = tri
        return self.evaluate_masks(masks)

    @cached_property
    def all_values(self) -> np.ndarray:
        """Values on every subset, indexed by bitmask (local bit ``j`` is ``support[j]``)."""
        if self.size > MAX_ENUMERATION:
            raise CapabilityError(f"support of size {self.size} is too large to tabulate")
        vals = self.evaluate_masks(subset_masks(self.size))
        vals.setflags(write=False)
        return vals

    @cached_property
    def singleton_values(self) -> np.ndarray:
        return self.evaluate_masks(np.eye(self.size, dtype=bool))

    @cached_property
    def last_marginals(self) -> np.ndarray:
        """``f(C) - f(C - v)`` for every support element."""
        full = np.ones((self.size + 1, self.size), dtype=bool)
        full[1:][np.eye(self.size, dtype=bool)] = False
        vals = self.evaluate_masks(full)
        return vals[0] - vals[1:]

    @cached_property
    def total(self) -> float:
        return self.value_mask(np.ones(self.size, dtype=bool))

    has_quad_oracle = False

    def quad_oracle(self, w: np.ndarray) -> np.ndarray:
        """Exact ``argmin_{y in B(f)} ||y + w||^2`` when a closed form exists."""
        raise NotImplementedError(f"{self.kind} potential has no specialized oracle")

    def __repr__(self):
        return f"{type(self).__name__}(support={self.support.tolist()})"


class TablePotential(SubmodularPotential):
    """Explicit value table: ``values[m]`` is ``f`` of the subset with bitmask ``m``."""

    kind = "table"

    def __init__(self, support: Sequence[int], values: Sequence[float]):
        support = np.asarray(support, dtype=np.intp).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if values.size != 1 << support.size:
            raise InputError(f"table for {support.size} elements needs {1 << support.size} values")
        self.values = values - values[0]
        self.values.setflags(write=False)
        self._weights = 1 << np.arange(support.size, dtype=np.int64)
        super().__init__(support)

    def _raw(self, masks):
        return self.values[masks.astype(np.int64) @ self._weights]


class ModularPotential(SubmodularPotential):
    kind = "modular"

    def __init__(self, support: Sequence[int], weights: Sequence[float]):
        self.weights = np.asarray(weights, dtype=float)
        super().__init__(support)

    def _raw(self, masks):
        return masks.astype(float) @ self.weights

    has_quad_oracle = True

    def quad_oracle(self, w):
        return self.weights.copy()


class FunctionPotential(SubmodularPotential):
    """Wraps an arbitrary set function of a global-id frozenset (used for whole-function checks)."""

    def __init__(self, support: Sequence[int], fn: Callable[[frozenset], float]):
        self._setfn = fn
        super().__init__(support)

    def _raw(self, masks):
        sup = self.support
        return np.array([float(self._setfn(frozenset(sup[m].tolist()))) for m in masks])


def check_submodular(pot: SubmodularPotential, tol: float = 1e-9):
    """Return ``None`` if ``pot`` is submodular on its support, else a witness ``(X, Y)``.

    Uses the local characterization ``f(S+a) + f(S+b) >= f(S) + f(S+a+b)``,
    which is equivalent to submodularity.  Witness sets are global ids.
    """
    k = pot.size
    if k > 12:
        raise CapabilityError("submodularity check limited to supports of size <= 12")
    vals = pot.all_values
    codes = np.arange(1 << k)
    for a in range(k):
        for b in range(a + 1, k):
            ba, bb = 1 << a, 1 << b
            base = codes[(codes & (ba | bb)) == 0]
            viol = vals[base | ba] + vals[base | bb] - vals[base] - vals[base | ba | bb]
            bad = np.flatnonzero(viol < -tol)
            if bad.size:
                s = int(base[bad[0]])
                X = _mask_ids(pot, s | ba)
                Y = _mask_ids(pot, s | bb)
                return X, Y
    return None


def _mask_ids(pot, code: int) -> frozenset:
    return frozenset(int(pot.support[j]) for j in range(pot.size) if code >> j & 1)


def greedy_vertex(pot: SubmodularPotential, w: np.ndarray) -> np.ndarray:
    """Edmonds' greedy vertex maximizing ``<w, x>`` over ``B(f)``.

    Elements are taken in order of decreasing ``w``, ties by element id.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise InputError("greedy weights must be finite")
    order = np.lexsort((pot.support, -w))
    prefix = pot.prefix_values(order)
    x = np.empty(pot.size)
    x[order] = np.diff(prefix)
    return x


def check_base_membership(pot: SubmodularPotential, x: np.ndarray, tau: float = TAU_BASE) -> bool:
    """Exhaustive test of ``x in B(f)``."""
    if pot.size > MAX_ENUMERATION:
        raise CapabilityError(f"membership check limited to supports of size <= {MAX_ENUMERATION}")
    x = np.asarray(x, dtype=float)
    if abs(x.sum() - pot.total) > tau:
        return False
    slack = pot.all_values - subset_masks(pot.size) @ x
    return bool(slack.min() >= -tau)


def max_abs_value(pot: SubmodularPotential) -> float:
    """``F_max = max_S |f(S)|`` by enumeration."""
    return float(np.abs(pot.all_values).max())


class DecomposableInstance:
    """``f = sum_i f_i`` over the ground set ``0..n-1``."""

    def __init__(self, n: int, potentials: Sequence[SubmodularPotential]):
        self.ground = GroundSet(int(n))
        self.potentials = list(potentials)
        if not self.potentials:
            raise InputError("instance needs at least one potential")
        for pot in self.potentials:
            self.ground.check(pot.support)

    @property
    def n(self) -> int:
        return self.ground.n

    @property
    def r(self) -> int:
        return len(self.potentials)

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.intp)
        for pot in self.potentials:
            deg[pot.support] += 1
        return deg

    def evaluate(self, S: Iterable[int]) -> float:
        ids = self.ground.check(S)
        mask = np.zeros(self.n, dtype=bool)
        mask[ids] = True
        return self.evaluate_mask(mask)

    def evaluate_mask(self, mask: np.ndarray) -> float:
        return float(sum(p.value_mask(mask[p.support]) for p in self.potentials))

    def greedy(self, w: np.ndarray) -> np.ndarray:
        """Greedy vertex of ``B(f)`` for the whole function (sum of blockwise vertices)."""
        w = np.asarray(w, dtype=float)
        x = np.zeros(self.n)
        for pot in self.potentials:
            x[pot.support] += greedy_vertex(pot, _restricted_weights(w, pot))
        return x

    def level_set_values(self, x: np.ndarray):
        """Values of ``f`` on the chain of sets ``{v: x(v) <= t}``.

        Returns ``(order, prefix)`` where ``prefix[k]`` is ``f`` of the first
        ``k`` elements of ``order`` (increasing ``x``, ties by id).
        """
        x = np.asarray(x, dtype=float)
        order = np.lexsort((np.arange(self.n), x))
        # greedy for increasing x is greedy on -x; prefix sums are the chain values
        vertex = self.greedy(_rank_weights(order))
        prefix = np.concatenate([[0.0], np.cumsum(vertex[order])])
        return order, prefix

    def brute_force_minimum(self):
        """Exhaustive ``min_S f(S)``; returns ``(set, value)`` with the smallest minimizer by size."""
        if self.n > 22:
            raise CapabilityError("exhaustive minimization limited to n <= 22")
        masks = subset_masks(self.n)
        total = np.zeros(masks.shape[0])
        for pot in self.potentials:
            k = pot.size
            codes = masks[:, pot.support].astype(np.int64) @ (1 << np.arange(k, dtype=np.int64))
            total += pot.all_values[codes]
        best = total.min()
        ties = np.flatnonzero(total <= best + 1e-9 * (1 + abs(best)))
        pick = ties[np.argmin(masks[ties].sum(axis=1))]
        return frozenset(np.flatnonzero(masks[pick]).tolist()), float(total[pick])

    def as_potential(self) -> SubmodularPotential:
        """The whole function as a single potential over ``V`` (for small ``n`` only)."""
        inst = self

        class _Whole(SubmodularPotential):
            kind = "custom"

            def _raw(self, masks):
                return np.array([inst.evaluate_mask(m) for m in masks])

        return _Whole(np.arange(self.n))


def _restricted_weights(w, pot):
    return w[pot.support]


def _rank_weights(order: np.ndarray) -> np.ndarray:
    """Weights whose decreasing order reproduces ``order`` exactly (no ties)."""
    w = np.empty(order.size)
    w[order] = -np.arange(order.size, dtype=float)
    return w


class BlockVector:
    """Blocks ``y_i`` (indexed by ``C_i``) with a cached aggregate ``Ay``."""

    def __init__(self, inst: DecomposableInstance, blocks: Sequence[np.ndarray] | None = None):
        self.inst = inst
        if blocks is None:
            blocks = [np.zeros(p.size) for p in inst.potentials]
        self.blocks = [np.array(b, dtype=float) for b in blocks]
        if len(self.blocks) != inst.r or any(b.shape != (p.size,) for b, p in zip(self.blocks, inst.potentials)):
            raise InputError("block shapes do not match the instance supports")
        self.recompute()

    @classmethod
    def greedy(cls, inst: DecomposableInstance, w: np.ndarray | None = None) -> "BlockVector":
        """Blockwise greedy vertices; default ordering is the identity (element id ascending)."""
        if w is None:
            w = -np.arange(inst.n, dtype=float)
        return cls(inst, [greedy_vertex(p, w[p.support]) for p in inst.potentials])

    def recompute(self):
        agg = np.zeros(self.inst.n)
        for b, p in zip(self.blocks, self.inst.potentials):
            agg[p.support] += b
        self.aggregate = agg

    def set_block(self, i: int, y: np.ndarray):
        sup = self.inst.potentials[i].support
        self.aggregate[sup] += y - self.blocks[i]
        self.blocks[i] = y

    def copy(self) -> "BlockVector":
        out = BlockVector.__new__(BlockVector)
        out.inst = self.inst
        out.blocks = [b.copy() for b in self.blocks]
        out.aggregate = self.aggregate.copy()
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def dense(self) -> np.ndarray:
        """``(r, n)`` array with block ``i`` embedded on ``C_i`` and zeros elsewhere."""
        out = np.zeros((self.inst.r, self.inst.n))
        for i, (b, p) in enumerate(zip(self.blocks, self.inst.potentials)):
            out[i, p.support] = b
        return out

    def distance(self, other: "BlockVector") -> float:
        return float(np.linalg.norm(self.flat() - other.flat()))

    def objective(self) -> float:
        """``0.5 * ||Ay||^2``."""
        return 0.5 * float(self.aggregate @ self.aggregate)

    def is_member(self, tau: float = TAU_BASE) -> bool:
        return all(check_base_membership(p, b, tau) for p, b in zip(self.inst.potentials, self.blocks))


def evaluate(inst: DecomposableInstance, S: Iterable[int]) -> float:
    return inst.evaluate(S)


@dataclass
class SolveReport:
    """Outcome of a level-1 solver run."""

    solver: str
    minimizer: frozenset
    value: float
    lower_bound: float
    objective: float | None = None
    iterations: int = 0
    augmentations: int = 0
    oracle_calls: np.ndarray | None = None
    oracle_time: np.ndarray | None = None
    wall_time: float = 0.0
    certified: bool = True
    converged: bool = True
    warnings: list = field(default_factory=list)
    x: BlockVector | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return self.value - self.lower_bound

    def oracle_stats(self) -> dict:
        calls = self.oracle_calls if self.oracle_calls is not None else np.zeros(0)
        times = self.oracle_time if self.oracle_time is not None else np.zeros(0)
        per_call = np.divide(times, calls, out=np.zeros_like(times), where=calls > 0)
        return {
            "calls_total": int(calls.sum()),
            "theta_avg": float(per_call.mean()) if per_call.size else 0.0,
            "theta_max": float(per_call.max()) if per_call.size else 0.0,
        }

    def to_record(self) -> dict:
        return {
            "solver": self.solver,
            "minimizer": sorted(self.minimizer),
            "value": self.value,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "objective": self.objective,
            "iterations": self.iterations,
            "augmentations": self.augmentations,
            "oracle": self.oracle_stats(),
            "wall_time": self.wall_time,
            "certified": self.certified,
            "converged": self.converged,
            "warnings": list(self.warnings),
        }


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
