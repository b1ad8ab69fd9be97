"""Discrete level-1 solvers on the auxiliary (exchange-capacity) graph.

The graph has a directed clique on every support ``C_i``.  The capacity of
arc ``(u, v)`` in clique ``i`` is the largest amount that can be moved from
``v`` to ``u`` inside ``B(f_i)``; it is obtained from one SFM query with
modular weights.  Augmenting along shortest paths from deficit nodes ``N``
to excess nodes ``P`` keeps every block feasible.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from typing import Callable, Iterable

import numpy as np

from .core import (
    BlockVector,
    CapabilityError,
    DecomposableInstance,
    OracleExactnessError,
    SolveReport,
    SolverError,
    SubmodularPotential,
    subset_masks,
)
from .level0 import Level0, brute_force_sfm, sfm_from_quad_oracle

log = logging.getLogger(__name__)

TAU_FLOW = 1e-9
FLOW_EPS = 1e-10


def _separating_weights(pot: SubmodularPotential, x: np.ndarray, lu: int, lv: int) -> np.ndarray:
    w = -np.asarray(x, dtype=float).copy()
    w[lu] = -(pot.singleton_values[lu] + 1.0)
    w[lv] = -(pot.last_marginals[lv] - 1.0)
    return w


def _separating_set(pot, x, lu, lv, sfm):
    w = _separating_weights(pot, x, lu, lv)
    A, _ = sfm(pot, w)
    if not A[lu] or A[lv]:
        raise OracleExactnessError(
            f"SFM answer for arc ({pot.support[lu]}, {pot.support[lv]}) does not separate the arc"
        )
    return A, pot.value_mask(A) - float(x[A].sum())


def _capacity_local(pot, x, lu, lv, sfm) -> float:
    return max(_separating_set(pot, x, lu, lv, sfm)[1], 0.0)


def exchange_set(pot: SubmodularPotential, x_i: np.ndarray, u: int, v: int,
                 sfm: Callable | None = None):
    """Minimizer ``A`` of ``f(S) - x(S)`` over ``u in S, v not in S`` and its value.

    Returns ``(mask, value)`` with ``mask`` over the local support order.
    """
    if u == v:
        raise ValueError("exchange capacity needs two distinct elements")
    lu, lv = pot.local[int(u)], pot.local[int(v)]
    return _separating_set(pot, np.asarray(x_i, dtype=float), lu, lv, sfm or sfm_from_quad_oracle)


def exchange_capacity(pot: SubmodularPotential, x_i: np.ndarray, u: int, v: int,
                      sfm: Callable | None = None) -> float:
    """``min{f(S) - x(S): u in S, v not in S}`` through a single SFM query.

    ``u`` and ``v`` are global element ids of the support.  The default SFM
    oracle thresholds the potential's quadratic oracle.
    """
    if u == v:
        raise ValueError("exchange capacity needs two distinct elements")
    lu, lv = pot.local[int(u)], pot.local[int(v)]
    return _capacity_local(pot, np.asarray(x_i, dtype=float), lu, lv, sfm or sfm_from_quad_oracle)


def minimal_tight_set(pot: SubmodularPotential, x_i: np.ndarray, u: int, tau: float = 1e-9) -> frozenset:
    """Smallest ``T`` with ``u in T`` and ``x(T) = f(T)``, by enumeration."""
    if pot.size > 20:
        raise CapabilityError("tight-set enumeration limited to supports of size <= 20")
    lu = pot.local[int(u)]
    masks = subset_masks(pot.size)
    slack = pot.all_values - masks @ np.asarray(x_i, dtype=float)
    tight = masks[(slack <= tau) & masks[:, lu]]
    return frozenset(pot.support[np.logical_and.reduce(tight, axis=0)].tolist())


def augment(x: BlockVector, path: list, eps: float, sfm: Callable | None = None, tau: float = TAU_FLOW) -> BlockVector:
    """Push ``eps`` along ``path`` (a list of arcs ``(u, v, i)``) and return the updated copy.

    Raises ``SolverError`` when ``eps`` exceeds the current capacity of an arc.
    """
    out = x.copy()
    for u, v, i in path:
        pot = out.inst.potentials[i]
        lu, lv = pot.local[int(u)], pot.local[int(v)]
        cap = _capacity_local(pot, out.blocks[i], lu, lv, sfm or sfm_from_quad_oracle)
        if eps > cap + tau:
            raise SolverError(f"augmentation {eps} exceeds capacity {cap} of arc ({u}, {v}) in block {i}")
        b = out.blocks[i].copy()
        b[lu] += eps
        b[lv] -= eps
        out.set_block(i, b)
    return out


class AuxiliaryGraph:
    """Lazily evaluated exchange-capacity graph around a :class:`BlockVector`.

    ``target`` is the aggregate the flow drives ``Ax`` to (zero for SFM).
    """

    def __init__(self, inst: DecomposableInstance, x: BlockVector, level0: Level0,
                 target: np.ndarray | None = None, tau: float = TAU_FLOW):
        self.inst = inst
        self.x = x
        self.level0 = level0
        self.target = np.zeros(inst.n) if target is None else np.asarray(target, dtype=float)
        self.tau = tau
        self.cache: list[dict] = [{} for _ in range(inst.r)]
        self.capacity_queries = 0
        # nbrs[v][w] = list of (block, local v, local w)
        self.nbrs: list[dict] = [dict() for _ in range(inst.n)]
        for i, pot in enumerate(inst.potentials):
            if pot.size < 2:
                continue
            sup = pot.support.tolist()
            for a, va in enumerate(sup):
                row = self.nbrs[va]
                for b, vb in enumerate(sup):
                    if a != b:
                        row.setdefault(vb, []).append((i, a, b))

    def deficit(self) -> np.ndarray:
        return self.target - self.x.aggregate

    def sources(self) -> np.ndarray:
        return np.flatnonzero(self.deficit() > self.tau)

    def sinks(self) -> np.ndarray:
        return np.flatnonzero(self.deficit() < -self.tau)

    def capacity(self, i: int, lu: int, lv: int) -> float:
        key = (lu, lv)
        c = self.cache[i].get(key)
        if c is None:
            pot = self.inst.potentials[i]
            c = _capacity_local(pot, self.x.blocks[i], lu, lv, lambda _p, w: self.level0.sfm(i, w))
            self.cache[i][key] = c
            self.capacity_queries += 1
        return c

    def best_arc(self, u: int, v: int):
        """Parallel arc ``u -> v`` with maximum residual capacity, as ``(cap, block, lu, lv)``."""
        best = (0.0, -1, -1, -1)
        for i, lu, lv in self.nbrs[u].get(v, ()):
            c = self.capacity(i, lu, lv)
            if c > best[0]:
                best = (c, i, lu, lv)
        return best

    def arc_capacity(self, u: int, v: int, i: int) -> float:
        pot = self.inst.potentials[i]
        return self.capacity(i, pot.local[u], pot.local[v])

    def apply(self, path: list, eps: float) -> bool:
        """Push ``eps`` along arcs ``(u, v, i)``; roll back and return False if infeasible."""
        x = self.x
        saved = {}
        for k, (u, v, i) in enumerate(path):
            pot = self.inst.potentials[i]
            lu, lv = pot.local[u], pot.local[v]
            if i in saved:
                # block already moved on this path: capacity must be re-derived
                cap = _capacity_local(pot, x.blocks[i], lu, lv, lambda _p, w: self.level0.sfm(i, w))
                if eps > cap + self.tau:
                    for j, b in saved.items():
                        x.set_block(j, b)
                        self.cache[j].clear()
                    return False
            else:
                saved[i] = x.blocks[i]
            b = x.blocks[i].copy()
            b[lu] += eps
            b[lv] -= eps
            x.set_block(i, b)
            self.cache[i].clear()
        return True

    def push(self, path: list, eps: float) -> float:
        """Augment along ``path``, shrinking ``eps`` if a repeated block makes it infeasible."""
        for _ in range(60):
            if self.apply(path, eps):
                return eps
            eps *= 0.5
        raise SolverError("could not find a feasible augmentation amount", {"path": path})

    def at(self, v: int) -> float:
        """Deficit ``target(v) - (Ax)(v)`` of one node."""
        return self.target[v] - self.x.aggregate[v]

    def bfs(self, sources: Iterable[int], stop_at_sink: bool = True, truncate: bool = False):
        """Forward BFS over positive arcs; returns ``(parent, level, sink)``.

        ``stop_at_sink`` returns at the first excess node; ``truncate`` finishes
        the level of the first excess node and stops there.
        """
        deficit = self.deficit()
        parent: dict = {}
        level = {int(s): 0 for s in sources}
        queue = deque(level)
        found = None
        while queue:
            u = queue.popleft()
            if truncate and found is not None and level[u] >= level[found]:
                break
            for v in self.nbrs[u]:
                if v in level:
                    continue
                cap, i, _, _ = self.best_arc(u, v)
                if cap <= self.tau:
                    continue
                level[v] = level[u] + 1
                parent[v] = (u, i)
                if deficit[v] < -self.tau and found is None:
                    found = v
                    if stop_at_sink:
                        return parent, level, found
                queue.append(v)
        return parent, level, found

    def shortest_path(self):
        src = self.sources()
        if src.size == 0:
            return None
        parent, _, sink = self.bfs(src)
        if sink is None:
            return None
        path = []
        v = sink
        while v in parent:
            u, i = parent[v]
            path.append((u, v, i))
            v = u
        return path[::-1]

    def reachable(self) -> frozenset:
        _, level, _ = self.bfs(self.sources(), stop_at_sink=False)
        return frozenset(level)

    def distances_to_sinks(self) -> dict:
        """Hop distance ``d(u)`` to ``P`` over positive arcs (backward BFS)."""
        dist = {int(t): 0 for t in self.sinks()}
        queue = deque(dist)
        while queue:
            v = queue.popleft()
            for u in self.nbrs[v]:
                if u in dist:
                    continue
                if self.best_arc(u, v)[0] > self.tau:
                    dist[u] = dist[v] + 1
                    queue.append(u)
        return dist

    def bottleneck(self, path: list) -> float:
        caps = [self.arc_capacity(u, v, i) for u, v, i in path]
        return min(min(caps), self.at(path[0][0]), -self.at(path[-1][1]))


class FlowStats:
    def __init__(self):
        self.augmentations = 0
        self.phases = 0
        self.pushed = 0.0
        self.l1_moved = 0.0
        self.resets = 0
        self.repairs = 0

    def record(self, path, eps, requested):
        self.augmentations += 1
        self.pushed += eps
        self.l1_moved += 2 * len(path) * eps
        if eps < requested:
            self.repairs += 1


def _check_labels(graph, prev):
    cur = graph.distances_to_sinks()
    for u, d in prev.items():
        if cur.get(u, np.inf) < d:
            raise SolverError(f"distance label of {u} decreased from {d} to {cur[u]}")
    return cur


def run_ekd(graph: AuxiliaryGraph, max_augmentations: int = 10**6, debug: bool = False,
            stats: FlowStats | None = None) -> FlowStats:
    """Shortest augmenting paths in Dinitz phases until no ``N``-``P`` path remains."""
    stats = stats or FlowStats()
    labels = graph.distances_to_sinks() if debug else None
    tau = graph.tau
    while True:
        src = graph.sources()
        if src.size == 0:
            return stats
        _, level, sink = graph.bfs(src, stop_at_sink=False, truncate=True)
        sinks = [v for v in level if graph.at(v) < -tau]
        if not sinks:
            return stats
        stats.phases += 1
        depth = min(level[t] for t in sinks)
        arcs: dict = {}
        dead: set = set()

        def candidates(u):
            lst = arcs.get(u)
            if lst is None:
                lst = []
                for v, triples in graph.nbrs[u].items():
                    if level.get(v) != level[u] + 1 or level[v] > depth:
                        continue
                    for i, lu, lv in triples:
                        lst.append((graph.capacity(i, lu, lv), v, i, lu, lv))
                lst.sort(key=lambda t: (-t[0], t[1]))
                lst = [t[1:] for t in lst]
                arcs[u] = lst
            return lst

        ptr: dict = {}
        for s in src:
            s = int(s)
            while graph.at(s) > tau and s not in dead:
                stack = [s]
                trail: list = []
                while stack:
                    u = stack[-1]
                    if u != s and graph.at(u) < -tau:
                        break
                    lst = candidates(u)
                    k = ptr.get(u, 0)
                    advanced = False
                    while k < len(lst):
                        v, i, lu, lv = lst[k]
                        if v not in dead and graph.capacity(i, lu, lv) > tau:
                            stack.append(v)
                            trail.append((u, v, i))
                            advanced = True
                            break
                        k += 1
                    ptr[u] = k
                    if not advanced:
                        dead.add(u)
                        stack.pop()
                        if trail:
                            trail.pop()
                            ptr[stack[-1]] = ptr.get(stack[-1], 0) + 1
                if not trail:
                    break
                eps = graph.bottleneck(trail)
                if eps <= tau:
                    dead.add(trail[-1][1])
                    continue
                done = graph.push(trail, eps)
                stats.record(trail, done, eps)
                if debug:
                    labels = _check_labels(graph, labels)
                if stats.augmentations >= max_augmentations:
                    raise SolverError("augmentation cap reached", _dump(graph, stats))


def _dump(graph, stats):
    return {
        "augmentations": stats.augmentations,
        "sources": graph.sources().tolist(),
        "sinks": graph.sinks().tolist(),
        "deficit_l1": float(np.abs(graph.deficit()).sum()),
    }


class _Tree:
    """One search tree of IBFS; ``forward`` trees grow from ``N`` along arcs, backward trees from ``P``."""

    def __init__(self, graph: AuxiliaryGraph, forward: bool, roots):
        self.g = graph
        self.forward = forward
        self.label: dict = {int(v): 0 for v in roots}
        self.parent: dict = {v: None for v in self.label}
        self.children: dict = {v: set() for v in self.label}
        self.by_block: dict = {}
        self.D = 0
        self.front = list(self.label)
        self.pending: deque = deque()

    def cap(self, i, near, far):
        """Residual capacity of the tree-direction arc between ``near`` (parent side) and ``far``."""
        if self.forward:
            return self.g.arc_capacity(near, far, i)
        return self.g.arc_capacity(far, near, i)

    def best(self, near, far):
        if self.forward:
            return self.g.best_arc(near, far)
        return self.g.best_arc(far, near)

    def attach(self, v, p, i, d):
        self.label[v] = d
        self.parent[v] = (p, i)
        self.children.setdefault(v, set())
        self.children.setdefault(p, set()).add(v)
        self.by_block.setdefault(i, set()).add(v)

    def detach(self, v):
        par = self.parent.get(v)
        if par is not None:
            p, i = par
            self.children[p].discard(v)
            self.by_block[i].discard(v)
        self.parent[v] = None

    def remove(self, v):
        self.detach(v)
        del self.label[v]
        del self.parent[v]
        self.children.pop(v, None)

    def is_root(self, v) -> bool:
        d = self.g.at(v)
        return d > self.g.tau if self.forward else d < -self.g.tau

    def rooted(self, u, avoid) -> bool:
        """True if ``u`` hangs from a live root without passing through ``avoid``."""
        while True:
            if u == avoid:
                return False
            par = self.parent.get(u)
            if par is None:
                return self.label.get(u) == 0 and self.is_root(u)
            u = par[0]

    def path(self, v):
        """Arcs from the root to ``v`` (forward tree) or from ``v`` to the root (backward)."""
        arcs = []
        while self.parent.get(v) is not None:
            p, i = self.parent[v]
            arcs.append((p, v, i) if self.forward else (v, p, i))
            v = p
        return (arcs[::-1], v) if self.forward else (arcs, v)

    def adopt(self, queue: deque, other: "_Tree", nxt: list | None):
        while queue:
            v = queue.popleft()
            if v not in self.label or self.parent.get(v) is not None:
                continue
            if self.label[v] == 0 and self.is_root(v):
                continue
            d = self.label[v]
            found = None
            best = None
            for u in self.g.nbrs[v]:
                if u not in self.label or not self.rooted(u, v):
                    continue
                cap, i, _, _ = self.best(u, v)
                if cap <= self.g.tau:
                    continue
                if self.label[u] == d - 1:
                    found = (u, i)
                    break
                if best is None or self.label[u] < self.label[best[0]]:
                    best = (u, i)
            if found is not None:
                self.attach(v, found[0], found[1], d)
                continue
            for c in list(self.children.get(v, ())):
                self.detach(c)
                queue.append(c)
            if best is not None and self.label[best[0]] + 1 <= self.D + (1 if nxt is not None else 0):
                nd = self.label[best[0]] + 1
                self.attach(v, best[0], best[1], nd)
                if nd <= self.D:
                    self.pending.append(v)
                else:
                    nxt.append(v)
            else:
                self.remove(v)

    def stale(self, blocks) -> deque:
        """Tree vertices whose parent arc lies in a modified block and lost its capacity."""
        q = deque()
        for i in blocks:
            for c in list(self.by_block.get(i, ())):
                p, _ = self.parent[c]
                if self.cap(i, p, c) <= self.g.tau:
                    self.detach(c)
                    q.append(c)
        return q


def run_ibfs(graph: AuxiliaryGraph, max_augmentations: int = 10**6, debug: bool = False,
             stats: FlowStats | None = None) -> FlowStats:
    """Incremental bidirectional BFS: source and sink trees persist across augmentations."""
    stats = stats or FlowStats()
    labels = graph.distances_to_sinks() if debug else None
    tau = graph.tau

    while graph.sources().size:
        S = _Tree(graph, True, graph.sources())
        T = _Tree(graph, False, graph.sinks())
        trees = {True: S, False: T}

        def meet(v, w, i, nxt, fwd):
            nonlocal labels
            if fwd:
                head, s_root = S.path(v)
                tail, t_root = T.path(w)
            else:
                head, s_root = S.path(w)
                tail, t_root = T.path(v)
            path = head + [(v, w, i) if fwd else (w, v, i)] + tail
            eps = graph.bottleneck(path)
            if eps <= tau:
                return
            done = graph.push(path, eps)
            stats.record(path, done, eps)
            if debug:
                labels = _check_labels(graph, labels)
            if stats.augmentations >= max_augmentations:
                raise SolverError("augmentation cap reached", _dump(graph, stats))
            blocks = {a[2] for a in path}
            qs, qt = S.stale(blocks), T.stale(blocks)
            if not S.is_root(s_root) and S.parent.get(s_root) is None and s_root in S.label:
                qs.append(s_root)
            if not T.is_root(t_root) and T.parent.get(t_root) is None and t_root in T.label:
                qt.append(t_root)
            S.adopt(qs, T, nxt if fwd else None)
            T.adopt(qt, S, None if fwd else nxt)

        while True:
            fwd = S.D <= T.D
            tree, other = trees[fwd], trees[not fwd]
            nxt: list = []
            work = deque(tree.front)
            while tree.pending or work:
                v = tree.pending.popleft() if tree.pending else work.popleft()
                d = tree.label.get(v)
                if d is None or d > tree.D:
                    continue
                rescan = True
                while rescan:
                    rescan = False
                    for w in graph.nbrs[v]:
                        if w in tree.label:
                            continue
                        cap, i, _, _ = tree.best(v, w)
                        if cap <= tau:
                            continue
                        if w in other.label:
                            meet(v, w, i, nxt, fwd)
                            rescan = tree.label.get(v) == d
                            break
                        nd = d + 1
                        tree.attach(w, v, i, nd)
                        (tree.pending.append(w) if nd <= tree.D else nxt.append(w))
                if not graph.sources().size:
                    break
            tree.D += 1
            tree.front = [v for v in nxt if tree.label.get(v) == tree.D]
            if not graph.sources().size or not tree.front:
                break
        if not graph.sources().size:
            break
        path = graph.shortest_path()
        if path is None:
            break
        # trees went stale numerically; rebuild them
        stats.resets += 1
        if stats.resets > 20:
            return run_ekd(graph, max_augmentations, debug, stats)
    return stats


def _prepare(inst, level0, strict, warnings):
    level0 = level0 or Level0(inst, eps=FLOW_EPS)
    if not level0.exact:
        msg = "flow solver paired with an inexact level-0 oracle; result is not certified"
        if strict:
            raise OracleExactnessError(msg)
        warnings.append(msg)
        log.warning(msg)
    return level0


def _solve(name, runner, inst, x0, level0, strict, max_augmentations, debug):
    warnings: list = []
    t0 = time.perf_counter()
    level0 = _prepare(inst, level0, strict, warnings)
    x = x0.copy() if x0 is not None else BlockVector.greedy(inst)
    graph = AuxiliaryGraph(inst, x, level0)
    certified = level0.exact
    try:
        stats = runner(graph, max_augmentations=max_augmentations, debug=debug)
    except OracleExactnessError as err:
        if strict or level0.exact:
            raise
        warnings.append(f"oracle exactness violated: {err}")
        stats = FlowStats()
        certified = False
    S = graph.reachable()
    value = inst.evaluate(S)
    lower = float(np.minimum(x.aggregate, 0.0).sum())
    if level0.inexact_calls:
        certified = False
        warnings.append(f"{level0.inexact_calls} level-0 calls stopped before convergence")
    return SolveReport(
        solver=name,
        minimizer=S,
        value=value,
        lower_bound=lower,
        objective=x.objective(),
        iterations=stats.augmentations,
        augmentations=stats.augmentations,
        oracle_calls=level0.calls.copy(),
        oracle_time=level0.time.copy(),
        wall_time=time.perf_counter() - t0,
        certified=certified,
        converged=certified,
        warnings=warnings,
        x=x,
    )


def solve_flow_ekd(inst: DecomposableInstance, x0: BlockVector | None = None, level0: Level0 | None = None,
                   strict: bool = False, max_augmentations: int = 10**6, debug: bool = False) -> SolveReport:
    """Minimize ``f`` by shortest augmenting paths (Edmonds-Karp-Dinitz)."""
    return _solve("ekd", run_ekd, inst, x0, level0, strict, max_augmentations, debug)


def solve_flow_ibfs(inst: DecomposableInstance, x0: BlockVector | None = None, level0: Level0 | None = None,
                    strict: bool = False, max_augmentations: int = 10**6, debug: bool = False) -> SolveReport:
    """Minimize ``f`` with incremental bidirectional BFS."""
    return _solve("ibfs", run_ibfs, inst, x0, level0, strict, max_augmentations, debug)
