"""Breadth-first traversal of the polytope adjacency graph.

One engine serves the flat case (one hidden layer), bounded traversal and
the hierarchical case: at level ``l`` the traversal runs inside the parent
level-``(l-1)`` polytope intersected with the region, and every level-``l``
polytope it pops is either handed to the visitor (``l == L``) or descended
into through one of its interior points.

Polytopes are processed when popped, not when discovered. This lets the
engine re-check a queued polytope against a region that shrank after it was
enqueued and drop it if it no longer overlaps.
"""
from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from ._config import Tolerances, default_workers, get_tolerances
from .errors import InvalidInputError
from .lp import ConstraintSystem, interior_point, optimize_linear, solve_feasibility, OPTIMAL, INFEASIBLE
from .network import ActivationCode, LocalLinearModel, ReluNetwork, next_level
from .polytope import BoundedRegion, Polytope, hyperplane_rows, polytope_from_code

CONTINUE = "continue"
STOP = "stop"
SHRINK = "shrink_region"

# prescreen status per hyperplane
_UNKNOWN, _CUTS, _EXCLUDED = 0, 1, 2

# seed repair tries every subset of at most this many tied bits
_MAX_TIED = 10


@dataclass(frozen=True)
class VisitOutcome:
    action: str = CONTINUE
    region: Optional[BoundedRegion] = None

    @classmethod
    def stop(cls) -> "VisitOutcome":
        return cls(STOP)

    @classmethod
    def shrink(cls, region: BoundedRegion) -> "VisitOutcome":
        return cls(SHRINK, region)


@dataclass
class TraversalConfig:
    region: Optional[BoundedRegion] = None   # None: the sentinel box
    max_polytopes: Optional[int] = None
    time_budget: Optional[float] = None      # seconds
    prescreen: bool = True
    workers: Optional[int] = None            # None: POLYTRAVERSE_WORKERS or 1

    def __post_init__(self):
        if self.max_polytopes is not None and self.max_polytopes < 1:
            raise InvalidInputError("max_polytopes must be positive")
        if self.time_budget is not None and not self.time_budget > 0:
            raise InvalidInputError("time_budget must be positive")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError("workers must be positive")


@dataclass
class TraversalStats:
    polytopes_visited: int = 0
    lp_calls: int = 0
    codes_checked: int = 0
    wall_time: float = 0.0
    truncated: bool = False
    stopped: bool = False
    shrinks: int = 0
    workers: int = 1

    def counts(self) -> dict:
        """Everything except timing; identical across repeated single-worker runs."""
        d = asdict(self)
        d.pop("wall_time")
        return d

    def to_dict(self) -> dict:
        return asdict(self)


Visitor = Callable[[Polytope, LocalLinearModel], Optional[VisitOutcome]]


class _Halt(Exception):
    pass


class _Engine:
    def __init__(self, net: ReluNetwork, config: TraversalConfig, visitor: Optional[Visitor],
                 tol: Optional[Tolerances] = None):
        self.net = net
        self.cfg = config
        self.visitor = visitor
        self.tol = tol or get_tolerances()
        self.region = config.region or BoundedRegion.sentinel(net.input_dim, self.tol)
        if self.region.dim != net.input_dim:
            raise InvalidInputError(
                f"region has dimension {self.region.dim}, network input has {net.input_dim}")
        self.region_sys = self.region.to_system(self.tol)
        self.version = 0
        workers = config.workers or default_workers()
        self.stats = TraversalStats(workers=workers)
        self.pool = ThreadPoolExecutor(workers) if workers > 1 else None
        self.leaves = []
        self.seen = set()
        self.t0 = time.perf_counter()

    # -- LP bookkeeping ----------------------------------------------------

    def _feasible(self, system: ConstraintSystem):
        res = solve_feasibility(system, self.tol)
        self.stats.lp_calls += res.lp_runs
        return res

    def _map_feasible(self, systems):
        if self.pool is None or len(systems) < 2:
            return [self._feasible(s) for s in systems]
        results = list(self.pool.map(lambda s: solve_feasibility(s, self.tol), systems))
        self.stats.lp_calls += sum(r.lp_runs for r in results)
        return results

    def _with_region(self, system: Optional[ConstraintSystem]) -> ConstraintSystem:
        return self.region_sys if system is None else system.stack(self.region_sys)

    def _check_limits(self):
        if self.cfg.time_budget is not None and time.perf_counter() - self.t0 > self.cfg.time_budget:
            self.stats.truncated = True
            raise _Halt

    # -- visitor and region updates -----------------------------------------

    def _visit(self, poly: Polytope, W, b, bits):
        if self.cfg.max_polytopes is not None and self.stats.polytopes_visited >= self.cfg.max_polytopes:
            self.stats.truncated = True
            raise _Halt
        if poly.code in self.seen:  # pragma: no cover - guarded by the per-level checked sets
            raise AssertionError(f"code {poly.code} reached twice")
        self.seen.add(poly.code)
        self.leaves.append(poly.code)
        self.stats.polytopes_visited += 1
        if self.visitor is None:
            return
        Wo, bo = next_level(self.net, self.net.depth, W, b, bits)
        outcome = self.visitor(poly, LocalLinearModel(Wo, bo))
        if outcome is None or outcome.action == CONTINUE:
            return
        if outcome.action == STOP:
            self.stats.stopped = True
            raise _Halt
        if outcome.action == SHRINK:
            self._shrink(outcome.region)
            return
        raise InvalidInputError(f"unknown visitor action {outcome.action!r}")

    def _shrink(self, new: BoundedRegion):
        if new is None or new.dim != self.region.dim:
            raise InvalidInputError("shrink needs a region of the same dimension")
        new_sys = new.to_system(self.tol)
        lo, hi = new.bounding_box(self.tol)
        A, b = self.region_sys.A, self.region_sys.b
        # analytic upper bound of each old row over the new bounding box first
        bound = np.sum(np.maximum(A * lo, A * hi), axis=1)
        slack = self.tol.eps_num * (1.0 + np.abs(b))
        for i in np.flatnonzero(bound > b + slack):
            sol = optimize_linear(A[i], "max", new_sys, self.tol)
            self.stats.lp_calls += 1
            if sol.status == INFEASIBLE:
                break
            if sol.status != OPTIMAL or sol.value > b[i] + slack[i]:
                raise InvalidInputError("shrunken region is not contained in the current region")
        self.region = new
        self.region_sys = new_sys
        self.version += 1
        self.stats.shrinks += 1

    # -- one level ----------------------------------------------------------

    def _initial_status(self, W, b, level: int) -> np.ndarray:
        M = W.shape[0]
        if not self.cfg.prescreen:
            return np.full(M, _CUTS, dtype=np.int8)
        eps = self.tol.eps_int
        lo, hi = self.region.bounding_box(self.tol)
        low = b + np.sum(np.minimum(W * lo, W * hi), axis=1)
        high = b + np.sum(np.maximum(W * lo, W * hi), axis=1)
        one_sided = (low > -eps) | (high < eps) | ~W.any(axis=1)
        exact = level == 1 and self.region.is_box()
        status = np.full(M, _CUTS if exact else _UNKNOWN, dtype=np.int8)
        status[one_sided] = _EXCLUDED
        return status

    def _level_system(self, parent_sys, W, b, bits) -> ConstraintSystem:
        rows = hyperplane_rows(W, b, bits)
        return rows if parent_sys is None else parent_sys.stack(rows)

    def _seed(self, parent_sys, W, b, x):
        """Level code at ``x``; repaired by flipping tied bits when its polytope is empty."""
        for attempt in range(2):
            pre = W @ x + b
            bits = (pre >= 0.0).astype(np.uint8)
            sys = self._with_region(self._level_system(parent_sys, W, b, bits))
            if sys.contains(x, self.tol) or self._feasible(sys).feasible:
                return bits
            scale = 1e-7 * (1.0 + np.abs(W) @ np.abs(x) + np.abs(b))
            tied = np.flatnonzero(np.abs(pre) <= scale)[:_MAX_TIED]
            for k in range(1, len(tied) + 1):
                for subset in combinations(tied, k):
                    trial = bits.copy()
                    trial[list(subset)] ^= 1
                    if self._feasible(self._with_region(self._level_system(parent_sys, W, b, trial))).feasible:
                        return trial
            if attempt == 0:
                x = self._inner_point(parent_sys)
                if x is None:
                    return None
        return None

    def _inner_point(self, system: Optional[ConstraintSystem]):
        full = self._with_region(system)
        if not full.trivial_mask().all():
            res = interior_point(full, self.tol)
            self.stats.lp_calls += res.lp_runs
            if res.feasible:
                return res.witness
        res = self._feasible(full)
        return res.witness if res.feasible else None

    def _side_open(self, parent_sys, w, c, bit) -> bool:
        """Does the side of ``w.x + c = 0`` opposite to ``bit`` meet the traversing region?"""
        sign = 1.0 if bit == 1 else -1.0   # bit 1 now, so test w.x + c < 0
        row = ConstraintSystem((sign * w)[None, :], np.array([-sign * c]), np.array([True]), check=False)
        base = row if parent_sys is None else parent_sys.stack(row)
        return self._feasible(self._with_region(base)).feasible

    def level(self, parent_sys, prefix: ActivationCode, W, b, x, level: int) -> list:
        """Traverse the level-``level`` polytopes inside the parent; returns the codes expanded."""
        status = self._initial_status(W, b, level)
        M = W.shape[0]
        encounters = np.zeros(M, dtype=np.int64)
        seen_bit = np.zeros((M, 2), dtype=bool)
        bits = self._seed(parent_sys, W, b, x)
        if bits is None:
            return []
        key = bits.tobytes()
        checked = {key}
        self.stats.codes_checked += 1
        seen_bit[np.arange(M), bits] = True
        queue = deque([(bits, self.version)])
        seeded_at = self.version
        expanded = []
        done = set()
        offset = 0 if parent_sys is None else len(parent_sys)
        while True:
            while queue:
                self._check_limits()
                bits, enq_version = queue.popleft()
                sys = self._level_system(parent_sys, W, b, bits)
                if enq_version != self.version and not self._feasible(self._with_region(sys)).feasible:
                    continue
                code = prefix.extend(bits)
                expanded.append(code)
                done.add(bits.tobytes())
                poly = Polytope(code, sys, level, offset)
                if level == self.net.depth:
                    self._visit(poly, W, b, bits)
                else:
                    # descend through the start point while it is inside, so the
                    # leaf holding the start is always the first one visited
                    inside = x is not None and self._with_region(sys).contains(x, self.tol)
                    xh = x if inside else self._inner_point(sys)
                    if xh is not None:
                        Wn, bn = next_level(self.net, level, W, b, bits)
                        self.level(sys, code, Wn, bn, xh, level + 1)
                self._expand(parent_sys, W, b, bits, status, encounters, seen_bit, checked, queue)
            if seeded_at == self.version:
                break
            # the region shrank: make sure something overlapping it was expanded
            seeded_at = self.version
            xs = self._inner_point(parent_sys)
            if xs is None:
                break
            bits = self._seed(parent_sys, W, b, xs)
            if bits is None or bits.tobytes() in done:
                break
            key = bits.tobytes()
            if key not in checked:
                checked.add(key)
                self.stats.codes_checked += 1
            queue.append((bits, self.version))
        return expanded

    def _expand(self, parent_sys, W, b, bits, status, encounters, seen_bit, checked, queue):
        cands, resolve = [], []
        for m in range(W.shape[0]):
            if status[m] == _EXCLUDED:
                continue
            flipped = bits.copy()
            flipped[m] ^= 1
            if flipped.tobytes() in checked:
                continue
            if status[m] == _UNKNOWN:
                if seen_bit[m].all():
                    status[m] = _CUTS
                elif encounters[m] > 0:
                    resolve.append(m)
            cands.append((m, flipped))
        # lazy pre-screening: a hyperplane whose first neighbour test failed is
        # screened against the traversing region before it costs a second test
        if resolve:
            if self.pool is not None and len(resolve) > 1:
                opens = list(self.pool.map(lambda m: self._side_open(parent_sys, W[m], b[m], bits[m]), resolve))
            else:
                opens = [self._side_open(parent_sys, W[m], b[m], bits[m]) for m in resolve]
            for m, is_open in zip(resolve, opens):
                status[m] = _CUTS if is_open else _EXCLUDED
            cands = [(m, f) for m, f in cands if status[m] != _EXCLUDED]
        systems = [self._with_region(self._level_system(parent_sys, W, b, f)) for _, f in cands]
        results = self._map_feasible(systems)
        for (m, flipped), res in zip(cands, results):
            checked.add(flipped.tobytes())
            self.stats.codes_checked += 1
            encounters[m] += 1
            if res.feasible:
                if status[m] == _UNKNOWN:
                    status[m] = _CUTS
                seen_bit[np.arange(W.shape[0]), flipped] = True
                queue.append((flipped, self.version))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
        self.stats.wall_time = time.perf_counter() - self.t0


def _start_point(net: ReluNetwork, start, engine: _Engine) -> np.ndarray:
    x = np.asarray(start, dtype=np.float64).reshape(-1)
    if x.shape[0] != net.input_dim or not np.all(np.isfinite(x)):
        raise InvalidInputError(f"start must be a finite vector of length {net.input_dim}")
    if not engine.region_sys.contains(x, engine.tol):
        raise InvalidInputError("start point lies outside the traversing region")
    return x


def traverse(net: ReluNetwork, start, config: Optional[TraversalConfig] = None,
             visitor: Optional[Visitor] = None) -> tuple:
    """Visit every non-empty level-L polytope overlapping the region.

    Returns ``(codes, stats)`` with ``codes`` in visit order. The visitor
    sees each polytope once, with its local linear model, and may stop the
    run or shrink the region.
    """
    engine = _Engine(net, config or TraversalConfig(), visitor)
    try:
        x = _start_point(net, start, engine)
        W, b = net.first_layer
        engine.level(None, ActivationCode(()), W, b, x, 1)
    except _Halt:
        pass
    finally:
        engine.close()
    return tuple(engine.leaves), engine.stats


def traverse_level(net: ReluNetwork, parent_code: ActivationCode, parent_region: Optional[BoundedRegion],
                   start, level: int, visitor: Optional[Visitor] = None,
                   config: Optional[TraversalConfig] = None) -> set:
    """Level-``level`` codes inside the parent polytope ``parent_code`` intersected with ``parent_region``.

    Levels below ``level`` are traversed too; the visitor sees the leaves.
    """
    if len(parent_code) != level - 1:
        raise InvalidInputError(f"parent code must have {level - 1} levels for level {level}")
    cfg = config or TraversalConfig()
    if parent_region is not None:
        cfg = TraversalConfig(parent_region, cfg.max_polytopes, cfg.time_budget, cfg.prescreen, cfg.workers)
    engine = _Engine(net, cfg, visitor)
    found = []
    try:
        x = _start_point(net, start, engine)
        if level == 1:
            W, b = net.first_layer
            parent_sys = None
        else:
            parent = polytope_from_code(net, parent_code)
            parent_sys = parent.system
            if not parent_sys.contains(x, engine.tol):
                raise InvalidInputError("start point lies outside the parent polytope")
            W, b = net.first_layer
            for l, bits in enumerate(parent_code.levels, start=1):
                W, b = next_level(net, l, W, b, bits)
        found = engine.level(parent_sys, parent_code, W, b, x, level)
    except _Halt:
        pass
    finally:
        engine.close()
    return set(found)


def traverse_with_shrinking(net: ReluNetwork, start, config: Optional[TraversalConfig], visitor) -> tuple:
    """Traversal driven by a stateful visitor that may shrink the region.

    Returns ``(visitor.best, stats)``; every polytope meeting the final
    region has been visited unless the run was stopped or truncated.
    """
    _, stats = traverse(net, start, config, visitor)
    return getattr(visitor, "best", None), stats
