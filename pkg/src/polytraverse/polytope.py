"""Polytopes induced by activation codes, traversal regions, and adjacency queries.

A code bit of 1 means ``w.x + b >= 0`` and 0 means ``w.x + b < 0``; the
corresponding row in canonical form is ``s*w . x <= -s*b`` with ``s = -1``
for bit 1 and ``s = +1`` for bit 0. Neuron rows are open (need slack
``eps_int``) so that "non-empty" means "has interior", except a zero row
with bit 1, which is closed so that a dead neuron with bias exactly 0 keeps
the encoder's tie rule.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._config import Tolerances, get_tolerances
from .errors import InvalidInputError, ParseError
from .lp import (ConstraintSystem, LinearConstraint, as_vector, box_system,
                 solve_feasibility)
from .network import ActivationCode, ReluNetwork, next_level


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundedRegion:
    """Closed convex region: box, L-infinity ball, halfspaces or an intersection."""

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None
    rows: tuple = ()
    parts: tuple = ()

    @classmethod
    def box(cls, lower, upper) -> "BoundedRegion":
        lo = as_vector(lower, name="box lower")
        hi = as_vector(upper, lo.shape[0], name="box upper")
        if np.any(lo > hi):
            raise InvalidInputError("box needs lower <= upper in every coordinate")
        return cls("box", lower=lo, upper=hi)

    @classmethod
    def linf_ball(cls, center, radius: float) -> "BoundedRegion":
        c = as_vector(center, name="ball center")
        r = float(radius)
        if not np.isfinite(r) or r < 0:
            raise InvalidInputError("ball radius must be finite and non-negative")
        return cls("linf_ball", center=c, radius=r)

    @classmethod
    def halfspaces(cls, constraints: Sequence[LinearConstraint]) -> "BoundedRegion":
        constraints = tuple(constraints)
        if not constraints:
            raise InvalidInputError("halfspace region needs at least one row")
        ConstraintSystem.from_constraints(constraints)  # dimension check
        return cls("halfspaces", rows=constraints)

    @classmethod
    def intersection(cls, regions: Sequence["BoundedRegion"]) -> "BoundedRegion":
        regions = tuple(regions)
        if not regions:
            raise InvalidInputError("intersection of zero regions")
        if len({r.dim for r in regions}) != 1:
            raise InvalidInputError("intersected regions disagree on dimension")
        return cls("intersection", parts=regions)

    @classmethod
    def sentinel(cls, dim: int, tol: Optional[Tolerances] = None) -> "BoundedRegion":
        s = (tol or get_tolerances()).sentinel
        return cls.box(np.full(dim, -s), np.full(dim, s))

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return self.lower.shape[0]
        if self.kind == "linf_ball":
            return self.center.shape[0]
        if self.kind == "halfspaces":
            return self.rows[0].normal.shape[0]
        return self.parts[0].dim

    def is_box(self) -> bool:
        """True when the region coincides with its bounding box."""
        return self.kind in ("box", "linf_ball")

    def bounding_box(self, tol: Optional[Tolerances] = None):
        if self.kind == "box":
            return self.lower, self.upper
        if self.kind == "linf_ball":
            return self.center - self.radius, self.center + self.radius
        if self.kind == "halfspaces":
            s = (tol or get_tolerances()).sentinel
            return np.full(self.dim, -s), np.full(self.dim, s)
        boxes = [p.bounding_box(tol) for p in self.parts]
        return (np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0))

    def _bounded(self) -> bool:
        if self.kind == "intersection":
            return any(p._bounded() for p in self.parts)
        return self.kind != "halfspaces"

    def _rows(self) -> ConstraintSystem:
        if self.kind == "box":
            return box_system(self.lower, self.upper)
        if self.kind == "linf_ball":
            return box_system(self.center - self.radius, self.center + self.radius)
        if self.kind == "halfspaces":
            return ConstraintSystem.from_constraints(self.rows).closed()
        sys = self.parts[0]._rows()
        return sys.stack(*(p._rows() for p in self.parts[1:]))

    def to_system(self, tol: Optional[Tolerances] = None) -> ConstraintSystem:
        """Closed constraint rows; unbounded regions get the sentinel box appended."""
        sys = self._rows()
        if not self._bounded():
            s = (tol or get_tolerances()).sentinel
            sys = sys.stack(box_system(np.full(self.dim, -s), np.full(self.dim, s)))
        return sys

    def contains(self, x, tol: Optional[Tolerances] = None) -> bool:
        return self.to_system(tol).contains(np.asarray(x, dtype=np.float64), tol)

    def to_json(self) -> dict:
        if self.kind == "box":
            return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}
        if self.kind == "linf_ball":
            return {"type": "linf_ball", "center": self.center.tolist(), "radius": self.radius}
        if self.kind == "halfspaces":
            return {"type": "halfspaces",
                    "rows": [{"normal": c.normal.tolist(), "offset": c.offset, "sense": c.sense}
                             for c in self.rows]}
        return {"type": "intersection", "regions": [p.to_json() for p in self.parts]}

    @classmethod
    def from_json(cls, obj) -> "BoundedRegion":
        if not isinstance(obj, dict) or "type" not in obj:
            raise ParseError("region must be an object with a 'type'", field="type")
        kind = obj["type"]
        try:
            if kind == "box":
                return cls.box(obj["lower"], obj["upper"])
            if kind == "linf_ball":
                return cls.linf_ball(obj["center"], obj["radius"])
            if kind == "halfspaces":
                return cls.halfspaces([
                    LinearConstraint(r["normal"], r["offset"], r.get("sense", "le"))
                    for r in obj["rows"]])
            if kind == "intersection":
                return cls.intersection([cls.from_json(r) for r in obj["regions"]])
        except KeyError as exc:
            raise ParseError("missing key in region", field=exc.args[0]) from None
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise ParseError(f"bad {kind} region: {exc}") from None
        raise ParseError(f"unknown region type {kind!r}", field="type")


# ---------------------------------------------------------------------------
# polytopes
# ---------------------------------------------------------------------------


def hyperplane_rows(W_hat: np.ndarray, b_hat: np.ndarray, bits) -> ConstraintSystem:
    """Rows of one level: ``(-1)^c (w.x + b) <= 0`` in canonical form."""
    bits = np.asarray(bits, dtype=np.uint8)
    s = np.where(bits == 1, -1.0, 1.0)
    trivial = ~W_hat.any(axis=1)
    strict = ~(trivial & (bits == 1))
    # adding 0.0 turns -0.0 into 0.0 so printed systems stay readable
    return ConstraintSystem(s[:, None] * W_hat + 0.0, -s * b_hat + 0.0, strict, check=False)


@dataclass(frozen=True, eq=False)
class Polytope:
    """Level-``level`` polytope: rows of every level up to ``level`` (levels stacked in order)."""

    code: ActivationCode
    system: ConstraintSystem
    level: int
    last_level_offset: int = 0

    @property
    def last_level_size(self) -> int:
        return len(self.system) - self.last_level_offset

    def neighbor_system(self, m: int) -> ConstraintSystem:
        """System of the code with last-level bit ``m`` flipped."""
        if not 0 <= m < self.last_level_size:
            raise InvalidInputError(f"bit {m} out of range for last level of size {self.last_level_size}")
        row = self.last_level_offset + m
        sys = self.system.flipped(row)
        new_bit = 1 - self.code.levels[-1][m]
        trivial = not sys.A[row].any()
        sys.strict[row] = not (trivial and new_bit == 1)
        return sys


def polytope_from_code(net: ReluNetwork, code: ActivationCode) -> Polytope:
    L = len(code)
    if not 1 <= L <= net.depth:
        raise InvalidInputError(f"code must have between 1 and {net.depth} levels")
    for l, bits in enumerate(code.levels, start=1):
        if len(bits) != net.widths[l - 1]:
            raise InvalidInputError(f"level {l} has {len(bits)} bits, layer has {net.widths[l - 1]}")
    W_hat, b_hat = net.first_layer
    parts = []
    offset = 0
    for l, bits in enumerate(code.levels, start=1):
        parts.append(hyperplane_rows(W_hat, b_hat, bits))
        if l < L:
            offset += len(bits)
            W_hat, b_hat = next_level(net, l, W_hat, b_hat, bits)
    system = parts[0].stack(*parts[1:]) if len(parts) > 1 else parts[0]
    return Polytope(code, system, L, offset)


class EmptinessCache:
    """Memo of emptiness answers keyed by (code, region fingerprint); insert-if-absent."""

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0

    def lookup(self, key):
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        return None

    def store(self, key, value):
        with self._lock:
            return self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


def _with_region(system: ConstraintSystem, region: Optional[BoundedRegion], tol) -> ConstraintSystem:
    if region is None:
        return system
    if region.dim != system.dim:
        raise InvalidInputError(f"region has dimension {region.dim}, polytope {system.dim}")
    return system.stack(region.to_system(tol))


def is_empty(polytope: Polytope, region: Optional[BoundedRegion] = None,
             tol: Optional[Tolerances] = None, cache: Optional[EmptinessCache] = None) -> bool:
    """No point of ``polytope`` (with interior margin) lies in ``region``."""
    tol = tol or get_tolerances()
    key = None
    if cache is not None:
        key = (polytope.code, None if region is None else region.to_system(tol).fingerprint())
        hit = cache.lookup(key)
        if hit is not None:
            return hit
    empty = not solve_feasibility(_with_region(polytope.system, region, tol), tol).feasible
    if cache is not None:
        cache.store(key, empty)
    return empty


def is_redundant(polytope: Polytope, index: int, tol: Optional[Tolerances] = None) -> bool:
    """Flip test: row ``index`` is redundant if flipping it leaves nothing.

    Sufficient but not necessary; duplicated rows are never reported.
    """
    tol = tol or get_tolerances()
    if not 0 <= index < len(polytope.system):
        raise InvalidInputError(f"row {index} out of range for {len(polytope.system)} rows")
    if not solve_feasibility(polytope.system, tol).feasible:
        raise InvalidInputError("redundancy is only defined for a non-empty polytope")
    return not solve_feasibility(polytope.system.flipped(index), tol).feasible


def boundaries(polytope: Polytope, region: Optional[BoundedRegion] = None,
               tol: Optional[Tolerances] = None) -> list:
    """Indices of rows whose flip is non-empty (inside ``region`` when given)."""
    tol = tol or get_tolerances()
    if not solve_feasibility(_with_region(polytope.system, region, tol), tol).feasible:
        raise InvalidInputError("polytope does not intersect the region")
    out = []
    for m in range(len(polytope.system)):
        flipped = polytope.system.flipped(m)
        if flipped.trivial_mask()[m]:
            # keep the encoder's tie rule for zero rows
            bit_row = m - polytope.last_level_offset
            if 0 <= bit_row < polytope.last_level_size:
                flipped = polytope.neighbor_system(bit_row)
        if solve_feasibility(_with_region(flipped, region, tol), tol).feasible:
            out.append(m)
    return out


@dataclass(frozen=True)
class PrescreenResult:
    cutting: tuple = field(default_factory=tuple)

    def __iter__(self):
        return iter(self.cutting)

    def __len__(self):
        return len(self.cutting)

    def __contains__(self, m):
        return m in self.cutting


def one_adjacent_codes(polytope: Polytope, candidates: Optional[Iterable[int]] = None,
                       region: Optional[BoundedRegion] = None, tol: Optional[Tolerances] = None,
                       cache: Optional[EmptinessCache] = None) -> list:
    """Codes differing in exactly one last-level bit whose polytope meets ``region``."""
    tol = tol or get_tolerances()
    if candidates is None:
        candidates = range(polytope.last_level_size)
    region_key = None if region is None else region.to_system(tol).fingerprint()
    out = []
    for m in sorted(set(candidates)):
        code = polytope.code.flip(m)
        key = (code, region_key)
        empty = cache.lookup(key) if cache is not None else None
        if empty is None:
            sys = _with_region(polytope.neighbor_system(m), region, tol)
            empty = not solve_feasibility(sys, tol).feasible
            if cache is not None:
                cache.store(key, empty)
        if not empty:
            out.append(code)
    return out


def screen_hyperplanes(W: np.ndarray, beta: np.ndarray, base: ConstraintSystem,
                       tol: Tolerances, bbox=None, exact_box: bool = False,
                       point: Optional[np.ndarray] = None, counter=None,
                       indices: Optional[Iterable[int]] = None) -> tuple:
    """Indices ``m`` whose hyperplane ``W[m].x + beta[m] = 0`` cuts ``base``.

    Both open sides must meet ``base``. A bounding box of ``base`` rules
    sides out without the solver (and decides them when ``exact_box``); a
    known point of ``base`` settles the side it lies on.
    """
    eps = tol.eps_int
    if point is not None and not base.contains(point, tol):
        point = None
    cutting = []
    for m in (range(W.shape[0]) if indices is None else indices):
        w, c = W[m], beta[m]
        if not w.any():
            continue
        need_neg = need_pos = True
        if bbox is not None:
            lo, hi = bbox
            low = c + np.sum(np.minimum(w * lo, w * hi))
            high = c + np.sum(np.maximum(w * lo, w * hi))
            if low > -eps or high < eps:
                continue
            if exact_box:
                cutting.append(m)
                continue
        if point is not None:
            v = w @ point + c
            if v <= -eps:
                need_neg = False
            elif v >= eps:
                need_pos = False
        ok = True
        for need, sign in ((need_neg, 1.0), (need_pos, -1.0)):
            if not need:
                continue
            row = ConstraintSystem((sign * w)[None, :], np.array([-sign * c]),
                                   np.array([True]), check=False)
            if counter is not None:
                counter()
            if not solve_feasibility(base.stack(row), tol).feasible:
                ok = False
                break
        if ok:
            cutting.append(m)
    return tuple(cutting)


def prescreen(hyperplanes: ConstraintSystem, region: BoundedRegion,
              tol: Optional[Tolerances] = None) -> PrescreenResult:
    """Rows ``a.x <= off`` whose boundary ``a.x = off`` cuts through ``region``."""
    tol = tol or get_tolerances()
    if region.dim != hyperplanes.dim:
        raise InvalidInputError("region and hyperplanes disagree on dimension")
    base = region.to_system(tol)
    if not solve_feasibility(base, tol).feasible:
        raise InvalidInputError("pre-screening region is empty")
    T = screen_hyperplanes(hyperplanes.A, -hyperplanes.b, base, tol,
                           bbox=region.bounding_box(tol), exact_box=region.is_box())
    return PrescreenResult(T)
