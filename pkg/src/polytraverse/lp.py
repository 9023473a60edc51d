"""Dense linear algebra helpers and the linear-programming front end.

All systems are stored in canonical form ``A x <= b``. A row may be *open*
(strict), in which case a point satisfies it only with slack ``>= eps_int``.
Rows whose normal is identically zero are *trivial*: they are decided without
the solver and either dropped or make the whole system infeasible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from ._config import Tolerances, get_tolerances
from .errors import InvalidInputError, SolverStallError

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
OPTIMAL = "optimal"
UNBOUNDED = "unbounded"

# Cap on the margin variable; keeps the phase-2 problem bounded.
_MARGIN_CAP = 1.0
_PIVOT_TOL = 1e-9


def as_vector(x, dim: Optional[int] = None, name: str = "vector") -> np.ndarray:
    v = np.array(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    if dim is not None and v.shape[0] != dim:
        raise InvalidInputError(f"{name} has length {v.shape[0]}, expected {dim}")
    return v


def as_matrix(a, shape: Optional[tuple] = None, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=np.float64)
    if m.ndim == 1 and shape is not None and shape[0] == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    if shape is not None:
        for got, want in zip(m.shape, shape):
            if want is not None and got != want:
                raise InvalidInputError(f"{name} has shape {m.shape}, expected {shape}")
    return m


@dataclass(frozen=True)
class LinearConstraint:
    """``normal . x <= offset`` (sense "le") or ``normal . x >= offset`` (sense "ge")."""

    normal: np.ndarray
    offset: float
    sense: str = "le"
    strict: bool = False
    trivial: bool = False

    def __post_init__(self):
        if self.sense not in ("le", "ge"):
            raise InvalidInputError(f"unknown sense {self.sense!r}")
        normal = as_vector(self.normal, name="constraint normal")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))
        if not np.isfinite(self.offset):
            raise InvalidInputError("constraint offset is not finite")
        if not normal.any() and not self.trivial:
            raise InvalidInputError("zero normal requires trivial=True")

    def canonical(self):
        if self.sense == "le":
            return self.normal, self.offset
        return -self.normal, -self.offset


class ConstraintSystem:
    """A finite set of linear inequalities in ``R^P`` (canonical ``A x <= b``)."""

    __slots__ = ("A", "b", "strict")

    def __init__(self, A, b, strict=None, *, check: bool = True):
        if check:
            A = as_matrix(A, name="constraint matrix")
            b = as_vector(b, A.shape[0], name="constraint offsets")
        if strict is None:
            strict = np.zeros(A.shape[0], dtype=bool)
        else:
            strict = np.asarray(strict, dtype=bool).reshape(-1)
            if strict.shape[0] != A.shape[0]:
                raise InvalidInputError("strict mask length does not match row count")
        self.A = A
        self.b = b
        self.strict = strict

    @classmethod
    def empty(cls, dim: int) -> "ConstraintSystem":
        if dim < 1:
            raise InvalidInputError("dimension must be at least 1")
        return cls(np.zeros((0, dim)), np.zeros(0), check=False)

    @classmethod
    def from_constraints(cls, constraints: Iterable[LinearConstraint], dim: Optional[int] = None):
        constraints = list(constraints)
        if not constraints:
            if dim is None:
                raise InvalidInputError("dimension required for an empty system")
            return cls.empty(dim)
        dims = {c.normal.shape[0] for c in constraints}
        if dim is not None:
            dims.add(dim)
        if len(dims) != 1:
            raise InvalidInputError(f"constraints disagree on dimension: {sorted(dims)}")
        rows = [c.canonical() for c in constraints]
        A = np.vstack([r[0] for r in rows])
        b = np.array([r[1] for r in rows])
        strict = np.array([c.strict for c in constraints], dtype=bool)
        return cls(A, b, strict, check=False)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def __len__(self) -> int:
        return self.A.shape[0]

    def __repr__(self):
        return f"ConstraintSystem(rows={len(self)}, dim={self.dim}, open={int(self.strict.sum())})"

    @property
    def constraints(self) -> list:
        trivial = self.trivial_mask()
        return [
            LinearConstraint(self.A[i].copy(), self.b[i], "le", bool(self.strict[i]), bool(trivial[i]))
            for i in range(len(self))
        ]

    def trivial_mask(self) -> np.ndarray:
        return ~self.A.any(axis=1)

    def stack(self, *others: "ConstraintSystem") -> "ConstraintSystem":
        parts = [self, *others]
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise InvalidInputError(f"cannot stack systems of dimensions {sorted(dims)}")
        return ConstraintSystem(
            np.vstack([p.A for p in parts]),
            np.concatenate([p.b for p in parts]),
            np.concatenate([p.strict for p in parts]),
            check=False,
        )

    def flipped(self, index: int) -> "ConstraintSystem":
        """Reverse the direction of one row (``a x <= b`` becomes ``a x >= b``)."""
        if not 0 <= index < len(self):
            raise InvalidInputError(f"row index {index} out of range for {len(self)} rows")
        A = self.A.copy()
        b = self.b.copy()
        A[index] = -A[index]
        b[index] = -b[index]
        return ConstraintSystem(A, b, self.strict.copy(), check=False)

    def without(self, index: int) -> "ConstraintSystem":
        keep = np.ones(len(self), dtype=bool)
        keep[index] = False
        return ConstraintSystem(self.A[keep], self.b[keep], self.strict[keep], check=False)

    def closed(self) -> "ConstraintSystem":
        return ConstraintSystem(self.A, self.b, np.zeros(len(self), dtype=bool), check=False)

    def margins(self, x) -> np.ndarray:
        """Slack ``b - A x`` of every row at ``x``."""
        return self.b - self.A @ x

    def contains(self, x, tol: Optional[Tolerances] = None) -> bool:
        tol = tol or get_tolerances()
        s = self.margins(np.asarray(x, dtype=np.float64))
        need = np.where(self.strict, tol.eps_int, -tol.eps_num)
        return bool(np.all(s >= need))

    def fingerprint(self) -> bytes:
        return self.A.tobytes() + b"|" + self.b.tobytes() + b"|" + self.strict.tobytes()


@dataclass
class FeasibilityResult:
    status: str
    witness: Optional[np.ndarray] = None
    slack: Optional[float] = None
    lp_runs: int = field(default=0, repr=False)  # simplex invocations behind this answer

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE


@dataclass
class LpSolution:
    status: str
    argopt: Optional[np.ndarray] = None
    value: Optional[float] = None
    iterations: int = field(default=0, repr=False)


def _split_trivial(system: ConstraintSystem, tol: Tolerances, honour_strict: bool = True):
    """Decide zero-normal rows directly. Returns (reduced system, infeasible?)."""
    trivial = system.trivial_mask()
    if not trivial.any():
        return system, False
    need = np.where(system.strict & honour_strict, tol.eps_int, -tol.eps_num)
    if np.any(system.b[trivial] < need[trivial]):
        return system, True
    keep = ~trivial
    return ConstraintSystem(system.A[keep], system.b[keep], system.strict[keep], check=False), False


def _run(A, b, c):
    m, n = A.shape
    feas_tol = 1e-9 * max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    status, z, value, iters = _kernels.simplex(
        np.ascontiguousarray(A), np.ascontiguousarray(b), np.ascontiguousarray(c),
        50 * (m + n) + 1000, _PIVOT_TOL, feas_tol,
    )
    if status == _kernels.STALLED:
        raise SolverStallError(f"simplex exceeded its iteration limit ({iters} pivots, {m} rows)")
    return status, z, value, iters


def solve_feasibility(system: ConstraintSystem, tol: Optional[Tolerances] = None) -> FeasibilityResult:
    """Phase-I style feasibility with a witness.

    Maximises a common margin ``t`` on the open rows (capped at 1) subject to
    the closed rows; the system is feasible iff the witness it yields keeps
    every open row at slack ``>= eps_int`` and every closed row at slack
    ``>= -eps_num``.
    """
    tol = tol or get_tolerances()
    P = system.dim
    if P < 1:
        raise InvalidInputError("system dimension must be at least 1")
    reduced, dead = _split_trivial(system, tol)
    if dead:
        return FeasibilityResult(INFEASIBLE)
    if len(reduced) == 0:
        return FeasibilityResult(FEASIBLE, np.zeros(P), _MARGIN_CAP)
    A = reduced.A
    m = len(reduced)
    lp_A = np.zeros((m + 1, 2 * P + 1))
    lp_A[:m, :P] = A
    lp_A[:m, P:2 * P] = -A
    lp_A[:m, 2 * P] = reduced.strict
    lp_A[m, 2 * P] = 1.0
    lp_b = np.append(reduced.b, _MARGIN_CAP)
    c = np.zeros(2 * P + 1)
    c[-1] = 1.0
    status, z, _, _ = _run(lp_A, lp_b, c)
    if status != _kernels.OPTIMAL:
        return FeasibilityResult(INFEASIBLE, lp_runs=1)
    x = z[:P] - z[P:2 * P]
    slack = reduced.margins(x)
    need = np.where(reduced.strict, tol.eps_int, -tol.eps_num)
    if np.any(slack < need):
        return FeasibilityResult(INFEASIBLE, lp_runs=1)
    margin = float(slack[reduced.strict].min()) if reduced.strict.any() else _MARGIN_CAP
    return FeasibilityResult(FEASIBLE, x, margin, lp_runs=1)


def optimize_linear(objective, sense: str, system: ConstraintSystem,
                    tol: Optional[Tolerances] = None) -> LpSolution:
    """Optimise ``objective . x`` over the closure of ``system``.

    Open rows are treated as closed here, so the value is the supremum
    (resp. infimum) over the strict set.
    """
    tol = tol or get_tolerances()
    P = system.dim
    c = as_vector(objective, P, name="objective")
    if sense not in ("min", "max"):
        raise InvalidInputError(f"sense must be 'min' or 'max', got {sense!r}")
    reduced, dead = _split_trivial(system, tol, honour_strict=False)
    if dead:
        return LpSolution(INFEASIBLE)
    sign = 1.0 if sense == "max" else -1.0
    A = reduced.A
    lp_A = np.hstack([A, -A])
    lp_c = sign * np.concatenate([c, -c])
    status, z, _, iters = _run(lp_A, reduced.b.copy(), lp_c)
    if status == _kernels.INFEASIBLE:
        return LpSolution(INFEASIBLE, iterations=iters)
    if status == _kernels.UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=iters)
    x = z[:P] - z[P:]
    return LpSolution(OPTIMAL, x, float(c @ x), iters)


def interior_point(system: ConstraintSystem, tol: Optional[Tolerances] = None) -> FeasibilityResult:
    """Chebyshev-style centre: maximise the smallest normalised slack.

    ``slack`` of the result is that radius. Infeasible when the best radius
    is below ``eps_int``.
    """
    tol = tol or get_tolerances()
    P = system.dim
    trivial = system.trivial_mask()
    if trivial.all():
        raise InvalidInputError("interior point needs at least one non-trivial constraint")
    need = np.where(system.strict, tol.eps_int, -tol.eps_num)
    if np.any(system.b[trivial] < need[trivial]):
        return FeasibilityResult(INFEASIBLE)
    A = system.A[~trivial]
    b = system.b[~trivial]
    m = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    lp_A = np.zeros((m + 1, 2 * P + 1))
    lp_A[:m, :P] = A
    lp_A[:m, P:2 * P] = -A
    lp_A[:m, 2 * P] = norms
    lp_A[m, 2 * P] = 1.0
    lp_b = np.append(b, tol.sentinel)
    c = np.zeros(2 * P + 1)
    c[-1] = 1.0
    status, z, value, _ = _run(lp_A, lp_b, c)
    if status != _kernels.OPTIMAL or value < tol.eps_int:
        return FeasibilityResult(INFEASIBLE, lp_runs=1)
    x = z[:P] - z[P:2 * P]
    radius = float(np.min((b - A @ x) / norms))
    return FeasibilityResult(FEASIBLE, x, radius, lp_runs=1)


def box_system(lower: Sequence[float], upper: Sequence[float]) -> ConstraintSystem:
    lo = as_vector(lower, name="lower")
    hi = as_vector(upper, lo.shape[0], name="upper")
    P = lo.shape[0]
    eye = np.eye(P)
    return ConstraintSystem(np.vstack([eye, -eye]), np.concatenate([hi, -lo]), check=False)
