"""Verifiers built as traversal visitors.

Every verifier reasons on pre-link outputs: a sigmoid or softmax never
changes which input is best or which class wins. Optimisation inside a
polytope runs over its closure intersected with the region; by continuity
of the network a point on a shared face has the same output under either
neighbour's local model, so witnesses re-evaluate correctly through
``forward``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._config import Tolerances, get_tolerances
from .errors import InvalidInputError, ParseError, UnsupportedConfigurationError
from .lp import (OPTIMAL, ConstraintSystem, LinearConstraint, as_vector, interior_point,
                 optimize_linear, solve_feasibility)
from .network import ActivationCode, LocalLinearModel, ReluNetwork, forward, local_linear_model
from .polytope import BoundedRegion, Polytope
from .qp import project
from .traversal import TraversalConfig, TraversalStats, VisitOutcome, traverse

VERIFIED = "verified"
VIOLATED = "violated"
TRUNCATED = "truncated"

EXACT_MAX_DIM = 4


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _config(region: BoundedRegion, config: Optional[TraversalConfig]) -> TraversalConfig:
    if config is None:
        return TraversalConfig(region)
    return TraversalConfig(region, config.max_polytopes, config.time_budget, config.prescreen, config.workers)


def _region_start(region: BoundedRegion, tol: Tolerances) -> np.ndarray:
    sys = region.to_system(tol)
    res = interior_point(sys, tol)
    if not res.feasible:
        res = solve_feasibility(sys, tol)
    if not res.feasible:
        raise InvalidInputError("the region is empty")
    return res.witness


def _closure(poly: Polytope, region_sys: ConstraintSystem) -> ConstraintSystem:
    return poly.system.stack(region_sys).closed()


def _output_row(model: LocalLinearModel, index: int) -> tuple:
    if not 0 <= index < model.weights.shape[0]:
        raise InvalidInputError(f"output index {index} out of range for {model.weights.shape[0]} outputs")
    return model.weights[index], float(model.bias[index])


def _code_json(code: ActivationCode) -> str:
    return str(code)


# ---------------------------------------------------------------------------
# output range and adversarial attacks
# ---------------------------------------------------------------------------


@dataclass
class RangeResult:
    min: float
    max: float
    argmin: Optional[np.ndarray]
    argmax: Optional[np.ndarray]
    per_polytope: list = field(default_factory=list)   # (code, local min, local max)
    truncated: bool = False
    stats: Optional[TraversalStats] = None


def output_range(net: ReluNetwork, region: BoundedRegion, output_index: int = 0,
                 config: Optional[TraversalConfig] = None, start=None) -> RangeResult:
    """Extremes of one output over the region, one pair of LPs per polytope."""
    tol = get_tolerances()
    region_sys = region.to_system(tol)
    x = _region_start(region, tol) if start is None else start
    res = RangeResult(math.inf, -math.inf, None, None)

    def visit(poly, model):
        w, c = _output_row(model, output_index)
        sys = _closure(poly, region_sys)
        lo = optimize_linear(w, "min", sys, tol)
        hi = optimize_linear(w, "max", sys, tol)
        if lo.status != OPTIMAL or hi.status != OPTIMAL:
            # the polytope met the region with margin, so its closure cannot be empty
            return None
        vlo, vhi = lo.value + c, hi.value + c
        res.per_polytope.append((poly.code, vlo, vhi))
        if vlo < res.min:
            res.min, res.argmin = vlo, lo.argopt
        if vhi > res.max:
            res.max, res.argmax = vhi, hi.argopt
        return None

    _, stats = traverse(net, x, _config(region, config), visit)
    res.truncated = stats.truncated
    res.stats = stats
    return res


def adversarial_binary(net: ReluNetwork, x0, region: BoundedRegion, y: int,
                       config: Optional[TraversalConfig] = None) -> tuple:
    """Worst point for a binary classifier: maximise the log-odds if ``y == 0``, minimise if ``y == 1``."""
    if y not in (0, 1):
        raise InvalidInputError("y must be 0 or 1")
    if net.output_dim != 1:
        raise InvalidInputError("binary attack needs a scalar output")
    x0 = as_vector(x0, net.input_dim, name="x0")
    rr = output_range(net, region, 0, config, start=x0 if region.contains(x0) else None)
    if y == 0:
        return rr.argmax, rr.max, rr
    return rr.argmin, rr.min, rr


@dataclass
class Verdict:
    status: str
    witness: Optional[np.ndarray] = None
    code: Optional[ActivationCode] = None
    value: Optional[float] = None
    detail: dict = field(default_factory=dict)
    per_polytope: list = field(default_factory=list)
    stats: Optional[TraversalStats] = None

    @property
    def verified(self) -> bool:
        return self.status == VERIFIED


def class_region(model: LocalLinearModel, q: int, open_rows: bool = True) -> ConstraintSystem:
    """Halfspaces where class ``q`` beats every other class under ``model``."""
    Q = model.weights.shape[0]
    others = [i for i in range(Q) if i != q]
    A = model.weights[others] - model.weights[q]
    b = model.bias[q] - model.bias[others]
    return ConstraintSystem(A, b, np.full(len(others), open_rows), check=False)


def _vertices(system: ConstraintSystem, tol: Tolerances):
    A, b = system.A, system.b
    P = system.dim
    for rows in itertools.combinations(range(A.shape[0]), P):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ v <= b + 1e-9 * (1.0 + np.abs(b))):
            yield v


def adversarial_multiclass(net: ReluNetwork, x0, region: BoundedRegion, q: int, mode: str = "sound",
                           config: Optional[TraversalConfig] = None) -> Verdict:
    """Search for inputs where class ``q`` loses.

    ``sound`` maximises every competitor margin by LP; ``exact`` maximises
    the sum of exponentiated margins by enumerating vertices (low dimension
    only) and reports the smallest probability of ``q``.
    """
    tol = get_tolerances()
    Q = net.output_dim
    if Q < 2:
        raise InvalidInputError("multiclass attack needs at least two outputs")
    if not 0 <= q < Q:
        raise InvalidInputError(f"class {q} out of range")
    if mode not in ("sound", "exact"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if mode == "exact" and net.input_dim > EXACT_MAX_DIM:
        raise UnsupportedConfigurationError(
            f"exact mode enumerates vertices and is limited to {EXACT_MAX_DIM} input dimensions")
    x0 = as_vector(x0, net.input_dim, name="x0")
    region_sys = region.to_system(tol)
    start = x0 if region_sys.contains(x0, tol) else _region_start(region, tol)
    best = {"margin": -math.inf, "point": None, "code": None, "rival": None,
            "objective": -math.inf, "obj_point": None, "obj_code": None}
    table = []

    def visit(poly, model):
        sys = _closure(poly, region_sys)
        row = {"code": poly.code, "margins": {}}
        for i in range(Q):
            if i == q:
                continue
            g = model.weights[i] - model.weights[q]
            c = float(model.bias[i] - model.bias[q])
            sol = optimize_linear(g, "max", sys, tol)
            if sol.status != OPTIMAL:
                continue
            m = sol.value + c
            row["margins"][i] = m
            if m > best["margin"]:
                best.update(margin=m, point=sol.argopt, code=poly.code, rival=i)
        if mode == "exact":
            others = [i for i in range(Q) if i != q]
            D = model.weights[others] - model.weights[q]
            e = model.bias[others] - model.bias[q]
            for v in _vertices(sys, tol):
                obj = float(np.sum(np.exp(D @ v + e)))
                if obj > best["objective"]:
                    best.update(objective=obj, obj_point=v, obj_code=poly.code)
        table.append(row)
        return None

    _, stats = traverse(net, start, _config(region, config), visit)
    detail = {"max_margin": best["margin"], "rival": best["rival"]}
    witness, code = best["point"], best["code"]
    if mode == "exact" and best["obj_point"] is not None:
        detail["min_probability"] = 1.0 / (1.0 + best["objective"])
        detail["exact_witness"] = best["obj_point"]
        detail["exact_code"] = best["obj_code"]
    if best["margin"] >= tol.eps_int:
        status = VIOLATED
    elif stats.truncated:
        status = TRUNCATED
    else:
        status = VERIFIED
    return Verdict(status, witness, code, best["margin"], detail, table, stats)


# ---------------------------------------------------------------------------
# robustness
# ---------------------------------------------------------------------------


def predicted_class(net: ReluNetwork, x, gamma: float = 0.0) -> int:
    """Argmax class, or ``1 iff output >= gamma`` for a scalar output."""
    o = forward(net, x)
    if o.shape[0] == 1:
        return int(o[0] >= gamma)
    return int(np.argmax(o))


def _class_change_rows(model: LocalLinearModel, origin: int, gamma: float) -> list:
    """(g, c) pairs; the class changes wherever some ``g.x + c`` is positive."""
    if model.weights.shape[0] == 1:
        w, b = model.weights[0], float(model.bias[0])
        # class 0 -> 1 needs o >= gamma, class 1 -> 0 needs o < gamma
        return [(w, b - gamma)] if origin == 0 else [(-w, gamma - b)]
    return [(model.weights[i] - model.weights[origin], float(model.bias[i] - model.bias[origin]))
            for i in range(model.weights.shape[0]) if i != origin]


def robustness_check(net: ReluNetwork, x0, epsilon: float, norm: str = "inf",
                     clip: Optional[BoundedRegion] = None, gamma: float = 0.0,
                     label: Optional[int] = None, config: Optional[TraversalConfig] = None) -> Verdict:
    """Is the predicted class constant on the L-infinity ball (intersected with ``clip``)?

    Stops at the first polytope holding an adversarial point.
    """
    tol = get_tolerances()
    if norm not in ("inf", "linf", math.inf):
        raise UnsupportedConfigurationError("robustness is checked over L-infinity balls only")
    x0 = as_vector(x0, net.input_dim, name="x0")
    if not epsilon >= 0:
        raise InvalidInputError("epsilon must be non-negative")
    region = BoundedRegion.linf_ball(x0, epsilon)
    if clip is not None:
        region = BoundedRegion.intersection([region, clip])
    region_sys = region.to_system(tol)
    if not solve_feasibility(region_sys, tol).feasible:
        raise InvalidInputError("the ball does not meet the clipping box")
    origin = predicted_class(net, x0, gamma) if label is None else int(label)
    start = x0 if region_sys.contains(x0, tol) else _region_start(region, tol)
    found = {}
    table = []

    def visit(poly, model):
        sys = _closure(poly, region_sys)
        worst = -math.inf
        for g, c in _class_change_rows(model, origin, gamma):
            sol = optimize_linear(g, "max", sys, tol)
            if sol.status != OPTIMAL:
                continue
            m = sol.value + c
            worst = max(worst, m)
            if m >= tol.eps_int:
                found.update(point=sol.argopt, code=poly.code, margin=m)
                table.append((poly.code, worst))
                return VisitOutcome.stop()
        table.append((poly.code, worst))
        return None

    _, stats = traverse(net, start, _config(region, config), visit)
    detail = {"origin_class": origin, "epsilon": float(epsilon)}
    if found:
        detail["adversarial_class"] = predicted_class(net, found["point"], gamma)
        return Verdict(VIOLATED, found["point"], found["code"], found["margin"], detail, table, stats)
    worst = max((m for _, m in table), default=-math.inf)
    return Verdict(TRUNCATED if stats.truncated else VERIFIED, None, None, worst, detail, table, stats)


# ---------------------------------------------------------------------------
# output properties
# ---------------------------------------------------------------------------


@dataclass
class PropertySpec:
    """Conjunction of ``a_k . o + beta_k <= 0`` over the outputs ``o``, required on ``region``."""

    inequalities: Sequence[tuple]
    region: Optional[BoundedRegion] = None
    mode: str = "forall"

    def __post_init__(self):
        if self.mode != "forall":
            raise InvalidInputError(f"unsupported property mode {self.mode!r}")
        ineqs = []
        for a, beta in self.inequalities:
            ineqs.append((as_vector(a, name="property row"), float(beta)))
        if not ineqs:
            raise InvalidInputError("property needs at least one inequality")
        if len({a.shape[0] for a, _ in ineqs}) != 1:
            raise InvalidInputError("property rows disagree on output dimension")
        self.inequalities = tuple(ineqs)

    @classmethod
    def from_json(cls, obj) -> "PropertySpec":
        if not isinstance(obj, dict) or "inequalities" not in obj:
            raise ParseError("property needs 'inequalities'", field="inequalities")
        try:
            rows = [(r["a"], r["beta"]) for r in obj["inequalities"]]
            region = BoundedRegion.from_json(obj["region"]) if obj.get("region") is not None else None
            return cls(rows, region, obj.get("mode", "forall"))
        except KeyError as exc:
            raise ParseError("missing key in property", field=exc.args[0]) from None
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise ParseError(f"bad property: {exc}") from None

    def to_json(self) -> dict:
        d = {"inequalities": [{"a": a.tolist(), "beta": b} for a, b in self.inequalities],
             "mode": self.mode}
        if self.region is not None:
            d["region"] = self.region.to_json()
        return d


def verify_output_property(net: ReluNetwork, region: Optional[BoundedRegion], spec: PropertySpec,
                           config: Optional[TraversalConfig] = None) -> Verdict:
    tol = get_tolerances()
    region = region or spec.region
    if region is None:
        raise InvalidInputError("no region given for the property")
    if spec.inequalities[0][0].shape[0] != net.output_dim:
        raise InvalidInputError("property rows do not match the network's output dimension")
    region_sys = region.to_system(tol)
    start = _region_start(region, tol)
    found = {}
    table = []

    def visit(poly, model):
        sys = _closure(poly, region_sys)
        maxima = []
        for k, (a, beta) in enumerate(spec.inequalities):
            sol = optimize_linear(a @ model.weights, "max", sys, tol)
            if sol.status != OPTIMAL:
                maxima.append(None)
                continue
            v = sol.value + float(a @ model.bias) + beta
            maxima.append(v)
            if v >= tol.eps_int:
                found.update(point=sol.argopt, code=poly.code, value=v, index=k)
                table.append((poly.code, maxima))
                return VisitOutcome.stop()
        table.append((poly.code, maxima))
        return None

    _, stats = traverse(net, start, _config(region, config), visit)
    if found:
        return Verdict(VIOLATED, found["point"], found["code"], found["value"],
                       {"inequality": found["index"]}, table, stats)
    worst = max((v for _, row in table for v in row if v is not None), default=-math.inf)
    return Verdict(TRUNCATED if stats.truncated else VERIFIED, None, None, worst, {}, table, stats)


# ---------------------------------------------------------------------------
# monotonicity
# ---------------------------------------------------------------------------


NONDECREASING = "monotone-nondecreasing"
NONINCREASING = "monotone-nonincreasing"
CONSTANT = "constant"


@dataclass
class MonotonicityReport:
    feature: int
    claimed: str
    verdict: str
    violations: list = field(default_factory=list)      # (code, coefficient) contradicting the claim
    coefficients: list = field(default_factory=list)    # (code, coefficient) for every polytope
    truncated: bool = False
    stats: Optional[TraversalStats] = None

    @property
    def holds(self) -> bool:
        """Does the traversed evidence support the claimed direction?"""
        if self.truncated or self.verdict == VIOLATED and self.claimed == "any":
            return False
        return not self.violations


def monotonicity(net: ReluNetwork, region: BoundedRegion, feature: int, claimed: str = "any",
                 output_index: int = 0, config: Optional[TraversalConfig] = None) -> MonotonicityReport:
    """Sign of the feature's local coefficient over every polytope in the region.

    A coefficient within ``eps_num`` of zero fits either direction.
    """
    tol = get_tolerances()
    if claimed not in ("increasing", "decreasing", "any"):
        raise InvalidInputError("claimed direction must be increasing, decreasing or any")
    if not 0 <= feature < net.input_dim:
        raise InvalidInputError(f"feature {feature} out of range")
    coefs = []

    def visit(poly, model):
        w, _ = _output_row(model, output_index)
        coefs.append((poly.code, float(w[feature])))
        return None

    _, stats = traverse(net, _region_start(region, tol), _config(region, config), visit)
    pos = [(c, v) for c, v in coefs if v > tol.eps_num]
    neg = [(c, v) for c, v in coefs if v < -tol.eps_num]
    if stats.truncated:
        verdict = TRUNCATED
    elif pos and neg:
        verdict = VIOLATED
    elif pos:
        verdict = NONDECREASING
    elif neg:
        verdict = NONINCREASING
    else:
        verdict = CONSTANT
    if claimed == "increasing":
        violations = neg
    elif claimed == "decreasing":
        violations = pos
    else:
        # no direction claimed: the minority sign is what breaks monotonicity
        violations = (neg if len(neg) <= len(pos) else pos) if pos and neg else []
    return MonotonicityReport(feature, claimed, verdict, violations, coefs, stats.truncated, stats)


# ---------------------------------------------------------------------------
# counterfactuals
# ---------------------------------------------------------------------------


NORMS = {"1": 1, "l1": 1, 1: 1, "2": 2, "l2": 2, 2: 2, "inf": math.inf, "linf": math.inf, math.inf: math.inf}


@dataclass
class CounterfactualSpec:
    origin: np.ndarray
    norm: object = 2
    gamma: float = 0.0
    region: Optional[BoundedRegion] = None

    def __post_init__(self):
        self.origin = as_vector(self.origin, name="origin")
        if self.norm not in NORMS:
            raise InvalidInputError(f"norm must be 1, 2 or inf, got {self.norm!r}")
        self.norm = NORMS[self.norm]


@dataclass
class CounterfactualResult:
    status: str                      # "found" or "none-found"
    point: Optional[np.ndarray]
    distance: float
    code: Optional[ActivationCode]
    achieved_class: Optional[int]
    origin_class: int
    gap: Optional[float] = None      # duality gap of the L2 projection
    per_polytope: list = field(default_factory=list)
    truncated: bool = False
    stats: Optional[TraversalStats] = None


def _distance(x, x0, p) -> float:
    return float(np.linalg.norm(x - x0, ord=p))


class _CounterfactualProblem:
    """Closest class-changing point inside one polytope (shared with the brute-force oracle)."""

    def __init__(self, net: ReluNetwork, spec: CounterfactualSpec, region: Optional[BoundedRegion],
                 tol: Tolerances):
        if spec.origin.shape[0] != net.input_dim:
            raise InvalidInputError("origin does not match the network input dimension")
        self.net, self.spec, self.tol = net, spec, tol
        self.region = region or spec.region or BoundedRegion.sentinel(net.input_dim, tol)
        self.region_sys = self.region.to_system(tol)
        self.x0 = spec.origin
        self.origin_class = predicted_class(net, self.x0, spec.gamma)

    def _targets(self, model: LocalLinearModel):
        """One closed system of class-change rows per target class."""
        eps = self.tol.eps_int
        Q = model.weights.shape[0]
        if Q == 1:
            (g, c), = _class_change_rows(model, self.origin_class, self.spec.gamma)
            yield 1 - self.origin_class, ConstraintSystem(-g[None, :], np.array([c - eps]), check=False)
            return
        for q in range(Q):
            if q == self.origin_class:
                continue
            cr = class_region(model, q)
            yield q, ConstraintSystem(cr.A, cr.b - eps, check=False)

    def solve(self, poly: Polytope, model: Optional[LocalLinearModel] = None):
        model = model or local_linear_model(self.net, poly.code)
        base = _closure(poly, self.region_sys)
        best = None
        for target, rows in self._targets(model):
            cand = self._nearest(base.stack(rows))
            if cand is None:
                continue
            point, gap = cand
            d = _distance(point, self.x0, self.spec.norm)
            if best is None or d < best.distance:
                best = CounterfactualResult("found", point, d, poly.code, target, self.origin_class, gap)
        return best

    def _nearest(self, sys: ConstraintSystem):
        p, P, x0 = self.spec.norm, sys.dim, self.x0
        A, b = sys.A, sys.b
        if p == 2:
            feas = solve_feasibility(sys, self.tol)
            if not feas.feasible:
                return None
            proj = project(A, b, x0, feas.witness)
            return proj.point, proj.gap
        eye = np.eye(P)
        if p == math.inf:
            # variables (x, s): |x - x0|_inf <= s
            ones = np.ones((P, 1))
            ext = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]),
                             np.hstack([eye, -ones]), np.hstack([-eye, -ones])])
            rhs = np.concatenate([b, x0, -x0])
            obj = np.zeros(P + 1)
            obj[-1] = 1.0
        else:
            # variables (x, u): |x_j - x0_j| <= u_j
            ext = np.vstack([np.hstack([A, np.zeros_like(A)]),
                             np.hstack([eye, -eye]), np.hstack([-eye, -eye])])
            rhs = np.concatenate([b, x0, -x0])
            obj = np.concatenate([np.zeros(P), np.ones(P)])
        sol = optimize_linear(obj, "min", ConstraintSystem(ext, rhs, check=False), self.tol)
        if sol.status != OPTIMAL:
            return None
        return sol.argopt[:P], None


class _CounterfactualVisitor:
    def __init__(self, problem: _CounterfactualProblem):
        self.problem = problem
        self.best = None
        self.table = []

    def __call__(self, poly, model):
        cand = self.problem.solve(poly, model)
        self.table.append((poly.code, None if cand is None else cand.distance))
        if cand is None or (self.best is not None and cand.distance >= self.best.distance):
            return None
        self.best = cand
        # small slack keeps polytopes whose optimum ties the incumbent inside the region
        radius = cand.distance * (1.0 + 1e-6) + 1e-9
        ball = BoundedRegion.linf_ball(self.problem.x0, radius)
        return VisitOutcome.shrink(BoundedRegion.intersection([self.problem.region, ball]))


def counterfactual(net: ReluNetwork, spec: CounterfactualSpec,
                   config: Optional[TraversalConfig] = None) -> CounterfactualResult:
    """Closest input (in the requested norm) whose predicted class differs from the origin's.

    The traversal region shrinks to an L-infinity ball around the origin
    whenever a closer candidate turns up.
    """
    tol = get_tolerances()
    problem = _CounterfactualProblem(net, spec, None, tol)
    if not problem.region_sys.contains(problem.x0, tol):
        raise InvalidInputError("origin lies outside the search region")
    visitor = _CounterfactualVisitor(problem)
    _, stats = traverse(net, problem.x0, _config(problem.region, config), visitor)
    best = visitor.best
    if best is None:
        best = CounterfactualResult("none-found", None, math.inf, None, None, problem.origin_class)
    best.per_polytope = visitor.table
    best.truncated = stats.truncated
    best.stats = stats
    return best
