"""Brute-force baselines: exhaustive code enumeration and dense grid scans.

These are deliberately naive and exist to check the traversal and the
verifiers; nothing here is meant to be fast.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from ._config import Tolerances, get_tolerances
from .errors import InvalidInputError, UnsupportedConfigurationError
from .lp import solve_feasibility
from .network import ActivationCode, ReluNetwork, next_level
from .polytope import BoundedRegion, hyperplane_rows

MAX_NEURONS = 24
MAX_GRID_POINTS = 10_000_000


@dataclass
class EnumerationResult:
    codes: set
    lp_calls: int = 0


def _all_bits(M: int):
    for bits in itertools.product((0, 1), repeat=M):
        yield np.array(bits, dtype=np.uint8)


def enumerate_bruteforce(net: ReluNetwork, region: Optional[BoundedRegion] = None,
                         tol: Optional[Tolerances] = None) -> EnumerationResult:
    """Check every code level by level, skipping children of empty prefixes."""
    tol = tol or get_tolerances()
    if sum(net.widths) > MAX_NEURONS:
        raise UnsupportedConfigurationError(
            f"brute force is limited to {MAX_NEURONS} hidden neurons, network has {sum(net.widths)}")
    region = region or BoundedRegion.sentinel(net.input_dim, tol)
    region_sys = region.to_system(tol)
    result = EnumerationResult(set())

    def walk(parent_sys, prefix, W, b, level):
        for bits in _all_bits(W.shape[0]):
            rows = hyperplane_rows(W, b, bits)
            sys = rows if parent_sys is None else parent_sys.stack(rows)
            res = solve_feasibility(sys.stack(region_sys), tol)
            result.lp_calls += res.lp_runs
            if not res.feasible:
                continue
            code = prefix.extend(bits)
            if level == net.depth:
                result.codes.add(code)
            else:
                Wn, bn = next_level(net, level, W, b, bits)
                walk(sys, code, Wn, bn, level + 1)

    W, b = net.first_layer
    walk(None, ActivationCode(()), W, b, 1)
    return result


# ---------------------------------------------------------------------------
# grid scans
# ---------------------------------------------------------------------------


def grid_points(region: BoundedRegion, resolution: float,
                tol: Optional[Tolerances] = None) -> np.ndarray:
    """Uniform grid over the region's bounding box (corners included), filtered to the region."""
    if not resolution > 0:
        raise InvalidInputError("resolution must be positive")
    lo, hi = region.bounding_box(tol)
    counts = [int(math.ceil((h - l) / resolution - 1e-9)) + 1 if h > l else 1 for l, h in zip(lo, hi)]
    total = math.prod(counts)
    if total > MAX_GRID_POINTS:
        raise UnsupportedConfigurationError(f"grid of {total} points exceeds {MAX_GRID_POINTS}")
    axes = [np.linspace(l, h, n) for l, h, n in zip(lo, hi, counts)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    if not region.is_box():
        sys = region.to_system(tol)
        slack = sys.b[:, None] - sys.A @ X.T
        X = X[slack.min(axis=0) >= -(tol or get_tolerances()).eps_num]
    return X


def evaluate_grid(net: ReluNetwork, X: np.ndarray) -> tuple:
    """Outputs and per-level activation bits on a batch, via the fused layer kernel."""
    H = np.ascontiguousarray(X, dtype=np.float64)
    if net.normalization is not None:
        H = (H - net.normalization.mean) / net.normalization.scale
    bits = []
    for layer in net.hidden:
        H, B = _kernels.relu_layer(H, layer.weights, layer.bias)
        bits.append(B)
    return H @ net.output.weights.T + net.output.bias, bits


def codes_of(bits: list) -> list:
    """Distinct activation codes among the rows of per-level bit matrices."""
    packed = np.hstack(bits)
    uniq = np.unique(packed, axis=0)
    out = []
    for row in uniq:
        levels, start = [], 0
        for B in bits:
            levels.append(tuple(int(v) for v in row[start:start + B.shape[1]]))
            start += B.shape[1]
        out.append(ActivationCode(tuple(levels)))
    return out


@dataclass
class GridScanResult:
    codes: set
    min: np.ndarray
    max: np.ndarray
    argmin: np.ndarray
    argmax: np.ndarray
    n_points: int = 0
    points: Optional[np.ndarray] = field(default=None, repr=False)
    outputs: Optional[np.ndarray] = field(default=None, repr=False)


def grid_scan(net: ReluNetwork, region: BoundedRegion, resolution: float,
              keep: bool = False, tol: Optional[Tolerances] = None) -> GridScanResult:
    X = grid_points(region, resolution, tol)
    if X.shape[0] == 0:
        raise InvalidInputError("no grid point falls inside the region")
    out, bits = evaluate_grid(net, X)
    imin, imax = out.argmin(axis=0), out.argmax(axis=0)
    cols = np.arange(out.shape[1])
    return GridScanResult(set(codes_of(bits)), out[imin, cols], out[imax, cols],
                          X[imin], X[imax], X.shape[0],
                          X if keep else None, out if keep else None)


def counterfactual_bruteforce(net: ReluNetwork, spec, region: Optional[BoundedRegion] = None,
                              tol: Optional[Tolerances] = None):
    """Best per-polytope counterfactual over every non-empty polytope."""
    from .polytope import polytope_from_code
    from .verifiers import CounterfactualResult, _CounterfactualProblem

    tol = tol or get_tolerances()
    problem = _CounterfactualProblem(net, spec, region, tol)
    best = None
    for code in sorted(enumerate_bruteforce(net, problem.region, tol).codes, key=str):
        cand = problem.solve(polytope_from_code(net, code))
        if cand is not None and (best is None or cand.distance < best.distance):
            best = cand
    if best is None:
        return CounterfactualResult("none-found", None, math.inf, None, None, problem.origin_class)
    return best
