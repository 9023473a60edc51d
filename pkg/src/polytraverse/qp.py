"""Euclidean projection onto a polyhedron ``{x : G x <= h}``.

Solved as a least-distance program through non-negative least squares
(Lawson and Hanson), which copes with degenerate vertices where more rows
are active than there are dimensions. The NNLS solution also yields the
Lagrange multipliers, so every answer carries a duality gap.

The NNLS solver is local: scipy's ``nnls`` (1.15) was seen returning points
that fail its own optimality conditions on these small, degenerate systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SolverStallError


@dataclass
class Projection:
    point: np.ndarray
    multipliers: np.ndarray
    gap: float
    iterations: int


def dual_value(G: np.ndarray, h: np.ndarray, x0: np.ndarray, lam: np.ndarray) -> float:
    """Lagrange dual of the projection problem at ``lam >= 0``."""
    v = G.T @ lam
    return float(lam @ (G @ x0 - h) - 0.5 * v @ v)


def nnls(E: np.ndarray, e: np.ndarray, max_iter: int) -> np.ndarray:
    """Lawson-Hanson active-set solution of ``min |E u - e|`` over ``u >= 0``."""
    n = E.shape[1]
    passive = np.zeros(n, dtype=bool)
    u = np.zeros(n)
    tol = 10 * np.finfo(float).eps * max(E.shape) * max(1.0, np.abs(E).sum(axis=0).max())
    for _ in range(max_iter):
        w = E.T @ (e - E @ u)
        free = ~passive & (w > tol)
        if not free.any():
            return u
        passive[np.argmax(np.where(free, w, -np.inf))] = True
        while True:
            trial = np.zeros(n)
            trial[passive] = np.linalg.lstsq(E[:, passive], e, rcond=None)[0]
            if (trial[passive] > tol).all():
                u = trial
                break
            bad = passive & (trial <= tol)
            alpha = np.min(u[bad] / (u[bad] - trial[bad]))
            u = u + alpha * (trial - u)
            passive &= u > tol
            u[~passive] = 0.0
            if not passive.any():
                break
    raise SolverStallError("NNLS exceeded its iteration limit")


def _pull_inside(G, h, x, start):
    """Move ``x`` toward the feasible ``start`` just far enough to satisfy every row."""
    gx, gs = G @ x, G @ start
    noise = 1e-12 * (1.0 + np.abs(h) + np.abs(G) @ np.abs(x))
    bad = gx - h > noise
    if not bad.any():
        return x
    t = np.max((gx[bad] - h[bad]) / np.maximum(gx[bad] - gs[bad], 1e-300))
    return x + min(1.0, t) * (start - x)


def project(G: np.ndarray, h: np.ndarray, x0: np.ndarray, start: np.ndarray,
            gap_tol: float = 1e-6, max_iter: Optional[int] = None) -> Projection:
    """Project ``x0`` onto ``G x <= h``; ``start`` is any feasible point."""
    G = np.asarray(G, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    m, P = G.shape
    start = np.asarray(start, dtype=np.float64)
    norms = np.linalg.norm(G, axis=1)
    f = np.full(m, -np.inf)
    nz = norms > 0
    f[nz] = (G[nz] @ x0 - h[nz]) / norms[nz]
    if not (f > 0).any():
        return Projection(x0.copy(), np.zeros(m), 0.0, 0)
    # the answer lies within R of x0, so rows farther away than R never bind;
    # dropping them (the sentinel box in particular) keeps NNLS well scaled
    R = float(np.linalg.norm(start - x0))
    keep = nz & (f >= -(R * (1 + 1e-6) + 1e-12))
    Gn = G[keep] / norms[keep, None]
    fs = f[keep] / R

    # least distance: min |z| s.t. -Gn z >= f, via NNLS on [-Gn^T; f^T] u ~ e_{P+1}
    E = np.vstack([-Gn.T, fs[None, :]])
    e = np.zeros(P + 1)
    e[-1] = 1.0
    u = nnls(E, e, max_iter or 50 * (Gn.shape[0] + P) + 100)
    r = E @ u - e
    if abs(r[-1]) <= 1e-14:
        raise SolverStallError("projection target set looks empty")
    z = -R * r[:P] / r[-1]
    x = _pull_inside(G, h, x0 + z, start)

    lam = np.zeros(m)
    lam[keep] = R * (u / -r[-1]) / norms[keep]
    d = x - x0
    primal = 0.5 * float(d @ d)
    gap = primal - dual_value(G, h, x0, lam)
    if gap > gap_tol * max(1.0, primal):
        raise SolverStallError(f"projection finished with duality gap {gap:.3g}")
    return Projection(x, lam, max(gap, 0.0), 1)
