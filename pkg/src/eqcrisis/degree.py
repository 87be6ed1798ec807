"""Brouwer degree by signed zero counting, and sign-change bifurcation detection.

Maps follow the package convention: ``f(X)`` takes points along the last
axis and broadcasts over leading axes, returning values of the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._numerics import dedup, fd_jacobian, fd_jacobian5, newton_batch
from .errors import (BoundaryZero, CriticalEconomy, DegenerateEndpoints, InputError,
                     Irregular, NotIsolated)
from .intrinsic import RANK_TOL

BOUNDARY_TOL = 1e-8
SARD_OFFSET = 1e-6
SARD_RETRIES = 5
ROOT_TOL = 1e-13
BRACKET_WIDTH = 1e-8
MAX_STARTS = 40_000


@dataclass
class DegreeResult:
    value: int
    zeros: list = field(default_factory=list)
    regular: bool = True
    target: np.ndarray | None = None

    def to_dict(self):
        return {
            "value": self.value,
            "regular": self.regular,
            "zeros": [{"point": [float(x) for x in p], "sign": int(s)} for p, s in self.zeros],
            "target": None if self.target is None else [float(x) for x in self.target],
        }


def _as_box(box):
    B = np.asarray(box, dtype=float)
    if B.ndim == 1:
        if B.shape != (2,):
            raise InputError("box must be (lo, hi) or an (n, 2) array")
        B = B[None, :]
    if B.ndim != 2 or B.shape[1] != 2 or np.any(B[:, 0] >= B[:, 1]):
        raise InputError("box must be (lo, hi) or an (n, 2) array with lo < hi")
    return B


def _vectorize(f, n):
    def F(X):
        X = np.asarray(X, dtype=float)
        return np.asarray(f(X), dtype=float).reshape(X.shape[:-1] + (n,))
    return F


def _boundary_points(B, per_side):
    n = B.shape[0]
    axes = [np.linspace(lo, hi, per_side) for lo, hi in B]
    pts = []
    for j in range(n):
        for end in (0, 1):
            sub = [a if i != j else np.array([B[j, end]]) for i, a in enumerate(axes)]
            pts.append(np.stack(np.meshgrid(*sub, indexing="ij"), -1).reshape(-1, n))
    return np.concatenate(pts)


def _default_grid(n):
    return 200 if n == 1 else max(3, int(MAX_STARTS ** (1.0 / n)))


def _zeros(F, J, B, y, grid, jac_scale):
    """Zeros of F - y in the open box, with det signs and a regularity flag."""
    n = B.shape[0]
    axes = [np.linspace(lo, hi, grid + 2)[1:-1] for lo, hi in B]
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    X, conv, res = newton_batch(lambda X: F(X) - y, J, starts, tol=ROOT_TOL, max_iter=200)
    inside = np.all((X > B[:, 0]) & (X < B[:, 1]), axis=1)
    idx = np.flatnonzero(conv & inside)
    if idx.size == 0:
        return [], True
    kept = [idx[k] for k in dedup(X[idx], key=res[idx])]
    P = X[kept]
    dets = np.linalg.det(J(P))
    sv = np.linalg.svd(J(P), compute_uv=False)
    # a zero counts as regular when the Jacobian is numerically invertible and
    # the residual tolerance pins the zero down to 1e-6 of the box size
    floor = max(RANK_TOL * jac_scale, ROOT_TOL / (1e-6 * np.min(B[:, 1] - B[:, 0])))
    regular = bool(np.all(sv[:, -1] > floor))
    order = np.lexsort(P.T[::-1])
    zeros = [(P[i], int(np.sign(dets[i]))) for i in order]
    return zeros, regular


def degree(f, box, y=None, jac=None, grid=None, seed=0) -> DegreeResult:
    """Brouwer degree of ``f`` over an axis-aligned box at target ``y``.

    Zeros are found by multi-start Newton from an interior grid and counted
    with the sign of the Jacobian determinant. If some zero is degenerate
    the target is moved by a random offset of size 1e-6 and the count
    redone, up to five times; ``regular`` is False if every attempt hits a
    degenerate zero.
    """
    B = _as_box(box)
    n = B.shape[0]
    F = _vectorize(f, n)
    if jac is None:
        J = lambda X: fd_jacobian(F, X)
    else:
        J = lambda X: np.asarray(jac(np.asarray(X, dtype=float)), dtype=float).reshape(
            np.shape(X)[:-1] + (n, n))
    y0 = np.zeros(n) if y is None else np.atleast_1d(np.asarray(y, dtype=float))
    if y0.shape != (n,):
        raise InputError("target has the wrong dimension")
    grid = _default_grid(n) if grid is None else int(grid)

    bpts = _boundary_points(B, max(grid, 3) if n == 1 else min(grid, 60))
    bdist = np.linalg.norm(F(bpts) - y0, axis=1)
    if np.nanmin(bdist) < BOUNDARY_TOL:
        raise BoundaryZero(f"f - y nearly vanishes on the boundary (min {np.nanmin(bdist):.3g})")

    axes = [np.linspace(lo, hi, min(grid, 9)) for lo, hi in B]
    sample = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    jac_scale = float(np.nanmax(np.linalg.norm(J(sample), ord=2, axis=(1, 2))))
    if not jac_scale > 0:
        jac_scale = 1.0

    rng = np.random.default_rng(seed)
    target = y0
    zeros, regular = _zeros(F, J, B, target, grid, jac_scale)
    tries = 0
    while not regular and tries < SARD_RETRIES:
        d = rng.standard_normal(n)
        target = y0 + SARD_OFFSET * d / np.linalg.norm(d)
        zeros, regular = _zeros(F, J, B, target, grid, jac_scale)
        tries += 1
    return DegreeResult(int(sum(s for _, s in zeros)), zeros, regular, target)


def multiplicity(f, x0, radius=0.1, jac=None, grid=None, seed=0) -> int:
    """Local degree of ``f`` at an isolated zero ``x0``, over the cube of half-width ``radius``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    B = np.stack([x0 - radius, x0 + radius], axis=1)
    F = _vectorize(f, n)
    if np.linalg.norm(F(x0)) > 1e-8:
        raise InputError("x0 is not a zero of f")
    grid = _default_grid(n) if grid is None else int(grid)
    J = (lambda X: fd_jacobian(F, X)) if jac is None else jac
    zeros, _ = _zeros(F, J, B, np.zeros(n), grid, 1.0)
    far = [p for p, _ in zeros if np.linalg.norm(p - x0) > 1e-2 * radius]
    if far:
        raise NotIsolated(f"another zero at {far[0]} within radius {radius}")
    res = degree(f, B, np.zeros(n), jac=jac, grid=grid, seed=seed)
    if not res.regular:
        raise Irregular("no regular target found near 0")
    return res.value


@dataclass(frozen=True)
class BifurcationBracket:
    lo: float
    hi: float

    @property
    def width(self):
        return self.hi - self.lo

    def __contains__(self, t):
        return self.lo <= t <= self.hi


def detect_bifurcation(h, t_range, n=1, grid=201, jac_u=None):
    """Brackets of width <= 1e-8 in which ``det D_u h(t, 0)`` changes sign.

    ``h(t, u)`` must vanish on the trivial branch ``u = 0``. Each sign
    change forces a bifurcation point from that branch inside the bracket;
    nothing is claimed where the sign is constant.
    """
    t0, t1 = map(float, t_range)
    if not t0 < t1:
        raise InputError("t_range must be increasing")
    zero = np.zeros(n)
    ts = np.linspace(t0, t1, int(grid))
    for t in ts[:: max(1, len(ts) // 20)]:
        if np.max(np.abs(np.asarray(h(t, zero), dtype=float))) > 1e-12:
            raise InputError(f"h(t, 0) != 0 at t={t}")

    if jac_u is None:
        def D(t):
            return fd_jacobian5(lambda U: h(t, U), zero).reshape(n, n)
    else:
        def D(t):
            return np.asarray(jac_u(t, zero), dtype=float).reshape(n, n)

    def det(t):
        return float(np.linalg.det(D(t)))

    d = np.array([det(t) for t in ts])
    scale = float(np.max(np.abs(d))) if np.any(d) else 1.0
    ztol = 1e-12 * scale
    sgn = np.where(np.abs(d) <= ztol, 0, np.sign(d)).astype(int)
    if sgn[0] == 0 or sgn[-1] == 0:
        raise DegenerateEndpoints("det D_u h(t, 0) vanishes at an end of t_range")

    def s(t):
        v = det(t)
        return 0 if abs(v) <= ztol else int(np.sign(v))

    brackets = []
    nz = np.flatnonzero(sgn)
    for a, b in zip(nz[:-1], nz[1:]):
        if sgn[a] == sgn[b]:
            continue
        lo, hi, slo = ts[a], ts[b], sgn[a]
        while hi - lo > BRACKET_WIDTH:
            mid = 0.5 * (lo + hi)
            sm = s(mid)
            if sm == 0:
                half = 0.25 * BRACKET_WIDTH
                lo, hi = max(lo, mid - half), min(hi, mid + half)
                break
            if sm == slo:
                lo = mid
            else:
                hi = mid
        brackets.append(BifurcationBracket(float(lo), float(hi)))
    return brackets


def trivial_branch_family(f, p_star, v):
    """``g(t, u) = f(p* + t v + u) - f(p* + t v)``, which vanishes on ``u = 0``."""
    p_star = np.atleast_1d(np.asarray(p_star, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))

    def g(t, u):
        base = p_star + t * v
        u = np.asarray(u, dtype=float)
        return np.asarray(f(base + u)) - np.asarray(f(np.broadcast_to(base, u.shape)))

    return g


def degree_of_natural_projection(e, box=None, grid=None) -> int:
    """Degree of the natural projection at the economy ``e``.

    Counts the fibre with the orientation ``sgn det(-D_p zbar)``, under
    which a gross-substitute equilibrium counts +1.
    """
    from .manifold import enumerate_fiber

    fib = enumerate_fiber(e, box=box, grid=grid)
    if not fib.equilibria:
        raise CriticalEconomy("no equilibrium found in the search box")
    total = 0
    for eq, rep in zip(fib.equilibria, fib.reports):
        if rep.kernel_dim > 0:
            raise CriticalEconomy(f"critical equilibrium at p={eq.p}")
        total += int(np.sign(np.linalg.det(-rep.jacobian)))
    return total
