"""Equilibria, fibres of the natural projection and critical points.

An equilibrium of a market is a zero of its reduced excess demand. The
fibre over a fixed economy is the finite set of its equilibrium prices;
it is enumerated by damped Newton from a uniform grid of starts.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._numerics import dedup, fd_jacobian, newton_batch
from .economy import Market, Price
from .errors import InputError, NoConvergence, SingularJacobian
from .intrinsic import RANK_TOL, SingularityReport, singular_report

SOLVE_TOL = 1e-10
DEDUP_TOL = 1e-6
DEFAULT_GRID = 200
MAX_STARTS = 40_000


def jacobian_scale(market: Market, p) -> float:
    """Largest singular value of the full differential ``[D_p zbar, D_omega zbar]``.

    This is the reference size for rank decisions on ``D_p zbar``: the full
    differential is onto everywhere on the equilibrium manifold.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    full = np.hstack([market.jacobian(p), market.jacobian_omega(p)])
    return float(np.linalg.svd(full, compute_uv=False)[0])


def _singular_flags(market: Market, P, rank_tol=RANK_TOL, tol=None, dedup_tol=DEDUP_TOL):
    """Near-singularity of ``D_p zbar`` at each row of ``P``.

    With ``tol`` given, also flag roots the residual tolerance cannot pin
    down to ``dedup_tol``: Newton stops up to ``tol / sigma_min`` away from
    a degenerate root, so starts on either side would not merge.
    """
    J = market.jacobian_batch(P)
    full = np.concatenate([J, market.jacobian_omega_batch(P)], axis=-1)
    s = np.linalg.svd(J, compute_uv=False)
    ref = np.maximum(s[..., 0], np.linalg.svd(full, compute_uv=False)[..., 0])
    flag = s[..., -1] <= rank_tol * ref
    if tol is not None:
        spread = dedup_tol * (1.0 + np.linalg.norm(P, axis=-1))
        flag |= s[..., -1] * spread <= tol
    return flag


def is_near_singular(market: Market, p, rank_tol=RANK_TOL) -> bool:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return bool(_singular_flags(market, p[None, :], rank_tol)[0])


@dataclass(frozen=True, eq=False)
class Equilibrium:
    market: Market
    p: np.ndarray
    residual: float
    singular: bool = False
    starts: int = 1

    @property
    def price(self) -> Price:
        return Price.from_free(self.p)

    @property
    def economy(self):
        return self.market


@dataclass(frozen=True, eq=False)
class Fiber:
    economy: Market
    equilibria: list
    search_box: np.ndarray
    grid_density: int
    reports: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.equilibria)

    @property
    def prices(self):
        return np.array([e.p for e in self.equilibria]).reshape(len(self.equilibria), -1)

    def to_csv(self, fh=None, header_lines=()):
        """Rows ``p_1..p_{l-1}, residual, kernel_dim, det_sign``; returns text if fh is None."""
        out = io.StringIO() if fh is None else fh
        for line in header_lines:
            out.write(f"# {line}\n")
        n = self.economy.n_free
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"p_{i + 1}" for i in range(n)] + ["residual", "kernel_dim", "det_sign"])
        for eq, rep in zip(self.equilibria, self.reports):
            w.writerow([repr(float(x)) for x in eq.p]
                       + [f"{eq.residual:.3e}", rep.kernel_dim, rep.det_sign])
        return out.getvalue() if fh is None else None


def _box_array(market, box, n):
    if box is None:
        box = market.default_box
    B = np.asarray(box, dtype=float)
    if B.shape == (2,):
        B = np.tile(B, (n, 1))
    if B.shape != (n, 2) or np.any(B[:, 0] >= B[:, 1]):
        raise InputError(f"box must be (lo, hi) or an ({n}, 2) array")
    if market.positive and np.any(B[:, 0] <= 0):
        raise InputError("price box must lie in the positive orthant")
    return B


def solve_equilibrium(market: Market, p0, tol=SOLVE_TOL, max_iter=100) -> Equilibrium:
    """Newton refinement of an equilibrium price from ``p0``."""
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    if p0.shape != (market.n_free,):
        raise InputError("p0 has the wrong dimension")
    if market.positive and np.any(p0 <= 0):
        raise InputError("p0 must be strictly positive")
    lower = 0.0 if market.positive else None
    X, conv, res = newton_batch(market.reduced_batch, market.jacobian_batch, p0[None, :],
                                tol=tol, max_iter=max_iter, lower=lower)
    p = X[0]
    if not conv[0]:
        try:
            J = market.jacobian(p)
        except Exception:
            J = None
        if J is not None and np.all(J == 0):
            raise SingularJacobian(f"zero Jacobian at p={p}")
        raise NoConvergence(f"Newton from p0={p0} stalled at p={p} (residual {res[0]:.3g})")
    return Equilibrium(market, p, float(res[0]), is_near_singular(market, p))


def _polish_degenerate(market, p, tol):
    """Move a near-singular root onto the critical set by Gauss-Newton on
    ``(zbar, det J / s^n)``; returns the polished point or None."""
    n = p.size
    s = max(jacobian_scale(market, p), 1e-300)

    def G(q):
        return np.append(market.reduced(q), np.linalg.det(market.jacobian(q)) / s**n)

    q = p.copy()
    try:
        for _ in range(30):
            g = G(q)
            A = fd_jacobian(G, q)
            dq, *_ = np.linalg.lstsq(A, -g, rcond=None)
            q = q + dq
            if np.linalg.norm(dq) <= 1e-15 * (1.0 + np.linalg.norm(q)):
                break
        r = np.abs(market.reduced(q)).max()
    except Exception:
        return None
    if r <= tol and np.linalg.norm(q - p) <= 1e-2 * (1.0 + np.linalg.norm(p)):
        return q, r
    return None


def enumerate_fiber(market: Market, box=None, grid=None, tol=SOLVE_TOL,
                    dedup_tol=DEDUP_TOL) -> Fiber:
    """All equilibrium prices of ``market`` found from a uniform grid of starts.

    Starts converging to the same price (relative distance below
    ``dedup_tol``) are merged; near-singular roots are first polished onto
    the critical set so that the two starts straddling a degenerate root
    collapse to one point. The result is deterministic and sorted.
    """
    n = market.n_free
    B = _box_array(market, box, n)
    if grid is None:
        grid = DEFAULT_GRID if n == 1 else max(3, int(MAX_STARTS ** (1.0 / n)))
    axes = [np.linspace(lo, hi, grid) for lo, hi in B]
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    lower = 0.0 if market.positive else None
    X, conv, res = newton_batch(market.reduced_batch, market.jacobian_batch, starts,
                                tol=tol, lower=lower)
    inside = np.all((X >= B[:, 0]) & (X <= B[:, 1]), axis=1)
    keep = np.flatnonzero(conv & inside)
    pts, resid, sing = [], [], []
    suspect = _singular_flags(market, X[keep], tol=tol, dedup_tol=dedup_tol) if keep.size else []
    for i, sus in zip(keep, suspect):
        p = X[i]
        r = res[i]
        if sus:
            polished = _polish_degenerate(market, p, tol)
            if polished is not None:
                p, r = polished
        flag = bool(sus) and is_near_singular(market, p)
        pts.append(p)
        resid.append(r)
        sing.append(flag)
    equilibria, reports = [], []
    if pts:
        P = np.array(pts)
        kept = dedup(P, dedup_tol, key=np.array(resid))
        norms = np.linalg.norm(P, axis=1)
        for j in kept:
            dist = np.linalg.norm(P - P[j], axis=1)
            cluster = int(np.sum(dist <= dedup_tol * np.maximum(np.maximum(1.0, norms), norms[j])))
            eq = Equilibrium(market, P[j], float(resid[j]), sing[j], cluster)
            equilibria.append(eq)
        equilibria.sort(key=lambda e: tuple(e.p))
        reports = [projection_differential(e) for e in equilibria]
    return Fiber(market, equilibria, B, grid, reports)


def projection_differential(eq: Equilibrium, rank_tol=RANK_TOL) -> SingularityReport:
    """Kernel and cokernel of the natural projection at ``eq``.

    By the identification ``v -> (v, 0)`` these are the kernel and cokernel
    of the price Jacobian of the reduced excess demand.
    """
    if not eq.residual <= 1e-8:
        raise InputError("projection_differential needs a refined equilibrium")
    return singular_report(eq.market.jacobian(eq.p), rank_tol=rank_tol,
                           scale=jacobian_scale(eq.market, eq.p))


def most_sensitive_coordinate(market: Market, p) -> int:
    """Endowment coordinate whose change moves ``zbar`` the most at ``p``."""
    Jw = market.jacobian_omega(p)
    return int(np.argmax(np.linalg.norm(Jw, axis=0)))


def locate_critical_equilibrium(market: Market, p0, coordinate=None, tol=1e-13,
                                max_iter=50) -> Equilibrium:
    """Find a critical equilibrium near ``p0`` by moving one endowment coordinate.

    Solves ``zbar(p, omega + s e_c) = 0`` together with
    ``det D_p zbar(p, omega + s e_c) = 0`` for ``(p, s)``. Returns the
    equilibrium of the shifted market.
    """
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    n = market.n_free
    c = most_sensitive_coordinate(market, p0) if coordinate is None else int(coordinate)
    omega0 = market.omega
    s_ref = max(jacobian_scale(market, p0), 1e-300)

    def shifted(s):
        om = omega0.copy()
        om[c] += s
        return market.with_omega(om)

    def G(y):
        mk = shifted(y[n])
        p = y[:n]
        return np.append(mk.reduced(p), np.linalg.det(mk.jacobian(p)) / s_ref**n)

    y = np.append(p0, 0.0)
    for _ in range(max_iter):
        g = G(y)
        A = fd_jacobian(G, y)
        dy = np.linalg.solve(A, -g)
        y = y + dy
        if not np.all(np.isfinite(y)) or (market.positive and np.any(y[:n] <= 0)):
            raise NoConvergence("critical equilibrium search left the price domain")
        if np.linalg.norm(dy) <= 1e-15 * (1.0 + np.linalg.norm(y)):
            break
    else:
        if np.abs(G(y)).max() > tol:
            raise NoConvergence("critical equilibrium search did not converge")
    mk = shifted(y[n])
    p = y[:n]
    res = float(np.abs(mk.reduced(p)).max())
    if res > SOLVE_TOL:
        raise NoConvergence(f"critical equilibrium residual {res:.3g}")
    return Equilibrium(mk, p, res, is_near_singular(mk, p))
