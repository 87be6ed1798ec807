"""Kernels, cokernels and the intrinsic second derivative.

At a critical point ``p`` of a map ``f`` with differential ``J`` the
intrinsic second derivative in a kernel direction ``v`` is the linear map
``u -> q D^2 f(p)[v, u]`` from ``Ker J`` to ``Coker J``, ``q`` being the
projection onto the cokernel. Kernels and cokernels are represented by
orthonormal bases taken from the SVD of ``J``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ._numerics import EPS, H_FIRST, fd_jacobian
from .errors import PreconditionError, RegularValueViolation, StepUnderflow

RANK_TOL = 1e-7
GAP_MIN = 1e3
CERTIFY_REL = 1e-6
N_RANDOM_DIRECTIONS = 8


class Verdict(str, enum.Enum):
    UNAVOIDABLE = "UnavoidableCrisis"
    FAILS = "CriterionFails"
    REGULAR = "Regular"


@dataclass(frozen=True, eq=False)
class SingularityReport:
    jacobian: np.ndarray
    singular_values: np.ndarray
    rank: int
    kernel_basis: np.ndarray
    cokernel_basis: np.ndarray
    rank_gap: float
    scale: float

    @property
    def kernel_dim(self):
        return self.kernel_basis.shape[1]

    @property
    def cokernel_dim(self):
        return self.cokernel_basis.shape[1]

    @property
    def indeterminate(self):
        return self.rank_gap < GAP_MIN

    @property
    def det_sign(self):
        """Sign of ``det J``; 0 when numerically singular or non-square."""
        J = self.jacobian
        if J.shape[0] != J.shape[1] or self.kernel_dim:
            return 0
        return int(np.sign(np.linalg.det(J)))


def singular_report(J, rank_tol=RANK_TOL, scale=None) -> SingularityReport:
    """SVD-based rank, kernel and cokernel of ``J``.

    Singular values count towards the rank when they exceed
    ``rank_tol * max(sigma_max, scale)``. ``scale`` supplies an outside
    reference size, which matters for 1x1 Jacobians where ``sigma_max``
    alone cannot tell small from zero.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if not np.all(np.isfinite(J)):
        raise ValueError("Jacobian has non-finite entries")
    U, s, Vt = np.linalg.svd(J, full_matrices=True)
    ref = max(s[0] if s.size else 0.0, 0.0 if scale is None else float(scale))
    rank = int(np.sum(s > rank_tol * ref)) if ref > 0 else 0
    kernel = Vt[rank:].T.copy()
    cokernel = U[:, rank:].copy()
    top = s[rank - 1] if rank > 0 else ref
    bottom = s[rank] if rank < s.size else 0.0
    if bottom == 0.0 or top == 0.0:
        gap = np.inf
    else:
        gap = top / bottom
    return SingularityReport(J, s, rank, kernel, cokernel, float(gap), float(ref))


def _step(p, h):
    h0 = H_FIRST * (1.0 + np.linalg.norm(p)) if h is None else float(h)
    if not np.isfinite(h0) or h0 < 1e2 * EPS:
        raise StepUnderflow(f"difference step {h0!r} is below 1e2 * machine epsilon")
    # power-of-two step so that p +/- h is exact for moderate |p|
    return 2.0 ** np.round(np.log2(h0))


def hessian_tensor(f, p, jac=None, hessian=None, h=None):
    """Second derivative ``H[i, j, k] = d^2 f_i / dp_j dp_k`` and a noise bound.

    Uses ``hessian`` when given, otherwise central differences of ``jac``
    and, failing that, second differences of ``f``. The noise bound is an
    estimate of the rounding error in ``H`` and scales linearly with ``f``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    n = p.size
    if hessian is not None:
        return np.asarray(hessian(p), dtype=float).reshape(-1, n, n), 0.0
    hh = _step(p, h)
    E = np.eye(n) * hh
    if jac is not None:
        Jp = np.stack([np.asarray(jac(p + E[j]), dtype=float).reshape(-1, n) for j in range(n)])
        Jm = np.stack([np.asarray(jac(p - E[j]), dtype=float).reshape(-1, n) for j in range(n)])
        H = np.transpose((Jp - Jm) / (2.0 * hh), (1, 2, 0))
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        noise = 10.0 * EPS * max(np.abs(Jp).max(), np.abs(Jm).max()) / hh
        return H, noise
    f0 = np.asarray(f(p), dtype=float).ravel()
    H = np.empty((f0.size, n, n))
    big = np.abs(f0).max()
    for j in range(n):
        fp, fm = np.ravel(f(p + E[j])), np.ravel(f(p - E[j]))
        H[:, j, j] = (fp - 2.0 * f0 + fm) / hh**2
        big = max(big, np.abs(fp).max(), np.abs(fm).max())
        for k in range(j + 1, n):
            a = np.ravel(f(p + E[j] + E[k])) - np.ravel(f(p + E[j] - E[k]))
            b = np.ravel(f(p - E[j] + E[k])) - np.ravel(f(p - E[j] - E[k]))
            H[:, j, k] = H[:, k, j] = (a - b) / (4.0 * hh**2)
    return H, 10.0 * EPS * big / hh**2


def _reduced_map(H, report, v):
    K, Q = report.kernel_basis, report.cokernel_basis
    a = K @ np.asarray(v, dtype=float)
    return Q.T @ np.einsum("ijk,j,kl->il", H, a, K)


def intrinsic_second_derivative(f, p, report: SingularityReport, v, jac=None,
                                hessian=None, h=None):
    """Matrix of ``u -> q D^2 f(p)[v, u]`` in the report's kernel/cokernel bases.

    ``v`` and ``u`` are given in kernel coordinates (coefficients on
    ``report.kernel_basis``); the result has shape (cokernel_dim, kernel_dim).
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (report.kernel_dim,):
        raise PreconditionError("v must be given in kernel coordinates")
    H, _ = hessian_tensor(f, p, jac=jac, hessian=hessian, h=h)
    return _reduced_map(H, report, v)


@dataclass(frozen=True, eq=False)
class CrisisCertificate:
    kernel_dim: int
    odd: bool
    direction_v: np.ndarray
    reduced_hessian_map: np.ndarray
    min_singular_value: float
    verdict: Verdict
    rank_gap: float
    certify_tol: float
    indeterminate: bool = False
    report: SingularityReport | None = field(default=None, repr=False)

    def to_dict(self):
        gap = self.rank_gap if np.isfinite(self.rank_gap) else None
        return {
            "kernel_dim": int(self.kernel_dim),
            "odd": bool(self.odd),
            "v": [float(x) for x in self.direction_v],
            "min_sv": float(self.min_singular_value) if np.isfinite(self.min_singular_value) else None,
            "verdict": self.verdict.value,
            "rank_gap": gap,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _candidate_directions(k, rng):
    dirs = list(np.eye(k))
    if k > 1:
        for _ in range(N_RANDOM_DIRECTIONS):
            g = rng.standard_normal(k)
            dirs.append(g / np.linalg.norm(g))
    return dirs


def certify_map(f, p, jac=None, hessian=None, scale=None, v=None, rank_tol=RANK_TOL,
                certify_rel=CERTIFY_REL, seed=0, h=None) -> CrisisCertificate:
    """Odd-kernel / intrinsic-isomorphism test at a point of a square map.

    The certificate is positive when the kernel of ``Df(p)`` has odd
    dimension and some kernel direction ``v`` makes the intrinsic second
    derivative an isomorphism, judged by its smallest singular value
    against ``certify_rel * |D^2 f(p)| + rounding noise``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    J = np.asarray(jac(p), dtype=float) if jac is not None else fd_jacobian(f, p)
    rep = singular_report(J.reshape(-1, p.size), rank_tol=rank_tol, scale=scale)
    k = rep.kernel_dim
    if k == 0:
        return CrisisCertificate(0, False, np.zeros(0), np.zeros((0, 0)), np.inf,
                                 Verdict.REGULAR, rep.rank_gap, 0.0, False, rep)
    H, noise = hessian_tensor(f, p, jac=jac, hessian=hessian, h=h)
    tol = certify_rel * float(np.linalg.norm(H)) + noise
    odd = k % 2 == 1
    if v is not None:
        candidates = [np.atleast_1d(np.asarray(v, dtype=float))]
    else:
        candidates = _candidate_directions(k, np.random.default_rng(seed))
    best = None
    for cand in candidates:
        C = _reduced_map(H, rep, cand)
        smin = float(np.linalg.svd(C, compute_uv=False).min()) if C.size else 0.0
        if C.shape[0] != C.shape[1]:
            smin = 0.0
        if best is None or smin > best[0]:
            best = (smin, cand, C)
    smin, cand, C = best
    indeterminate = rep.indeterminate
    ok = odd and smin > tol and not indeterminate
    verdict = Verdict.UNAVOIDABLE if ok else Verdict.FAILS
    return CrisisCertificate(k, odd, cand, C, smin, verdict, rep.rank_gap, tol,
                             indeterminate, rep)


def certify_crisis(eq, v=None, rank_tol=RANK_TOL, certify_rel=CERTIFY_REL, seed=0,
                   residual_tol=1e-10) -> CrisisCertificate:
    """Crisis certificate for an equilibrium, computed in reduced coordinates."""
    from .manifold import jacobian_scale

    if not eq.residual <= residual_tol:
        raise PreconditionError(f"equilibrium residual {eq.residual:.3g} exceeds {residual_tol:g}")
    mk = eq.market
    return certify_map(mk.reduced_batch, eq.p, jac=mk.jacobian_batch,
                       scale=jacobian_scale(mk, eq.p), v=v, rank_tol=rank_tol,
                       certify_rel=certify_rel, seed=seed)


def _null_and_row_space(A, rank):
    _, _, Vt = np.linalg.svd(A, full_matrices=True)
    return Vt[rank:].T, Vt[:rank].T


def verify_reduction(f, m_star, n_base, v=None, jac=None, h=None, rank_tol=RANK_TOL):
    """Check that the intrinsic second derivative of the projection
    ``M = f^{-1}(0) -> R^n_base`` agrees with that of the partial map
    ``p -> f(x*, p)``, transported by the canonical cokernel isomorphism.

    ``f`` maps ``R^{n_base + n_fib}`` to ``R^{n_fib}``; ``m_star = (x*, p*)``
    lies on ``f^{-1}(0)``. Returns the largest absolute discrepancy over the
    requested kernel direction (or over all kernel basis directions).
    """
    x0 = np.asarray(m_star, dtype=float)
    m = int(n_base)
    Df_fn = jac if jac is not None else (lambda z: fd_jacobian(f, z))
    F0 = np.atleast_1d(f(x0))
    Df = np.atleast_2d(Df_fn(x0))
    nf = Df.shape[0]
    if Df.shape[1] != m + nf:
        raise PreconditionError("f must map R^{n_base+p} to R^p")
    sv = np.linalg.svd(Df, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise RegularValueViolation("Df(m*) is not surjective; 0 is not a regular value")
    if np.abs(F0).max() > 1e-8 * (1.0 + sv[0]):
        raise PreconditionError("m* is not on f^{-1}(0)")

    xs, ps = x0[:m], x0[m:]
    Dx, Dp = Df[:, :m], Df[:, m:]
    rep_f = singular_report(Dp, rank_tol=rank_tol, scale=sv[0])
    k = rep_f.kernel_dim
    if k == 0:
        return 0.0

    def f_fib(P):
        P = np.asarray(P, dtype=float)
        return np.asarray(f(np.concatenate([xs, P])))

    def jac_fib(P):
        return np.atleast_2d(Df_fn(np.concatenate([xs, np.asarray(P, dtype=float)])))[:, m:]

    # route 1: chart of M around m*, derivative of the projected differential
    T, N = _null_and_row_space(Df, nf)

    def chart_point(s):
        c = np.zeros(nf)
        for _ in range(60):
            z = x0 + T @ s + N @ c
            r = np.atleast_1d(f(z))
            if np.abs(r).max() <= 4 * EPS * (1.0 + sv[0]) * (1.0 + np.abs(z).max()):
                break
            c = c - np.linalg.solve(np.atleast_2d(Df_fn(z)) @ N, r)
        return x0 + T @ s + N @ c

    def proj_differential(s):
        z = chart_point(s)
        D = np.atleast_2d(Df_fn(z))
        dphi = T - N @ np.linalg.solve(D @ N, D @ T)
        return dphi[:m]

    K_chart = T.T @ np.vstack([np.zeros((m, k)), rep_f.kernel_basis])
    L0 = proj_differential(np.zeros(m))
    U, s0, _ = np.linalg.svd(L0)
    Q_chart = U[:, m - k:]
    hh = _step(x0, h)

    # canonical cokernel map: [b] -> [a] with (a, -b) in the image of (Pi, Df)
    Jprime = np.empty((k, k))
    for i in range(k):
        w, *_ = np.linalg.lstsq(Df, -rep_f.cokernel_basis[:, i], rcond=None)
        Jprime[:, i] = Q_chart.T @ w[:m]

    # route 2: partial map in the fibre variables
    H_fib, _ = hessian_tensor(f_fib, ps, jac=jac_fib, h=h)
    dirs = [np.atleast_1d(np.asarray(v, dtype=float))] if v is not None else list(np.eye(k))
    worst = 0.0
    for vv in dirs:
        a = K_chart @ vv
        dl = (proj_differential(hh * a) - proj_differential(-hh * a)) / (2.0 * hh)
        C_chart = Q_chart.T @ dl @ K_chart
        C_fib = _reduced_map(H_fib, rep_f, vv)
        worst = max(worst, float(np.abs(C_chart - Jprime @ C_fib).max()))
    return worst
