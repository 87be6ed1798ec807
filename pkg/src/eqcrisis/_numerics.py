"""Finite differences and a batched damped Newton solver.

Maps handled here follow one convention: ``f(X)`` accepts an array whose
last axis holds the coordinates and broadcasts over the leading axes.
Invalid evaluation points are signalled by NaN rows, never by exceptions.
"""
import numpy as np

EPS = np.finfo(float).eps
H_FIRST = EPS ** (1.0 / 3.0)
H_SECOND = EPS ** (1.0 / 4.0)


def fd_jacobian(f, X, h=None):
    """Central-difference Jacobian, shape ``X.shape[:-1] + (m, n)``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    cols = []
    for j in range(n):
        step = (H_FIRST if h is None else h) * (1.0 + np.abs(X[..., j]))
        E = np.zeros_like(X)
        E[..., j] = step
        df = (np.asarray(f(X + E)) - np.asarray(f(X - E))) / (2.0 * step[..., None])
        cols.append(df)
    return np.stack(cols, axis=-1)


def newton_batch(f, jac, X0, tol=1e-10, max_iter=100, lower=None, upper=None,
                 damping=1e-8, extra_iter=2, bound=1e8):
    """Damped Newton from many starting points at once.

    Each step solves ``(J^T J + mu^2 I) dx = J^T F`` with ``mu = damping*|J|``,
    which is the plain Newton step for well-conditioned ``J`` and stays
    finite near singular ones. Steps leaving the open box (lower, upper) are
    halved up to 30 times.

    Returns ``(X, converged, residual)``; ``residual`` is the max-norm of
    ``f`` at the returned points (inf where evaluation failed).
    """
    with np.errstate(all="ignore"):
        return _newton_batch(f, jac, X0, tol, max_iter, lower, upper, damping,
                             extra_iter, bound)


def _newton_batch(f, jac, X0, tol, max_iter, lower, upper, damping, extra_iter, bound):
    X = np.array(X0, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    N, n = X.shape
    active = np.ones(N, dtype=bool)
    polish = np.zeros(N, dtype=int)

    for _ in range(max_iter + extra_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Xa = X[idx]
        F = np.asarray(f(Xa), dtype=float).reshape(idx.size, -1)
        bad = ~np.all(np.isfinite(F), axis=1)
        res = np.where(bad, np.inf, np.max(np.abs(np.where(bad[:, None], 0.0, F)), axis=1))
        if np.any(bad):
            active[idx[bad]] = False
        done = (res <= tol) & ~bad
        if np.any(done):
            polish[idx[done]] += 1
            finished = done & (polish[idx] > extra_iter)
            active[idx[finished]] = False
        keep = active[idx]
        if not np.any(keep):
            continue
        idx, Xa, F = idx[keep], Xa[keep], F[keep]
        J = np.asarray(jac(Xa), dtype=float).reshape(idx.size, F.shape[1], n)
        finite = np.all(np.isfinite(J), axis=(1, 2))
        norm = np.sqrt(np.sum(J * J, axis=(1, 2)))
        dead = ~finite | (norm == 0.0)
        if np.any(dead):
            active[idx[dead]] = False
            idx, Xa, F, J, norm = idx[~dead], Xa[~dead], F[~dead], J[~dead], norm[~dead]
            if idx.size == 0:
                continue
        JT = np.transpose(J, (0, 2, 1))
        mu2 = (damping * norm) ** 2
        A = JT @ J + mu2[:, None, None] * np.eye(n)
        rhs = (JT @ F[:, :, None])[:, :, 0]
        dx = np.linalg.solve(A, rhs[:, :, None])[:, :, 0]
        Xn = Xa - dx
        for _half in range(30):
            out = np.zeros(idx.size, dtype=bool)
            if lower is not None:
                out |= np.any(Xn <= lower, axis=1)
            if upper is not None:
                out |= np.any(Xn >= upper, axis=1)
            if not np.any(out):
                break
            dx[out] *= 0.5
            Xn[out] = Xa[out] - dx[out]
        else:
            active[idx[out]] = False
        escaped = np.any(np.abs(Xn) > bound, axis=1)
        active[idx[escaped]] = False
        X[idx] = Xn
    # final verdict from a fresh evaluation at the returned points
    F = np.asarray(f(X), dtype=float).reshape(N, -1)
    ok = np.all(np.isfinite(F), axis=1)
    residual = np.where(ok, np.max(np.abs(np.where(ok[:, None], F, 0.0)), axis=1), np.inf)
    converged = residual <= tol
    return X, converged, residual


def dedup(points, rel_tol=1e-6, key=None):
    """Greedy clustering of rows of ``points``; returns kept row indices.

    Two rows are merged when ``|a - b| <= rel_tol * max(1, |a|, |b|)``.
    Earlier rows (or rows with smaller ``key``) win.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    order = np.arange(len(P)) if key is None else np.argsort(key, kind="stable")
    P = P[order]
    norms = np.linalg.norm(P, axis=1)
    covered = np.zeros(len(P), dtype=bool)
    kept = []
    # the first uncovered row is always kept; everything near it is then covered
    while not covered.all():
        i = int(np.argmin(covered))
        kept.append(int(order[i]))
        dist = np.linalg.norm(P - P[i], axis=1)
        covered |= dist <= rel_tol * np.maximum(np.maximum(1.0, norms), norms[i])
    return kept


def fd_jacobian5(f, X, h=None):
    """Five-point central-difference Jacobian, exact for cubic polynomials."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    cols = []
    for j in range(n):
        step = (EPS ** 0.2 if h is None else h) * (1.0 + np.abs(X[..., j]))
        E = np.zeros_like(X)
        E[..., j] = step

        def g(k):
            return np.asarray(f(X + k * E))

        df = (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * step[..., None])
        cols.append(df)
    return np.stack(cols, axis=-1)
