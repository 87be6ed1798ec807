"""Lifting economy paths to equilibrium paths, and the restore-prices experiment.

An economy path is piecewise linear in endowment space. Its lift from a
regular equilibrium is followed by predictor-corrector continuation until
the path ends or the lift runs into a critical equilibrium.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ._numerics import fd_jacobian
from .economy import Market, Price
from .errors import (CertificationMissing, InputError, NoConvergence, PreconditionError,
                     StepCollapse)
from .intrinsic import RANK_TOL, Verdict, certify_crisis
from .manifold import (Equilibrium, enumerate_fiber, is_near_singular, jacobian_scale,
                       solve_equilibrium)

CORRECTOR_TOL = 1e-11
MIN_STEP = 1e-10


@dataclass(frozen=True, eq=False)
class EconomyPath:
    """``omega(t)`` for ``t`` in [0, 1], linear between ``start``, any ``via`` points and ``end``."""

    start: Market
    end: Market
    samples: int = 100
    via: tuple = ()

    def __post_init__(self):
        if type(self.start) is not type(self.end) or self.start.omega.shape != self.end.omega.shape:
            raise InputError("path endpoints must share the economy structure")
        if self.samples < 1:
            raise InputError("samples must be positive")
        knots = self.knots
        if self.start.positive and np.any(knots <= 0):
            raise InputError("endowments along the path must stay positive")
        if hasattr(self.start, "utilities") and self.start.utilities != self.end.utilities:
            raise InputError("path endpoints must share utilities")

    @property
    def knots(self):
        pts = [self.start.omega] + [np.asarray(w, dtype=float) for w in self.via] + [self.end.omega]
        return np.array(pts)

    @property
    def breakpoints(self):
        K = self.knots
        seg = np.linalg.norm(np.diff(K, axis=0), axis=1)
        total = seg.sum()
        if total == 0:
            return np.linspace(0.0, 1.0, len(K))
        return np.concatenate([[0.0], np.cumsum(seg) / total])

    def _segment(self, t):
        b = self.breakpoints
        i = int(np.clip(np.searchsorted(b, t, side="right") - 1, 0, len(b) - 2))
        return i, b[i], b[i + 1]

    def omega(self, t):
        K = self.knots
        i, a, b = self._segment(t)
        s = 0.0 if b == a else (t - a) / (b - a)
        return K[i] + s * (K[i + 1] - K[i])

    def velocity(self, t):
        K = self.knots
        i, a, b = self._segment(t)
        return np.zeros_like(K[0]) if b == a else (K[i + 1] - K[i]) / (b - a)

    def next_break(self, t):
        b = self.breakpoints
        later = b[b > t + 1e-15]
        return float(later[0]) if later.size else 1.0

    def market(self, t):
        return self.start.with_omega(self.omega(t))


@dataclass
class LiftResult:
    t: np.ndarray
    prices: np.ndarray
    sigma_min: np.ndarray
    completed: bool
    crisis_hit: float | None = None
    endpoint_distance: float | None = None
    flags: list = field(default_factory=list)

    @property
    def end_price(self):
        return self.prices[-1]

    def to_csv(self, fh=None, header_lines=()):
        """Rows ``t, p_1..p_{l-1}, sigma_min, flag``; returns text if fh is None."""
        out = io.StringIO() if fh is None else fh
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        n = self.prices.shape[1]
        w.writerow(["t"] + [f"p_{i + 1}" for i in range(n)] + ["sigma_min", "flag"])
        for t, p, s, fl in zip(self.t, self.prices, self.sigma_min, self.flags):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in p] + [f"{s:.6e}", fl])
        return out.getvalue() if fh is None else None


def _free(p):
    if isinstance(p, Price):
        return p.free
    return np.atleast_1d(np.asarray(p, dtype=float))


def _sigma_min(market, p):
    return float(np.linalg.svd(market.jacobian(p), compute_uv=False)[-1])


def _correct(market, p, tol=CORRECTOR_TOL, max_iter=8):
    """Plain Newton at a fixed economy; returns the point or None."""
    q = p.copy()
    for _ in range(max_iter):
        try:
            F = market.reduced(q)
            if np.max(np.abs(F)) <= tol:
                return q
            q = q - np.linalg.solve(market.jacobian(q), F)
        except Exception:
            return None
        if market.positive and np.any(q <= 0):
            return None
    try:
        return q if np.max(np.abs(market.reduced(q))) <= tol else None
    except Exception:
        return None


def _locate_fold(path, p, t, t_hi, scale, rank_tol):
    """Solve ``zbar = 0, det D_p zbar = 0`` for ``(p, t)`` starting at ``(p, t)``."""
    n = p.size

    def G(y):
        mk = path.market(float(np.clip(y[n], 0.0, 1.0)))
        q = y[:n]
        return np.append(mk.reduced(q), np.linalg.det(mk.jacobian(q)) / scale**n)

    y = np.append(p, t)
    try:
        for _ in range(40):
            dy = np.linalg.lstsq(fd_jacobian(G, y), -G(y), rcond=None)[0]
            y = y + dy
            if np.linalg.norm(dy) <= 1e-14 * (1.0 + np.linalg.norm(y)):
                break
        tf = float(y[n])
        if not (t - 1e-9 <= tf <= t_hi + 1e-9):
            return None
        mk = path.market(tf)
        if np.max(np.abs(mk.reduced(y[:n]))) > 1e-9:
            return None
        if _sigma_min(mk, y[:n]) > rank_tol * max(jacobian_scale(mk, y[:n]), 1e-300):
            return None
    except Exception:
        return None
    return y[:n], tf


def lift_path(path: EconomyPath, p_start, p_target=None, max_dp=None,
              rank_tol=RANK_TOL) -> LiftResult:
    """Continue the equilibrium ``p_start`` of ``path.start`` along the path.

    Predictor is the tangent from implicit differentiation of ``zbar = 0``,
    corrector is Newton at fixed ``t``. Steps are halved on failure. When the
    steps shrink near a critical equilibrium the fold is located exactly and
    reported as ``crisis_hit``; a collapse with no critical point nearby
    raises StepCollapse.
    """
    p = _free(p_start)
    m0 = path.market(0.0)
    try:
        eq0 = solve_equilibrium(m0, p)
    except NoConvergence as exc:
        raise PreconditionError("p_start is not an equilibrium of the path start") from exc
    if np.linalg.norm(eq0.p - p) > 1e-6 * (1.0 + np.linalg.norm(p)) or eq0.singular:
        raise PreconditionError("p_start must be a regular equilibrium of the path start")
    p = eq0.p
    if max_dp is None:
        max_dp = 0.05 * (1.0 + np.linalg.norm(p))
    dt_max = 1.0 / path.samples
    dt = dt_max
    t = 0.0
    scale = jacobian_scale(m0, p)
    ts, ps, sig, flags = [0.0], [p.copy()], [_sigma_min(m0, p)], ["ok"]
    det_sign = np.sign(np.linalg.det(m0.jacobian(p)))
    crisis = None

    while t < 1.0:
        mk = path.market(t)
        t_next = min(t + dt, path.next_break(t), 1.0)
        h = t_next - t
        J = mk.jacobian(p)
        dp = -np.linalg.solve(J, mk.jacobian_omega(p) @ path.velocity(t))
        pred = p + h * dp
        mk_next = path.market(t_next)
        q = None
        if not (mk.positive and np.any(pred <= 0)):
            q = _correct(mk_next, pred)
        ok = q is not None
        if ok:
            jump = np.linalg.norm(q - p)
            drift = np.linalg.norm(q - pred)
            ok = jump <= max_dp and drift <= max(0.25 * np.linalg.norm(pred - p), 1e-9)
        if ok and np.sign(np.linalg.det(mk_next.jacobian(q))) != det_sign:
            found = _locate_fold(path, p, t, t_next, scale, rank_tol)
            if found is not None:
                crisis = found
                break
            ok = False
        if ok:
            t, p = t_next, q
            ts.append(t)
            ps.append(p.copy())
            sig.append(_sigma_min(mk_next, p))
            flags.append("ok")
            dt = min(1.5 * dt, dt_max)
            continue
        dt = 0.5 * h
        if dt < 1e-3 * dt_max:
            found = _locate_fold(path, p, t, t + 4.0 * h, scale, rank_tol)
            if found is not None:
                crisis = found
                break
        if dt < MIN_STEP:
            partial = LiftResult(np.array(ts), np.array(ps), np.array(sig), False, flags=flags)
            raise StepCollapse(f"step collapsed at t={t:.12g}", partial=partial)

    if crisis is not None:
        pc, tc = crisis
        ts.append(tc)
        ps.append(pc)
        sig.append(_sigma_min(path.market(tc), pc))
        flags.append("crisis")
        return LiftResult(np.array(ts), np.array(ps), np.array(sig), False, crisis_hit=tc,
                          flags=flags)
    P = np.array(ps)
    dist = None if p_target is None else float(np.linalg.norm(P[-1] - _free(p_target)))
    return LiftResult(np.array(ts), P, np.array(sig), True, endpoint_distance=dist, flags=flags)


def _realize(market: Market, p, coordinates):
    """Endowment change on ``coordinates`` making ``p`` an equilibrium (min-norm Gauss-Newton)."""
    omega = market.omega.copy()
    c = np.asarray(coordinates)
    for _ in range(50):
        mk = market.with_omega(omega)
        F = mk.reduced(p)
        if np.max(np.abs(F)) <= 1e-13:
            break
        A = mk.jacobian_omega(p)[:, c]
        step = np.linalg.lstsq(A, -F, rcond=None)[0]
        omega[c] += step
        if np.linalg.norm(step) <= 1e-16 * (1.0 + np.linalg.norm(omega)):
            break
    mk = market.with_omega(omega)
    res = float(np.max(np.abs(mk.reduced(p))))
    if res > 1e-10:
        raise NoConvergence(f"could not realize p={p} as an equilibrium (residual {res:.3g})")
    return Equilibrium(mk, p, res, is_near_singular(mk, p))


@dataclass
class RestoreReport:
    crisis: Equilibrium
    direction: np.ndarray
    delta: float
    e_minus: Equilibrium
    e_plus: Equilibrium
    signs: tuple  # det signs at (e_plus, e_minus)
    d: float
    avoiding: LiftResult
    crossing: LiftResult
    crossing_expected: float
    conclusive: bool

    @property
    def alternative_holds(self):
        """Either the lift meets a crisis, or it ends at least ``d`` away from ``p_+``."""
        a = self.avoiding
        return a.crisis_hit is not None or (a.endpoint_distance is not None
                                            and a.endpoint_distance >= (1 - 1e-9) * self.d)

    def summary(self):
        return {
            "p_crisis": self.crisis.p.tolist(),
            "p_minus": self.e_minus.p.tolist(),
            "p_plus": self.e_plus.p.tolist(),
            "signs_plus_minus": list(self.signs),
            "d": self.d if np.isfinite(self.d) else None,
            "avoiding_completed": self.avoiding.completed,
            "avoiding_endpoint_distance": self.avoiding.endpoint_distance,
            "crossing_crisis_hit": self.crossing.crisis_hit,
            "crossing_expected": self.crossing_expected,
            "conclusive": self.conclusive,
        }


def restore_prices_experiment(e_star: Equilibrium, radius=1e-2, coordinate=None,
                              samples=100) -> RestoreReport:
    """Split a certified crisis into two regular equilibria and try to move between them.

    ``e_-`` and ``e_+`` sit at ``p* -/+ delta v`` (``delta = radius/2``) on
    economies obtained by moving endowment ``coordinate`` (default: the
    most sensitive one; for more than two goods the last agent's row is
    moved instead). The lift of ``e_-`` to the economy of ``e_+`` along the
    straight path cannot reach ``p_+``; a path pushed through the crisis
    economy meets the crisis.
    """
    cert = certify_crisis(e_star)
    if cert.verdict != Verdict.UNAVOIDABLE:
        raise CertificationMissing(f"crisis not certified (verdict {cert.verdict.value})")
    market = e_star.market
    n = market.n_free
    v = np.asarray(cert.report.kernel_basis @ cert.direction_v, dtype=float)
    v = v * np.sign(v[np.argmax(np.abs(v))])
    if coordinate is None:
        if n == 1:
            coordinate = int(np.argmax(np.abs(market.jacobian_omega(e_star.p)[0])))
        else:
            coords = np.arange(market.omega.size - n - 1, market.omega.size)
    coords = np.atleast_1d(coordinate) if coordinate is not None else coords
    delta = 0.5 * radius
    e_m = _realize(market, e_star.p - delta * v, coords)
    e_p = _realize(market, e_star.p + delta * v, coords)
    signs = tuple(int(np.sign(np.linalg.det(e.market.jacobian(e.p)))) for e in (e_p, e_m))
    if e_m.singular or e_p.singular or signs[0] == signs[1]:
        raise NoConvergence(f"perturbed equilibria are not regular of opposite sign: {signs}")

    fib = enumerate_fiber(e_p.market)
    others = [q.p for q in fib.equilibria
              if np.linalg.norm(q.p - e_p.p) > 1e-6 * (1.0 + np.linalg.norm(e_p.p))]
    d = min((float(np.linalg.norm(q - e_p.p)) for q in others), default=np.inf)

    avoid = lift_path(EconomyPath(e_m.market, e_p.market, samples), e_m.p, e_p.p)

    mid = 0.5 * (e_m.market.omega + e_p.market.omega)
    far = 2.0 * market.omega - mid
    cross_path = EconomyPath(e_m.market, market.with_omega(far), samples)
    cross = lift_path(cross_path, e_m.p)
    # the straight path meets the crisis economy where it passes omega*
    w = far - e_m.market.omega
    t_exp = float(np.dot(market.omega - e_m.market.omega, w) / np.dot(w, w))
    return RestoreReport(e_star, v, delta, e_m, e_p, signs, d, avoid, cross, t_exp,
                         bool(np.isfinite(d)))
