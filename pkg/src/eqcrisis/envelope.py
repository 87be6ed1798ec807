"""Discriminants and envelopes of one-parameter families of plane curves.

A family is a function ``f(x, y, z)``; the member ``C_z`` is its zero set
in the plane at fixed ``z``. The discriminant is the space curve where
``f = f_z = 0``. A discriminant point with ``delta = f_x f_yz - f_y f_xz``
nonzero is certified to lie on the envelope, the set of limits of
intersections ``C_z`` with nearby ``C_z'``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ._numerics import H_FIRST, H_SECOND, dedup, newton_batch
from .errors import ContinuationBreakdown, HypothesisViolated, InputError, PreconditionError

ZERO_TOL = 1e-9
CERTIFY_REL = 1e-6
REMOVABLE = 1e-7

_PARTIALS = ("fx", "fy", "fz", "fxz", "fyz", "fzz")
_AXES = {"x": 0, "y": 1, "z": 2}


class CurveFamily:
    """``f(x, y, z)`` together with the partials used by the envelope tests.

    Partials not supplied are replaced by central differences: first
    derivatives with step ``eps**(1/3)``, nested ones with ``eps**(1/4)``.
    All evaluators broadcast over array arguments.
    """

    def __init__(self, f, name="custom", **partials):
        unknown = set(partials) - set(_PARTIALS)
        if unknown:
            raise InputError(f"unknown partials {sorted(unknown)}")
        self.f = f
        self.name = name
        self.analytic = {k: v for k, v in partials.items() if v is not None}
        self._step = 1.0

    def __repr__(self):
        return f"CurveFamily({self.name!r})"

    def __call__(self, x, y, z):
        return np.asarray(self.f(x, y, z), dtype=float)

    def _d1(self, fn, args, i, h=H_FIRST):
        a = [np.asarray(t, dtype=float) for t in args]
        step = self._step * h * (1.0 + np.abs(a[i]))
        up, dn = list(a), list(a)
        up[i] = a[i] + step
        dn[i] = a[i] - step
        return (np.asarray(fn(*up)) - np.asarray(fn(*dn))) / (2.0 * step)

    def _d2(self, i, j, args):
        if i == j:
            a = [np.asarray(t, dtype=float) for t in args]
            step = self._step * H_SECOND * (1.0 + np.abs(a[i]))
            up, dn = list(a), list(a)
            up[i] = a[i] + step
            dn[i] = a[i] - step
            return (self(*up) - 2.0 * self(*a) + self(*dn)) / step**2
        inner = lambda *t: self._d1(self.f, t, i, H_SECOND)
        return self._d1(inner, args, j, H_SECOND)

    def partial(self, name, x, y, z):
        if name in self.analytic:
            return np.asarray(self.analytic[name](x, y, z), dtype=float) + 0.0 * np.asarray(x)
        args = (x, y, z)
        if len(name) == 2:
            return self._d1(self.f, args, _AXES[name[1]])
        first = "f" + name[1]
        if first in self.analytic:
            return self._d1(self.analytic[first], args, _AXES[name[2]])
        return self._d2(_AXES[name[1]], _AXES[name[2]], args)

    def partials(self, x, y, z):
        return {k: self.partial(k, x, y, z) for k in _PARTIALS}

    def validate(self, box, n=20, seed=0, rtol=1e-5):
        """Compare supplied partials with finite differences at random points.

        The differences are Richardson-extrapolated over steps ``h`` and
        ``h/2`` so that strongly curved families are not rejected for the
        truncation error of the reference itself.
        """
        rng = np.random.default_rng(seed)
        B = np.asarray(box, dtype=float)
        pts = B[:, 0] + (B[:, 1] - B[:, 0]) * rng.random((n, 3))
        coarse, fine = CurveFamily(self.f), CurveFamily(self.f)
        fine._step = 0.5
        worst = 0.0
        for k in self.analytic:
            a = self.partial(k, *pts.T)
            b = (4.0 * fine.partial(k, *pts.T) - coarse.partial(k, *pts.T)) / 3.0
            err = np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))
            worst = max(worst, float(err))
            if err > rtol:
                raise InputError(f"partial {k} disagrees with finite differences ({err:.2g})")
        return worst


def ballistic(g=9.8, v=10.0) -> CurveFamily:
    """Trajectories ``y = x tan z - g x^2 / (2 v^2 cos^2 z)`` over launch angles z."""
    c = g / v**2

    def f(x, y, z):
        return x * np.tan(z) - 0.5 * c * x**2 / np.cos(z) ** 2 - y

    return CurveFamily(
        f, name="ballistic",
        fx=lambda x, y, z: np.tan(z) - c * x / np.cos(z) ** 2,
        fy=lambda x, y, z: -np.ones_like(np.asarray(x, dtype=float)),
        fz=lambda x, y, z: x / np.cos(z) ** 2 - c * x**2 * np.sin(z) / np.cos(z) ** 3,
        fxz=lambda x, y, z: 1.0 / np.cos(z) ** 2 - 2.0 * c * x * np.sin(z) / np.cos(z) ** 3,
        fyz=lambda x, y, z: np.zeros_like(np.asarray(x, dtype=float)),
        fzz=lambda x, y, z: (2.0 * x * np.tan(z) / np.cos(z) ** 2
                             - c * x**2 * (np.cos(z) ** 2 + 3.0 * np.sin(z) ** 2) / np.cos(z) ** 4),
    )


def extremal() -> CurveFamily:
    """``y = z sin x``: geodesics through the origin with initial slope z."""
    zero = lambda x, y, z: np.zeros_like(np.asarray(x, dtype=float))
    return CurveFamily(
        lambda x, y, z: y - z * np.sin(x), name="extremal",
        fx=lambda x, y, z: -z * np.cos(x),
        fy=lambda x, y, z: np.ones_like(np.asarray(x, dtype=float)),
        fz=lambda x, y, z: -np.sin(x),
        fxz=lambda x, y, z: -np.cos(x),
        fyz=zero,
        fzz=zero,
    )


def custom_poly(coeffs) -> CurveFamily:
    """Polynomial family from monomials ``[c, i, j, k]`` meaning ``c x^i y^j z^k``."""
    try:
        M = np.asarray(coeffs, dtype=float).reshape(-1, 4)
    except (TypeError, ValueError) as exc:
        raise InputError("coeffs must be a list of [c, i, j, k]") from exc
    if M.size == 0 or np.any(M[:, 1:] < 0) or np.any(M[:, 1:] != np.round(M[:, 1:])):
        raise InputError("exponents must be non-negative integers")

    def make(dx, dy, dz):
        def ev(x, y, z):
            x, y, z = (np.asarray(t, dtype=float) for t in (x, y, z))
            out = np.zeros(np.broadcast(x, y, z).shape)
            for c, i, j, k in M:
                fac, ok = c, True
                for e, d in ((i, dx), (j, dy), (k, dz)):
                    for r in range(d):
                        fac *= e - r
                    ok &= e >= d
                if ok and fac != 0.0:
                    out = out + fac * x ** (i - dx) * y ** (j - dy) * z ** (k - dz)
            return out
        return ev

    return CurveFamily(
        make(0, 0, 0), name="custom_poly",
        fx=make(1, 0, 0), fy=make(0, 1, 0), fz=make(0, 0, 1),
        fxz=make(1, 0, 1), fyz=make(0, 1, 1), fzz=make(0, 0, 2),
    )


def family_from_dict(d) -> CurveFamily:
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "ballistic":
        return ballistic(float(d.get("g", 9.8)), float(d.get("v", 10.0)))
    if kind == "extremal":
        return extremal()
    if kind == "custom_poly":
        if "coeffs" not in d:
            raise InputError("custom_poly needs 'coeffs'")
        return custom_poly(d["coeffs"])
    raise InputError(f"unknown family kind {kind!r}")


@dataclass(frozen=True)
class DiscriminantPoint:
    x: float
    y: float
    z: float
    delta: float
    certified_envelope: bool

    @property
    def xyz(self):
        return np.array([self.x, self.y, self.z])


def _delta(P):
    return P["fx"] * P["fyz"] - P["fy"] * P["fxz"]


def _certify(P):
    d = _delta(P)
    grad = np.hypot(P["fx"], P["fy"])
    hz = np.sqrt(P["fxz"] ** 2 + P["fyz"] ** 2 + P["fzz"] ** 2)
    return d, np.abs(d) > CERTIFY_REL * grad * hz


def discriminant(fam: CurveFamily, box, grid=12, tol=1e-12):
    """Point cloud on the discriminant curve ``f = f_z = 0`` inside ``box``.

    Starts from a ``grid**3`` lattice are projected onto the curve by
    minimum-norm Gauss-Newton on the two equations in all three unknowns.
    Each returned point carries ``delta`` and its envelope certification.
    """
    B = np.asarray(box, dtype=float)
    if B.shape != (3, 2) or not np.all(np.isfinite(B)) or np.any(B[:, 0] >= B[:, 1]):
        raise InputError("box must be finite ((x0, x1), (y0, y1), (z0, z1))")
    axes = [np.linspace(lo, hi, grid) for lo, hi in B]
    starts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)

    def F(X):
        x, y, z = X[:, 0], X[:, 1], X[:, 2]
        return np.stack([fam(x, y, z), fam.partial("fz", x, y, z)], axis=1)

    def J(X):
        P = fam.partials(X[:, 0], X[:, 1], X[:, 2])
        return np.stack([np.stack([P["fx"], P["fy"], P["fz"]], 1),
                         np.stack([P["fxz"], P["fyz"], P["fzz"]], 1)], axis=1)

    X, conv, res = newton_batch(F, J, starts, tol=tol, max_iter=60)
    inside = np.all((X >= B[:, 0]) & (X <= B[:, 1]), axis=1)
    X = X[conv & inside]
    if X.size == 0:
        return []
    X = X[dedup(X, 1e-6)]
    X = X[np.lexsort(X.T[::-1])]
    P = fam.partials(X[:, 0], X[:, 1], X[:, 2])
    d, cert = _certify(P)
    return [DiscriminantPoint(float(a), float(b), float(c), float(e), bool(k))
            for (a, b, c), e, k in zip(X, d, cert)]


def discriminant_csv(points, fh=None, header_lines=()):
    out = io.StringIO() if fh is None else fh
    for line in header_lines:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x", "y", "z", "delta", "certified"])
    for q in points:
        w.writerow([repr(q.x), repr(q.y), repr(q.z), repr(q.delta), int(q.certified_envelope)])
    return out.getvalue() if fh is None else None


@dataclass
class EnvelopeArc:
    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    residual: np.ndarray

    @property
    def points(self):
        return np.column_stack([self.x, self.y])


def _intersection_system(fam, z_star, z):
    """Residual and Jacobian in (x, y) of ``(f(., z*), g(., z))`` where g is the
    difference quotient in z, replaced by ``f_z(., z*)`` at the removable point."""
    near = abs(z - z_star) < REMOVABLE

    def F(X):
        x, y = X[:, 0], X[:, 1]
        f0 = fam(x, y, z_star)
        if near:
            g = fam.partial("fz", x, y, z_star)
        else:
            g = (fam(x, y, z) - f0) / (z - z_star)
        return np.stack([f0, g], axis=1)

    def J(X):
        x, y = X[:, 0], X[:, 1]
        a = np.stack([fam.partial("fx", x, y, z_star), fam.partial("fy", x, y, z_star)], 1)
        if near:
            b = np.stack([fam.partial("fxz", x, y, z_star), fam.partial("fyz", x, y, z_star)], 1)
        else:
            b = (np.stack([fam.partial("fx", x, y, z), fam.partial("fy", x, y, z)], 1) - a) / (z - z_star)
        return np.stack([a, b], axis=1)

    return F, J


def envelope_parametrization(fam: CurveFamily, q: DiscriminantPoint, delta_z=0.1,
                             samples=41, tol=1e-12) -> EnvelopeArc:
    """Envelope arc ``gamma(z)`` through a certified discriminant point.

    ``gamma(z)`` is the intersection of ``C_{z*}`` with ``C_z`` near ``q``,
    continued from ``z*`` outwards in both directions.
    """
    if not q.certified_envelope:
        raise PreconditionError("envelope parametrization needs a certified point (delta != 0)")
    if samples < 3:
        raise InputError("samples must be at least 3")
    z_star = q.z
    half = samples // 2
    zs = z_star + delta_z * np.linspace(-1.0, 1.0, 2 * half + 1)
    zs[half] = z_star
    pts = np.full((zs.size, 2), np.nan)
    resid = np.full(zs.size, np.nan)
    pts[half] = (q.x, q.y)
    for direction in (1, -1):
        prev = np.array([q.x, q.y])
        i = half
        rng = range(half, zs.size) if direction == 1 else range(half, -1, -1)
        for i in rng:
            F, J = _intersection_system(fam, z_star, zs[i])
            X, conv, res = newton_batch(F, J, prev[None, :], tol=tol, max_iter=50)
            f_here = float(np.abs(fam(X[0, 0], X[0, 1], zs[i])))
            if not conv[0] or f_here > ZERO_TOL:
                done = zs[min(i, half):half + 1] if direction == -1 else zs[half:i]
                raise ContinuationBreakdown(
                    f"Newton failed at z={zs[i]:.6g}",
                    reached=(float(done.min()), float(done.max())) if done.size else None)
            pts[i] = X[0]
            resid[i] = max(float(res[0]), f_here)
            prev = X[0]
    return EnvelopeArc(zs, pts[:, 0], pts[:, 1], resid)


@dataclass
class Branch:
    lam: np.ndarray
    x: np.ndarray
    residual: np.ndarray


def duality_check(f1d, lam_star, x_half=0.1, samples=41) -> Branch:
    """Nontrivial branch ``lambda(x)`` of ``f1d(lambda, x) = 0`` through ``(lambda*, 0)``.

    The roles of parameter and state are exchanged: ``x`` becomes the curve
    parameter of the family ``y = f1d(lambda, x)`` in the ``(lambda, y)``
    plane, whose envelope through ``(lambda*, 0)`` is the branch.
    """
    lam_star = float(lam_star)
    fam = CurveFamily(lambda a, b, c: b - np.asarray(f1d(a, c), dtype=float), name="dual")
    h = H_FIRST * (1.0 + abs(lam_star))
    base = np.array([lam_star - h, lam_star, lam_star + h])
    if np.max(np.abs(f1d(base, np.zeros(3)))) > 1e-12:
        raise HypothesisViolated("f1d(lambda, 0) does not vanish")
    f_x = -float(fam.partial("fz", lam_star, 0.0, 0.0))
    f_lx = -float(fam.partial("fxz", lam_star, 0.0, 0.0))
    if abs(f_x) > 1e-8:
        raise HypothesisViolated(f"df/dx(lambda*, 0) = {f_x:.3g} is not zero")
    if abs(f_lx) <= 1e-6:
        raise HypothesisViolated("mixed derivative d2f/dlambda dx vanishes at (lambda*, 0)")
    P = fam.partials(lam_star, 0.0, 0.0)
    d, cert = _certify(P)
    q = DiscriminantPoint(lam_star, 0.0, 0.0, float(d), bool(cert))
    arc = envelope_parametrization(fam, q, delta_z=x_half, samples=samples)
    lam = arc.x
    res = np.abs(np.asarray(f1d(lam, arc.z), dtype=float))
    return Branch(lam, arc.z, res)


__all__ = [
    "CurveFamily", "ballistic", "extremal", "custom_poly", "family_from_dict",
    "DiscriminantPoint", "discriminant", "discriminant_csv", "EnvelopeArc",
    "envelope_parametrization", "Branch", "duality_check",
]
