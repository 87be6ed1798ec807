"""Pure exchange economies and their excess demand.

Prices are normalized with the last good as numeraire, so a market with
``l`` goods has ``l - 1`` free prices. Everything that evaluates excess
demand comes in two flavours: batched ``*_batch`` methods that take
``P`` of shape ``(..., l - 1)`` and return NaN where demand is not
interior, and single-point public methods that raise
:class:`NoInteriorMaximum` instead.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NoInteriorMaximum

COBB_DOUGLAS = "cobb_douglas"
QUASILINEAR = "quasilinear"


@dataclass(frozen=True)
class UtilitySpec:
    """A utility function from the built-in catalogue.

    ``cobb_douglas`` is ``sum_k a_k log x_k``. ``quasilinear`` (two goods
    only) is linear in the good named by ``role``:

    * role ``"first"``:  ``u(x, y) = x - y**(-alpha) / alpha``
    * role ``"second"``: ``u(x, y) = y - x**(-alpha) / alpha``
    """

    kind: str
    goods: int
    weights: tuple = ()
    alpha: float = 0.0
    role: str = ""

    def __post_init__(self):
        if self.kind == COBB_DOUGLAS:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.goods,) or self.goods < 2:
                raise InputError("cobb_douglas needs one weight per good (goods >= 2)")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InputError("cobb_douglas weights must be positive and finite")
        elif self.kind == QUASILINEAR:
            if self.goods != 2:
                raise InputError("quasilinear utilities are defined for two goods only")
            if not (np.isfinite(self.alpha) and self.alpha > 0):
                raise InputError("quasilinear alpha must be positive")
            if self.role not in ("first", "second"):
                raise InputError("quasilinear role must be 'first' or 'second'")
        else:
            raise InputError(f"unknown utility kind {self.kind!r}")

    @classmethod
    def cobb_douglas(cls, weights):
        weights = tuple(float(a) for a in weights)
        return cls(COBB_DOUGLAS, len(weights), weights=weights)

    @classmethod
    def quasilinear(cls, alpha, role="first"):
        return cls(QUASILINEAR, 2, alpha=float(alpha), role=role)

    def utility(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == COBB_DOUGLAS:
            return np.sum(np.asarray(self.weights) * np.log(x), axis=-1)
        a = self.alpha
        if self.role == "first":
            return x[..., 0] - x[..., 1] ** (-a) / a
        return x[..., 1] - x[..., 0] ** (-a) / a

    def to_dict(self):
        if self.kind == COBB_DOUGLAS:
            return {"kind": COBB_DOUGLAS, "weights": list(self.weights)}
        return {"kind": QUASILINEAR, "alpha": self.alpha, "role": self.role}

    @classmethod
    def from_dict(cls, d, goods=None):
        kind = d.get("kind")
        if kind == COBB_DOUGLAS:
            spec = cls.cobb_douglas(d["weights"])
        elif kind == QUASILINEAR:
            spec = cls.quasilinear(d["alpha"], d.get("role", "first"))
        else:
            raise InputError(f"unknown utility kind {kind!r}")
        if goods is not None and spec.goods != goods:
            raise InputError("utility goods count does not match economy")
        return spec


@dataclass(frozen=True)
class Price:
    """Normalized price vector: strictly positive, numeraire last and equal to 1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InputError("a price needs at least two goods")
        if v[-1] != 1.0:
            raise InputError("numeraire price must be exactly 1")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise InputError("prices must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_free(cls, p_free):
        return cls(np.append(np.atleast_1d(np.asarray(p_free, dtype=float)), 1.0))

    @property
    def free(self):
        return self.values[:-1]


def _demand_batch(u: UtilitySpec, P, W):
    """Demand with derivatives; NaN where the maximizer is not interior.

    ``P`` has shape (..., l) with ``P[..., -1] == 1``; ``W`` has shape (...).
    Returns ``x`` (..., l), ``dx/dp_free`` (..., l, l-1), ``dx/dw`` (..., l).
    """
    P = np.asarray(P, dtype=float)
    W = np.asarray(W, dtype=float)
    l = P.shape[-1]
    if u.kind == COBB_DOUGLAS:
        a = np.asarray(u.weights)
        share = a / a.sum()
        dxdw = share / P
        x = dxdw * W[..., None]
        dxdp = np.zeros(P.shape + (l - 1,))
        k = np.arange(l - 1)
        dxdp[..., k, k] = -x[..., :-1] / P[..., :-1]
        bad = ~(W > 0)
    else:
        al = u.alpha
        p = P[..., 0]
        x = np.empty(P.shape)
        dxdp = np.empty(P.shape + (1,))
        dxdw = np.empty(P.shape)
        if u.role == "first":
            y = p ** (1.0 / (al + 1.0))
            x[..., 0] = W / p - p ** (-al / (al + 1.0))
            x[..., 1] = y
            dxdp[..., 0, 0] = -W / p**2 + al / (al + 1.0) * p ** (-al / (al + 1.0) - 1.0)
            dxdp[..., 1, 0] = 1.0 / (al + 1.0) * p ** (1.0 / (al + 1.0) - 1.0)
            dxdw[..., 0] = 1.0 / p
            dxdw[..., 1] = 0.0
        else:
            x[..., 0] = p ** (-1.0 / (al + 1.0))
            x[..., 1] = W - p ** (al / (al + 1.0))
            dxdp[..., 0, 0] = -1.0 / (al + 1.0) * p ** (-1.0 / (al + 1.0) - 1.0)
            dxdp[..., 1, 0] = -al / (al + 1.0) * p ** (-1.0 / (al + 1.0))
            dxdw[..., 0] = 0.0
            dxdw[..., 1] = 1.0
        bad = ~np.all(x > 0, axis=-1)
    if np.any(bad):
        x = np.where(bad[..., None], np.nan, x)
    return x, dxdp, dxdw


def demand(u: UtilitySpec, p, w):
    """Utility-maximizing bundle at price ``p`` and wealth ``w``.

    Raises NoInteriorMaximum when the optimum leaves the positive orthant,
    which happens for quasilinear utilities at low wealth.
    """
    p = p if isinstance(p, Price) else Price(np.asarray(p, dtype=float))
    if p.values.size != u.goods:
        raise InputError("price dimension does not match utility")
    if not w > 0:
        raise InputError("wealth must be positive")
    x, _, _ = _demand_batch(u, p.values, np.asarray(float(w)))
    if np.any(np.isnan(x)):
        raise NoInteriorMaximum(f"{u.kind} demand is not interior at p={p.values}, w={w}")
    return x


class Market:
    """Anything with a reduced excess demand ``zbar(p, omega)``.

    Subclasses implement ``reduced_batch``, ``jacobian_batch``,
    ``jacobian_omega_batch``, ``omega`` and ``with_omega``.
    """

    positive = True
    default_box = (0.05, 20.0)

    @property
    def n_free(self) -> int:
        raise NotImplementedError

    def _single(self, fn, p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if p.shape != (self.n_free,):
            raise InputError(f"expected {self.n_free} free prices, got shape {p.shape}")
        if self.positive and np.any(p <= 0):
            raise InputError("free prices must be strictly positive")
        with np.errstate(all="ignore"):
            out = fn(p)
        if np.any(np.isnan(out)):
            raise NoInteriorMaximum(f"demand is not interior at p={p}")
        return out

    def reduced(self, p_free):
        return self._single(self.reduced_batch, p_free)

    def jacobian(self, p_free):
        return self._single(self.jacobian_batch, p_free)

    def jacobian_omega(self, p_free):
        return self._single(self.jacobian_omega_batch, p_free)

    def proper(self, p_free):
        p = np.atleast_1d(np.asarray(p_free, dtype=float))
        return (1.0 + p) * self.reduced(p)

    def implicit_map(self):
        """The defining map ``F(omega, p) = zbar(p, omega)`` with its Jacobian.

        Both callables take a flat vector ``concat(omega, p_free)``.
        """
        k = self.omega.size

        def F(v):
            v = np.asarray(v, dtype=float)
            return self.with_omega(v[:k]).reduced(v[k:])

        def DF(v):
            v = np.asarray(v, dtype=float)
            mk = self.with_omega(v[:k])
            return np.hstack([mk.jacobian_omega(v[k:]), mk.jacobian(v[k:])])

        return F, DF


@dataclass(frozen=True, eq=False)
class Economy(Market):
    """Utilities plus an ``m x l`` matrix of strictly positive endowments."""

    utilities: tuple
    endowments: np.ndarray = field(repr=False)

    def __post_init__(self):
        E = np.array(self.endowments, dtype=float)
        utilities = tuple(self.utilities)
        if E.ndim != 2:
            raise InputError("endowments must be an m x l matrix")
        m, l = E.shape
        if m < 1 or l < 2:
            raise InputError("need at least one agent and two goods")
        if len(utilities) != m:
            raise InputError("one utility per agent required")
        if any(u.goods != l for u in utilities):
            raise InputError("every utility must be defined on l goods")
        if np.any(~np.isfinite(E)) or np.any(E <= 0):
            raise InputError("endowments must be strictly positive")
        E.setflags(write=False)
        object.__setattr__(self, "endowments", E)
        object.__setattr__(self, "utilities", utilities)

    @property
    def m(self):
        return self.endowments.shape[0]

    @property
    def l(self):
        return self.endowments.shape[1]

    @property
    def n_free(self):
        return self.l - 1

    @property
    def omega(self):
        return self.endowments.ravel().copy()

    def with_omega(self, omega):
        return Economy(self.utilities, np.asarray(omega, dtype=float).reshape(self.m, self.l))

    def _full_prices(self, P):
        P = np.asarray(P, dtype=float)
        return np.concatenate([P, np.ones(P.shape[:-1] + (1,))], axis=-1)

    def _evaluate(self, P):
        """Aggregate excess demand and its price/endowment derivatives."""
        Pf = self._full_prices(P)
        z = np.zeros(Pf.shape)
        dz_dp = np.zeros(Pf.shape + (self.l - 1,))
        dz_dw = []
        for u, w_i in zip(self.utilities, self.endowments):
            W = Pf @ w_i
            x, dxdp, dxdw = _demand_batch(u, Pf, W)
            z += x - w_i
            dz_dp += dxdp + dxdw[..., :, None] * w_i[None, :-1]
            dz_dw.append(dxdw[..., :, None] * Pf[..., None, :] - np.eye(self.l))
        dz_domega = np.concatenate(dz_dw, axis=-1)
        return z, dz_dp, dz_domega

    def excess_demand_batch(self, P):
        return self._evaluate(P)[0]

    def reduced_batch(self, P):
        return self._evaluate(P)[0][..., :-1]

    def jacobian_batch(self, P):
        z, dz_dp, _ = self._evaluate(P)
        J = dz_dp[..., :-1, :]
        return np.where(np.isnan(z[..., :-1, None]), np.nan, J)

    def jacobian_omega_batch(self, P):
        z, _, dz_domega = self._evaluate(P)
        return np.where(np.isnan(z[..., :-1, None]), np.nan, dz_domega[..., :-1, :])

    def excess_demand(self, p):
        p = p if isinstance(p, Price) else Price(np.asarray(p, dtype=float))
        if p.values.size != self.l:
            raise InputError("price dimension does not match economy")
        with np.errstate(all="ignore"):
            z = self.excess_demand_batch(p.free)
        if np.any(np.isnan(z)):
            raise NoInteriorMaximum(f"demand is not interior at p={p.values}")
        return z

    def to_dict(self):
        return {
            "m": self.m,
            "l": self.l,
            "utilities": [u.to_dict() for u in self.utilities],
            "endowments": self.endowments.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            m, l = int(d["m"]), int(d["l"])
            utilities = [UtilitySpec.from_dict(u, goods=l) for u in d["utilities"]]
            E = np.asarray(d["endowments"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed economy definition: {exc}") from exc
        if E.shape != (m, l):
            raise InputError(f"endowments shape {E.shape} does not match m={m}, l={l}")
        return cls(tuple(utilities), E)


class ReducedMarket(Market):
    """A market given directly by its reduced excess demand.

    Used for excess demands that are not built from a utility catalogue
    (for instance the cubic and fold test families). ``zbar``, ``jac`` and
    ``jac_omega`` take ``(P, omega)`` with ``P`` of shape (..., n).
    """

    def __init__(self, zbar: Callable, jac: Callable, jac_omega: Callable, omega,
                 n_free=1, positive=True, default_box=(0.05, 20.0), name="custom"):
        self._zbar, self._jac, self._jac_omega = zbar, jac, jac_omega
        self._omega = np.atleast_1d(np.asarray(omega, dtype=float)).copy()
        self._omega.setflags(write=False)
        self._n = n_free
        self.positive = positive
        self.default_box = default_box
        self.name = name

    def __repr__(self):
        return f"ReducedMarket({self.name}, omega={self._omega.tolist()})"

    @property
    def n_free(self):
        return self._n

    @property
    def omega(self):
        return self._omega.copy()

    def with_omega(self, omega):
        return ReducedMarket(self._zbar, self._jac, self._jac_omega, omega, self._n,
                             self.positive, self.default_box, self.name)

    def reduced_batch(self, P):
        return self._zbar(np.asarray(P, dtype=float), self._omega)

    def jacobian_batch(self, P):
        return self._jac(np.asarray(P, dtype=float), self._omega)

    def jacobian_omega_batch(self, P):
        return self._jac_omega(np.asarray(P, dtype=float), self._omega)


def excess_demand(e: Economy, p):
    """Aggregate excess demand ``sum_i (x_i(p, p.omega_i) - omega_i)``."""
    return e.excess_demand(p)


def reduced_excess_demand(e: Market, p_free):
    return e.reduced(p_free)


def proper_excess_demand(e: Market, p_free):
    """``(1 + p_k) * zbar_k``: same zeros, but proper in the price."""
    return e.proper(p_free)


def jacobian_reduced(e: Market, p_free):
    return e.jacobian(p_free)


def load_economy(path) -> Economy:
    with open(Path(path)) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc
    return Economy.from_dict(data)


def quasilinear_pair(alpha=8.0, omega1_second=0.766, omega2_first=0.766,
                     omega1_first=1.0, omega2_second=1.0) -> Economy:
    """Two quasilinear traders whose excess demand for good 1 is
    ``w1'/p - p**(-a/(a+1)) + p**(-1/(a+1)) - w2``.

    ``omega1_second`` is trader 1's endowment of the numeraire and
    ``omega2_first`` trader 2's endowment of good 1; the two remaining
    endowments do not enter the excess demand but keep demand interior.
    """
    return Economy(
        (UtilitySpec.quasilinear(alpha, "first"), UtilitySpec.quasilinear(alpha, "second")),
        np.array([[omega1_first, omega1_second], [omega2_first, omega2_second]]),
    )


def symmetric_cobb_douglas(eps=1.0) -> Economy:
    """Two Cobb-Douglas(1,1) traders with mirrored endowments; equilibrium p = 1."""
    u = UtilitySpec.cobb_douglas((1.0, 1.0))
    return Economy((u, u), np.array([[1.0 + eps, eps], [eps, 1.0 + eps]]))


def cubic_market(omega2=1.0, omega1=1.0) -> ReducedMarket:
    """``zbar(p, omega) = (p - 1)**3 - (omega2 - 1)``: critical at p = 1 but
    with the continuous price selection ``p = 1 + cbrt(omega2 - 1)``."""

    def zbar(P, om):
        return (P - 1.0) ** 3 - (om[1] - 1.0)

    def jac(P, om):
        return (3.0 * (P - 1.0) ** 2)[..., None]

    def jac_omega(P, om):
        out = np.zeros(P.shape + (2,))
        out[..., 1] = -1.0
        return out

    return ReducedMarket(zbar, jac, jac_omega, [omega1, omega2], name="cubic")


def fold_market(omega=0.0) -> ReducedMarket:
    """Fold normal form ``zbar(p, omega) = p**2 - omega`` on the whole line."""

    def zbar(P, om):
        return P**2 - om[0]

    def jac(P, om):
        return (2.0 * P)[..., None]

    def jac_omega(P, om):
        return -np.ones(P.shape + (1,))

    return ReducedMarket(zbar, jac, jac_omega, [omega], positive=False,
                         default_box=(-2.0, 2.0), name="fold")


def random_economy(rng, m=2, l=2, kinds: Sequence[str] = (COBB_DOUGLAS,)) -> Economy:
    """Draw an economy with utilities from ``kinds`` (quasilinear needs l = 2)."""
    utilities = []
    for i in range(m):
        kind = kinds[rng.integers(len(kinds))]
        if kind == QUASILINEAR and l == 2:
            utilities.append(UtilitySpec.quasilinear(rng.uniform(0.5, 10.0),
                                                     ("first", "second")[i % 2]))
        else:
            utilities.append(UtilitySpec.cobb_douglas(rng.uniform(0.2, 3.0, size=l)))
    E = rng.uniform(0.3, 3.0, size=(m, l))
    return Economy(tuple(utilities), E)
