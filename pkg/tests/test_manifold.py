import numpy as np
import pytest
from scipy.optimize import brentq

from eqcrisis import (quasilinear_pair, cubic_market, enumerate_fiber,
                      locate_critical_equilibrium, projection_differential, random_economy,
                      solve_equilibrium, symmetric_cobb_douglas)
from eqcrisis.errors import InputError, NoConvergence
from conftest import qpair_dzbar, qpair_zbar

FOLD_W2 = 0.7600734490


def sign_scan_roots(f, lo, hi, n=100_000):
    """Roots of a scalar function by sign changes on a fine grid, refined with brentq."""
    x = np.linspace(lo, hi, n)
    y = f(x)
    idx = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)
    return np.array([brentq(f, x[i], x[i + 1], xtol=1e-14) for i in idx])


def test_solve_symmetric_cobb_douglas():
    eq = solve_equilibrium(symmetric_cobb_douglas(), [0.7])
    assert abs(eq.p[0] - 1.0) < 1e-12
    assert eq.residual <= 1e-10


def test_solve_quasilinear_pair_from_half():
    eq = solve_equilibrium(quasilinear_pair(), [0.5])
    # nearest root of the literal economy below 1
    assert abs(qpair_zbar(eq.p[0])) <= 1e-10


def test_solve_cubic_branch():
    for d in [-0.3, 0.1, 0.5]:
        eq = solve_equilibrium(cubic_market(omega2=1 + d**3), [1.2])
        assert abs(eq.p[0] - (1 + d)) < 1e-7


def test_solve_rejects_nonpositive_start():
    with pytest.raises(InputError):
        solve_equilibrium(symmetric_cobb_douglas(), [-1.0])


def test_solve_no_convergence():
    # (p-1)^3 + 5 has its only root at p < 0, outside the positive orthant
    with pytest.raises(NoConvergence):
        solve_equilibrium(cubic_market(omega2=-4.0), [2.0])


def test_fiber_single_equilibrium():
    fib = enumerate_fiber(symmetric_cobb_douglas())
    assert len(fib) == 1 and abs(fib.prices[0, 0] - 1) < 1e-12


@pytest.mark.parametrize("w2", [FOLD_W2 + 1e-3, 0.766, 0.769])
def test_fiber_matches_sign_scan(w2):
    fib = enumerate_fiber(quasilinear_pair(omega2_first=w2))
    oracle = sign_scan_roots(lambda p: qpair_zbar(p, w2=w2), 0.05, 20)
    assert len(oracle) == 3
    assert np.allclose(fib.prices[:, 0], oracle, atol=1e-9)
    assert all(eq.residual <= 1e-10 for eq in fib.equilibria)


def test_fiber_is_deterministic_and_separated():
    e = quasilinear_pair()
    a, b = enumerate_fiber(e), enumerate_fiber(e)
    assert np.array_equal(a.prices, b.prices)
    d = np.diff(a.prices[:, 0])
    assert np.all(d > 1e-6)


def test_fiber_at_fold_merges_degenerate_root():
    e = quasilinear_pair(omega2_first=FOLD_W2)
    crit = locate_critical_equilibrium(e, [0.54], coordinate=2)
    fib = enumerate_fiber(crit.market)
    near = [eq for eq in fib.equilibria if abs(eq.p[0] - crit.p[0]) < 1e-3]
    assert len(near) == 1
    assert near[0].singular and near[0].starts >= 2


def test_fiber_csv_columns():
    fib = enumerate_fiber(quasilinear_pair())
    text = fib.to_csv(header_lines=["x"])
    lines = text.splitlines()
    assert lines[0] == "# x"
    assert lines[1] == "p_1,residual,kernel_dim,det_sign"
    assert [ln.split(",")[3] for ln in lines[2:]] == ["-1", "1", "-1"]


def test_projection_differential_kernel_dims(rng):
    assert projection_differential(solve_equilibrium(symmetric_cobb_douglas(), [1.0])).kernel_dim == 0
    crit = locate_critical_equilibrium(quasilinear_pair(), [0.54], coordinate=2)
    assert projection_differential(crit).kernel_dim == 1
    e = random_economy(rng, m=2, l=3)
    eq = enumerate_fiber(e).equilibria[0]
    rep = projection_differential(eq)
    h = 1e-6
    fd = np.column_stack([(e.reduced(eq.p + h * d) - e.reduced(eq.p - h * d)) / (2 * h) for d in np.eye(2)])
    assert rep.kernel_dim == 0
    assert np.allclose(rep.singular_values, np.linalg.svd(fd, compute_uv=False), rtol=1e-6)
    assert rep.det_sign == int(np.sign(np.linalg.det(fd)))


def test_locate_critical_matches_closed_form():
    crit = locate_critical_equilibrium(quasilinear_pair(), [0.54], coordinate=2)
    p_c = brentq(qpair_dzbar, 0.4, 0.7, xtol=1e-15)
    assert abs(crit.p[0] - p_c) < 1e-9
    assert abs(crit.market.omega[2] - qpair_zbar(p_c, w2=0.0)) < 1e-10
    assert crit.residual <= 1e-10
