import numpy as np
import pytest

from eqcrisis import (EconomyPath, quasilinear_pair, cubic_market, enumerate_fiber,
                      fold_market, lift_path, locate_critical_equilibrium,
                      restore_prices_experiment, solve_equilibrium, symmetric_cobb_douglas)
from eqcrisis.manifold import Equilibrium
from eqcrisis.errors import CertificationMissing, InputError, PreconditionError

UPPER, MIDDLE, LOWER = 2.63472768, 1.0, 0.37955


def at(w1p, w2):
    return quasilinear_pair(omega1_second=w1p, omega2_first=w2)


def cusp_loop(samples=100):
    # around the cusp (7/9, 7/9) counter-clockwise, back to (0.766, 0.766)
    corners = [(0.766, 0.70), (0.85, 0.70), (0.85, 0.85), (0.766, 0.85)]
    return EconomyPath(at(0.766, 0.766), at(0.766, 0.766), samples,
                       via=tuple(at(*c).omega for c in corners))


def test_path_interpolation():
    path = EconomyPath(at(0.7, 0.7), at(0.8, 0.9), samples=10)
    assert np.allclose(path.omega(0.5), 0.5 * (at(0.7, 0.7).omega + at(0.8, 0.9).omega))
    loop = cusp_loop()
    assert np.allclose(loop.omega(0.0), loop.omega(1.0))
    # arc-length parametrisation: first leg is 0.066 of total length 0.066+0.084+0.15+0.084+0.084
    b = loop.breakpoints
    assert b[1] == pytest.approx(0.066 / 0.468)
    assert np.allclose(loop.omega(b[1]), at(0.766, 0.70).omega)


def test_path_rejects_nonpositive_endowments():
    with pytest.raises(InputError):
        EconomyPath(at(0.7, 0.7), at(0.7, 0.7), via=(np.array([1.0, -0.1, 0.7, 1.0]),))


def test_constant_path():
    e = symmetric_cobb_douglas()
    res = lift_path(EconomyPath(e, e, 20), [1.0], p_target=[1.0])
    assert res.completed and res.crisis_hit is None
    assert np.allclose(res.prices, 1.0, atol=1e-12)
    assert res.endpoint_distance < 1e-12
    other = lift_path(EconomyPath(e, e, 20), [1.0], p_target=[1.5])
    assert other.endpoint_distance == pytest.approx(0.5)


def test_lift_tracks_closed_form_cobb_douglas():
    start, end = symmetric_cobb_douglas(), symmetric_cobb_douglas()
    om_end = end.omega.copy()
    om_end[0] = 2.0  # agent 1 holds twice the good 1
    end = end.with_omega(om_end)
    res = lift_path(EconomyPath(start, end, 50), [1.0])
    for t, p in zip(res.t, res.prices):
        mk = EconomyPath(start, end, 50).market(t)
        assert abs(mk.reduced(p)[0]) <= 1e-9
    assert res.completed
    assert res.end_price[0] == pytest.approx(solve_equilibrium(end, res.end_price).p[0], abs=1e-12)


def test_cusp_loop_changes_branch():
    path = cusp_loop()
    res = lift_path(path, [UPPER], p_target=[UPPER])
    assert res.completed and res.crisis_hit is None
    fib = enumerate_fiber(path.end)
    assert np.allclose(fib.prices[:, 0], [LOWER, MIDDLE, UPPER], atol=1e-5)
    d = min(abs(q - UPPER) for q in fib.prices[:, 0] if abs(q - UPPER) > 1e-6)
    assert res.endpoint_distance >= d
    assert res.end_price[0] == pytest.approx(fib.prices[0, 0], abs=1e-8)


def test_lift_residual_along_path():
    path = cusp_loop()
    res = lift_path(path, [UPPER])
    for t, p in zip(res.t, res.prices):
        assert np.abs(path.market(t).reduced(p)).max() <= 1e-9


def test_monotone_refinement():
    a = lift_path(cusp_loop(100), [UPPER])
    b = lift_path(cusp_loop(200), [UPPER])
    assert a.completed and b.completed
    assert np.abs(a.end_price - b.end_price).max() <= 1e-6


def test_step_bound_between_samples():
    res = lift_path(cusp_loop(), [UPPER], max_dp=0.1)
    assert np.abs(np.diff(res.prices[:, 0])).max() < 0.1


def test_straight_path_meets_fold():
    # only w2 moves; the lower fold sits at w2 = 0.7600734490
    path = EconomyPath(at(0.766, 0.766), at(0.766, 0.70), samples=100)
    res = lift_path(path, [MIDDLE])
    assert not res.completed
    t_fold = (0.766 - 0.7600734490) / (0.766 - 0.70)
    assert res.crisis_hit == pytest.approx(t_fold, abs=1e-8)
    assert res.flags[-1] == "crisis"
    # the upper branch survives the same path
    assert lift_path(path, [UPPER]).completed


def test_lift_csv():
    res = lift_path(EconomyPath(at(0.766, 0.766), at(0.766, 0.75), 10), [UPPER])
    lines = res.to_csv(header_lines=["h"]).splitlines()
    assert lines[0] == "# h"
    assert lines[1] == "t,p_1,sigma_min,flag"
    assert len(lines) == 2 + len(res.t)


def test_lift_preconditions():
    path = EconomyPath(at(0.766, 0.766), at(0.766, 0.75), 10)
    with pytest.raises(PreconditionError):
        lift_path(path, [1.7])  # not an equilibrium
    crit = locate_critical_equilibrium(quasilinear_pair(), [0.54], coordinate=2)
    with pytest.raises(PreconditionError):
        lift_path(EconomyPath(crit.market, crit.market, 10), crit.p)


def test_restore_quasilinear_pair():
    crit = locate_critical_equilibrium(quasilinear_pair(), [0.54], coordinate=2)
    rep = restore_prices_experiment(crit, radius=1e-2, coordinate=2)
    assert rep.signs == (1, -1)
    assert np.linalg.norm(rep.e_plus.p - crit.p) <= 1e-2
    assert np.linalg.norm(rep.e_minus.p - crit.p) <= 1e-2
    # sign oracle: slope of zbar at the perturbed roots
    for e, s in ((rep.e_plus, 1), (rep.e_minus, -1)):
        assert np.sign(e.market.jacobian(e.p)[0, 0]) == s
    assert rep.conclusive and rep.alternative_holds
    assert rep.avoiding.completed
    assert rep.avoiding.endpoint_distance >= rep.d * (1 - 1e-9)
    assert rep.crossing.crisis_hit == pytest.approx(rep.crossing_expected, abs=1e-8)


def test_restore_fold_normal_form():
    mk = fold_market(0.0)
    crit = Equilibrium(mk, np.array([0.0]), 0.0, True)
    rep = restore_prices_experiment(crit, radius=1e-2)
    delta = 5e-3
    assert rep.e_plus.p[0] == pytest.approx(delta, abs=1e-12)
    assert rep.e_minus.p[0] == pytest.approx(-delta, abs=1e-12)
    assert rep.e_plus.market.omega[0] == pytest.approx(delta**2, abs=1e-14)
    assert rep.signs == (1, -1)
    assert rep.d == pytest.approx(2 * delta)
    assert rep.alternative_holds
    assert rep.crossing.crisis_hit == pytest.approx(0.5, abs=1e-8)
    assert set(rep.summary()) >= {"signs_plus_minus", "d", "conclusive"}


def test_restore_requires_certificate():
    mk = cubic_market(1.0)
    with pytest.raises(CertificationMissing):
        restore_prices_experiment(Equilibrium(mk, np.array([1.0]), 0.0, True))
