import numpy as np
import pytest
from scipy.optimize import fsolve

from eqcrisis import (CurveFamily, ballistic, custom_poly, discriminant, duality_check,
                      envelope_parametrization, extremal)
from eqcrisis.envelope import discriminant_csv, family_from_dict
from eqcrisis.errors import HypothesisViolated, InputError, PreconditionError

G, V = 9.8, 10.0
BALLISTIC_BOX = [[0.5, 9.0], [-5.0, 10.0], [0.05, 1.5]]


def safety_parabola(x):
    return V**2 / (2 * G) - G * x**2 / (2 * V**2)


def intersection_limit(fam, q, offsets=(1e-3, 1e-4, 1e-5)):
    """Limit of C_z* cap C_{z*+dz} as dz -> 0, by fsolve and Richardson extrapolation."""
    pts = []
    for dz in offsets:
        sol, *_ = fsolve(lambda w: [fam(w[0], w[1], q.z), fam(w[0], w[1], q.z + dz)],
                         [q.x, q.y], xtol=1e-13, full_output=True)
        pts.append(sol)
    pts = np.array(pts)
    # first-order error in dz: eliminate with ratio 10
    return pts[-1] + (pts[-1] - pts[-2]) / 9.0


def test_family_partials_validate():
    for fam, box in ((ballistic(), BALLISTIC_BOX), (extremal(), [[0, 7], [-1, 1], [-2, 2]])):
        assert fam.validate(box) < 1e-5


def test_validate_catches_wrong_partial():
    fam = CurveFamily(lambda x, y, z: x * z - y, fx=lambda x, y, z: 2 * z)
    with pytest.raises(InputError):
        fam.validate([[0, 1], [0, 1], [0.5, 1]])


def test_finite_difference_partials_match_analytic():
    b = ballistic()
    fd = CurveFamily(b.f)
    pts = (np.array([1.0, 4.0]), np.array([0.2, 2.0]), np.array([0.4, 1.1]))
    for k in ("fx", "fy", "fz", "fxz", "fyz", "fzz"):
        assert np.allclose(fd.partial(k, *pts), b.partial(k, *pts), rtol=1e-5, atol=1e-6)


def test_ballistic_discriminant_is_safety_parabola():
    pts = discriminant(ballistic(G, V), BALLISTIC_BOX)
    cert = [q for q in pts if q.certified_envelope]
    assert len(cert) > 20
    for q in cert:
        assert abs(q.y - safety_parabola(q.x)) <= 1e-3
        assert abs(ballistic()(q.x, q.y, q.z)) <= 1e-9
        assert abs(ballistic().partial("fz", q.x, q.y, q.z)) <= 1e-9


def test_ballistic_point_at_five():
    x = 5.0
    z = np.arctan(V**2 / (G * x))
    fam = ballistic(G, V)
    pts = discriminant(fam, [[4.9, 5.1], [3.0, 5.0], [z - 0.05, z + 0.05]], grid=6)
    q = min(pts, key=lambda q: abs(q.x - x))
    assert abs(q.y - (safety_parabola(q.x))) < 1e-9
    assert abs(safety_parabola(5.0) - 3.877) < 1e-3
    assert q.certified_envelope


def test_extremal_discriminant_points():
    pts = discriminant(extremal(), [[0.5, 7.0], [-1, 1], [-2, 2]])
    xs = sorted({round(q.x, 8) for q in pts})
    assert np.allclose(xs, [np.pi, 2 * np.pi])
    for q in pts:
        assert abs(q.y) < 1e-12
        assert abs(abs(q.delta) - 1) < 1e-9 and q.certified_envelope
        assert np.sign(q.delta) == np.sign(np.cos(q.x))


def test_shifted_parabola_not_certified():
    fam = custom_poly([[1, 0, 1, 0], [-1, 0, 0, 2]])  # y - z^2
    pts = discriminant(fam, [[-1, 1], [-1, 1], [-1, 1]])
    assert pts and not any(q.certified_envelope for q in pts)
    for q in pts:
        assert abs(q.y) < 1e-9 and abs(q.z) < 1e-9


def test_containment_and_soundness():
    fam = ballistic(G, V)
    cert = [q for q in discriminant(fam, BALLISTIC_BOX) if q.certified_envelope]
    for q in cert[:: max(1, len(cert) // 25)]:
        lim = intersection_limit(fam, q)
        assert np.hypot(lim[0] - q.x, lim[1] - q.y) <= 1e-4


def test_delta_sign_irrelevant():
    fam = ballistic()
    flipped = CurveFamily(lambda x, y, z: -fam(x, y, z),
                          **{k: (lambda x, y, z, g=g: -g(x, y, z)) for k, g in fam.analytic.items()})
    a = discriminant(fam, BALLISTIC_BOX, grid=6)
    b = discriminant(flipped, BALLISTIC_BOX, grid=6)
    assert [q.certified_envelope for q in a] == [q.certified_envelope for q in b]


def test_envelope_extremal_arc():
    fam = extremal()
    q = [q for q in discriminant(fam, [[2.5, 3.5], [-1, 1], [0.5, 1.5]]) if q.certified_envelope][0]
    arc = envelope_parametrization(fam, q, delta_z=0.2)
    assert arc.z[len(arc.z) // 2] == q.z
    for z, x, y in zip(arc.z, arc.x, arc.y):
        if z == q.z:
            continue
        oracle = fsolve(lambda w: [fam(w[0], w[1], z), fam(w[0], w[1], q.z)], [3.0, 0.1], xtol=1e-14)
        assert np.allclose([x, y], oracle, atol=1e-9)
    assert arc.residual.max() <= 1e-9


def test_envelope_ballistic_arc():
    fam = ballistic(G, V)
    x0 = 5.0
    z0 = np.arctan(V**2 / (G * x0))
    q = [q for q in discriminant(fam, [[4.9, 5.1], [3, 5], [z0 - 0.05, z0 + 0.05]], grid=6)
         if q.certified_envelope][0]
    arc = envelope_parametrization(fam, q, delta_z=0.1)
    # closed-form intersection of two trajectories
    x_exact = 2 * V**2 / (G * (np.tan(arc.z) + np.tan(q.z)))
    assert np.allclose(arc.x, x_exact, atol=1e-9)
    assert np.abs(fam(arc.x, arc.y, q.z)).max() <= 1e-9
    assert arc.residual.max() <= 1e-9


def test_envelope_requires_certified():
    fam = custom_poly([[1, 0, 1, 0], [-1, 0, 0, 2]])
    q = discriminant(fam, [[-1, 1], [-1, 1], [-1, 1]])[0]
    with pytest.raises(PreconditionError):
        envelope_parametrization(fam, q)


@pytest.mark.parametrize("f, branch", [
    (lambda l, x: l * x - x**2, lambda x: x),
    (lambda l, x: np.sin(l) * x, lambda x: 0 * x),
    (lambda l, x: l * x - x**3, lambda x: x**2),
])
def test_duality_branches(f, branch):
    br = duality_check(f, 0.0)
    assert np.allclose(br.lam, branch(br.x), atol=1e-9)
    assert br.residual.max() <= 1e-9


def test_duality_hypotheses():
    with pytest.raises(HypothesisViolated):
        duality_check(lambda l, x: x + l * x, 0.0)
    with pytest.raises(HypothesisViolated):
        duality_check(lambda l, x: x**2, 0.0)


def test_family_json_and_csv():
    fam = family_from_dict({"kind": "custom_poly", "coeffs": [[1, 0, 1, 0], [-1, 1, 0, 1]]})
    assert fam(2.0, 3.0, 0.5) == pytest.approx(2.0)
    with pytest.raises(InputError):
        family_from_dict({"kind": "spiral"})
    pts = discriminant(extremal(), [[2.5, 3.5], [-1, 1], [0.5, 1.5]], grid=3)
    text = discriminant_csv(pts)
    assert text.splitlines()[0] == "x,y,z,delta,certified"
