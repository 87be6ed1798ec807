"""Degree counting and bifurcation from a trivial branch.

The natural projection has degree one: equilibria come in odd numbers
with indices summing to +1. A sign change of det D_u h(t, 0) along the
trivial branch forces a bifurcation.
"""
import numpy as np

from eqcrisis import (degree, degree_of_natural_projection, detect_bifurcation,
                      enumerate_fiber, quasilinear_pair)

e = quasilinear_pair()
signs = [int(np.sign(-r.jacobian[0, 0])) for r in enumerate_fiber(e).reports]
print("indices of the three equilibria:", signs, "-> degree", degree_of_natural_projection(e))

for name, f in [("x^3", lambda x: x**3), ("x^2 - 1/4", lambda x: x**2 - 0.25),
                ("x^3 - x", lambda x: x**3 - x)]:
    res = degree(f, [-2, 2])
    print(f"deg({name}, [-2, 2], 0) = {res.value:+d} from {len(res.zeros)} zeros")

for name, h in [("t u - u^3", lambda t, u: t * u - u**3),
                ("(1 + t^2) u", lambda t, u: (1 + t**2) * u)]:
    br = detect_bifurcation(h, (-1, 1))
    print(f"{name}: " + (", ".join(f"[{b.lo:.2e}, {b.hi:.2e}]" for b in br) or "no bracket"))
