"""Equilibrium counts over the (w1', w2) plane of the quasilinear pair.

Prints a character map: '.' one equilibrium, '3' three. The three-equilibrium
wedge closes at the cusp (7/9, 7/9); its edges are the fold curves on which
crises occur.
"""
import numpy as np

from eqcrisis import enumerate_fiber, quasilinear_pair

n = 31
w1p = np.linspace(0.70, 0.85, n)
w2 = np.linspace(0.70, 0.85, n)
print("w2 \\ w1'  " + f"{w1p[0]:.3f}" + " " * (n - 10) + f"{w1p[-1]:.3f}")
for b in w2[::-1]:
    row = ""
    for a in w1p:
        k = len(enumerate_fiber(quasilinear_pair(omega1_second=a, omega2_first=b), grid=60))
        row += {1: ".", 3: "3"}.get(k, str(k))
    print(f"{b:.4f}     {row}")
print("\ncusp at w1' = w2 = 7/9 =", round(7 / 9, 6))
