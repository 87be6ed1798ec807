"""The envelope of all projectile trajectories with launch speed 10 is the
safety parabola y = v^2/2g - g x^2/2v^2."""
import numpy as np

from eqcrisis import ballistic, discriminant, envelope_parametrization

g, v = 9.8, 10.0
fam = ballistic(g, v)
pts = [q for q in discriminant(fam, [[0.5, 9.0], [-5.0, 10.0], [0.05, 1.5]]) if q.certified_envelope]
pts.sort(key=lambda q: q.x)
print(f"{len(pts)} certified envelope points; a few of them:")
print("     x        y      parabola   angle(deg)")
for q in pts[:: max(1, len(pts) // 8)]:
    par = v**2 / (2 * g) - g * q.x**2 / (2 * v**2)
    print(f"  {q.x:6.3f}  {q.y:7.4f}  {par:7.4f}    {np.degrees(q.z):6.2f}")

# neighbouring trajectories meet close to the envelope point
q = pts[len(pts) // 2]
arc = envelope_parametrization(fam, q, delta_z=0.05, samples=5)
print(f"\nintersections of the trajectory at {np.degrees(q.z):.2f} deg with its neighbours:")
for z, x, y in zip(arc.z, arc.x, arc.y):
    print(f"  {np.degrees(z):6.2f} deg -> ({x:.4f}, {y:.4f})")
