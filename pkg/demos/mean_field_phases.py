"""
Mean-field phases of the dissipative LMG model
==============================================

Classify a coarse (V/h, gamma*q2/4h) grid by the stable fixed points of the
rescaled mean-field equations and print it as a character map.
"""

import numpy as np

from nmlmg import meanfield
from nmlmg.model import ModelParams, critical_geometry

template = ModelParams(V=0.0, h=1.0, gamma=1.0, kappa=1.0, omega=1.0)  # q2 = 1/2
v = np.linspace(-3, 3, 49)
g = np.linspace(0.0, 2.0, 11)
pd = meanfield.phase_diagram(v, g, template)

symbol = {"I": "x", "II": ".", "III": "y", "I+II": "a", "II+III": "b", "I+III": "c",
          "I+II+III": "*", meanfield.FIRST_ORDER_LABEL: "|", meanfield.BOUNDARY_LABEL: "+"}
print("rows: gamma*q2/4h from 2 (top) to 0; columns: V/h from -3 to 3")
print("x: I, .: II, y: III, |: first-order line, +: marginal (no stable point)")
for i in reversed(range(len(g))):
    print(f"{g[i]:4.1f} " + "".join(symbol.get(l, "?") for l in pd.labels[i]))

###############################################################################
# The two second-order lines merge at the tricritical point V = h, gamma*q2/4h = 1.

for gq in (0.25, 1.0, 1.25):
    p = template.with_(gamma=4 * gq * template.h / template.q2)
    geo = critical_geometry(p)
    print(f"gamma*q2/4h = {gq}: V1/h = {geo.V1:.3f}, V2/h = {geo.V2:.3f}, "
          f"first-order line {geo.first_order_line}, regime {geo.regime.name}")

###############################################################################
# Fixed points and their stability at one point per phase.

for V in (-2.0, 0.0, 2.0):
    fps = meanfield.fixed_points(template.with_(V=V))
    print(f"V/h = {V:+.1f}: " + ", ".join(f"{fp.label}{'(stable)' if fp.stable else ''}" for fp in fps.points))
