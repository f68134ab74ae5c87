"""
Spin squeezing in the thermodynamic limit
=========================================

Solve the quadratic fluctuation model (third quantization + Lyapunov) along a
cut through phase II, check one point against a brute-force two-mode Fock
truncation, and compare with finite-N HEOM.
"""

import numpy as np

from nmlmg import heom, observables, spin_algebra, thermolimit
from nmlmg.model import ModelParams

h, kappa, omega = 0.5, 1.0, 1.0
gamma = h / (2 * thermolimit.q2_of(kappa, omega))
base = ModelParams(V=0.0, h=h, gamma=gamma, kappa=kappa, omega=omega)

for v in np.linspace(-0.6, 0.9, 7):
    print(f"V/h = {v:+.2f}: xi2 = " + ", ".join(f"{ph.value}: {x:.4f}"
                                                for ph, x in thermolimit.xi2_auto(base.with_(V=v * h)).items()))

###############################################################################
# Independent check: steady-state moments of the truncated two-mode Lindbladian.

p = ModelParams(V=0.2, h=1.0, gamma=0.2, kappa=0.1, omega=1.0)
qm = thermolimit.quadratic_model(p, "II")
Zf = thermolimit.fock_moments(qm.H, qm.K, qm.M, cutoff=12)
print("max |Z_fock - Z_lyapunov| =", np.abs(Zf - qm.Z).max())

###############################################################################
# Finite N approaches the thermodynamic value away from critical points.

p = base.with_(V=-0.4 * h)
print("thermodynamic xi2:", thermolimit.xi2_thermo(p, "II"))
for N in (8, 16):
    rho = heom.steady_state(heom.build_liouvillian(p.with_(N=N), 8)).rho
    print(f"  N = {N}: xi2 = {observables.squeezing_xi2(rho, spin_algebra.build(N)):.5f}")
