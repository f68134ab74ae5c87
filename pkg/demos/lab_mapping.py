"""
From a cavity-QED lab point to model parameters
===============================================

Design laser drives and cavity detunings that realize a target model point,
map them forward again, and break one validity condition on purpose.
"""

import warnings

from nmlmg import labmap
from nmlmg.model import ModelParams

target = ModelParams(V=1.3, h=1.0, gamma=2.5, kappa=0.7, omega=1.1, N=50)
lab = labmap.design_lab_point(target, retained="a2")
red = labmap.reduce_to_model(lab)
print("target :", target)
print("mapped :", red.params)
for c in red.report:
    print(f"  condition {c['id']}: {'ok' if c['ok'] else 'FAILED'} ({c['detail']})")

###############################################################################
# Unequal excited-state detunings break the first condition.

broken = labmap.design_lab_point(target, Delta1=1.01 * lab.Delta0)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    try:
        labmap.reduce_to_model(broken)
    except labmap.LabConditionError as exc:
        print("rejected:", exc)
