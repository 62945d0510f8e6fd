"""
The two-point bridge
====================

When the target has two atoms ``+-b`` with equal mass, a martingale coupling
is forced: the row at ``x`` must put ``(b + x) / 2b`` on ``b``.  The bridge
therefore has a closed form, which makes it the first thing to check a solver
against.
"""

import math

import numpy as np

from mbridge import (
    coupling_distance,
    dykstra_solve,
    make_instance,
    solve,
    two_point_closed_form,
    validate_measure,
)

# %%
# Source atoms at +-1/4, target atoms at +-1/2.
mu = validate_measure([-0.25, 0.25], [0.5, 0.5])
nu = validate_measure([-0.5, 0.5], [0.5, 0.5])
inst = make_instance(mu, nu, "two-point")
print(inst.feasibility)

# %%
# Solve it. The coupling should be [[3/8, 1/8], [1/8, 3/8]].
rep = solve(inst)
print("coupling:\n", rep.coupling.weights)
print("iterations:", rep.iterations, "gap:", rep.gap)

# %%
# The multiplier of the martingale constraint is log((b - x)/(b + x)) / 2b,
# which is -log 3 at x = 1/4.  The canonical gauge (mean-zero h and g) keeps
# it as is because the instance is symmetric.
print("h:", rep.potentials.h, "expected:", [math.log(3), -math.log(3)])

# %%
# Three routes to the same coupling.
closed, closed_pot = two_point_closed_form(inst.mu, 0.5)
oracle = dykstra_solve(inst)
print("TV(solver, closed form) =", coupling_distance(rep.coupling, closed))
print("TV(solver, Dykstra)     =", coupling_distance(rep.coupling, oracle))
print("max |f - f_closed|      =", np.abs(rep.potentials.f - closed_pot.f).max())

# %%
# The minimal entropy is the 4-term sum over the coupling cells.
print("primal:", rep.primal, "dual:", rep.dual)
