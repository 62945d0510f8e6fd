"""
Multipliers near the edge of the target
=======================================

With ``nu = (delta_{-b} + delta_b) / 2`` and a source atom at ``x`` close to
``b``, the multiplier ``h(x) = log((b - x)/(b + x)) / 2b`` diverges.  The
solver keeps ``|h| <= h_max`` and says so when the cap is hit.
"""

from mbridge import SolverConfig, make_instance, solve, validate_measure

nu = validate_measure([-0.5, 0.5], [0.5, 0.5])

# %%
for k in (1, 2, 4, 8):
    a = 0.5 - 10.0 ** -k
    inst = make_instance(validate_measure([-a, a], [0.5, 0.5]), nu)
    rep = solve(inst)
    print(f"x = 0.5 - 1e-{k}: h = {rep.potentials.h[1]:9.3f}, converged={rep.converged}")

# %%
# A small cap stops h early; the report flags the rows and does not converge.
inst = make_instance(validate_measure([-0.4999, 0.4999], [0.5, 0.5]), nu)
rep = solve(inst, SolverConfig(h_max=3.0, max_iter=200))
print("converged:", rep.converged)
for w in rep.warnings:
    print("warning:", w)

# %%
# Atoms sitting on the target atoms: the pair is not irreducible and the
# rows become point masses; h runs into the default cap.
inst = make_instance(validate_measure([-0.5, 0.0, 0.5], [0.25, 0.5, 0.25]), nu)
rep = solve(inst)
print(inst.feasibility.detail)
print(rep.coupling.weights.round(6))
print(rep.warnings)
