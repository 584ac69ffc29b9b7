"""Inviscid Burgers before the shock, checked against implicit characteristics.

The quasilinear term makes the residual depend on u_x, so the solver applies a
spatial band limit; the report shows the cutoff it picked.

Run: python demos/burgers.py
"""

from fixpde import builtin, solve_problem
from fixpde.oracles import characteristics_burgers
from fixpde.pipeline import relative_error

problem = builtin("burgers")
sol = solve_problem(problem, resolution=(256, 256))
ref = characteristics_burgers(problem.initial[0], sol.grid)

print(f"shock time {ref.info['t_shock']:.4f}, horizon {problem.domain.horizon:.4f}")
print(f"band limit |xi_x| <= {sol.band_limit:.1f}")
print("update norms:", " ".join(f"{h:.1e}" for h in sol.report.history))
l2, _ = relative_error(sol.u, ref.u_ref, ref.valid)
print(f"relative L2 error on valid cells: {l2:.3%}")
