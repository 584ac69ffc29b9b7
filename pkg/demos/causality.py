"""Why the sign of the linear coefficient matters.

With a < 0 the kernel lives in t >= 0 and the solution only depends on the
past; with a > 0 it leaks into negative times.  The check below measures the
kernel mass before t = 0 in both cases.

Run: python demos/causality.py
"""

import numpy as np

from fixpde import (BoundaryData, DomainSpec, EquationSystem, ParameterSet, boundary_spectra,
                    build_grid, build_plan, causality_check, synthesize_kernels,
                    validate_parameters)

plan = build_plan(EquationSystem(1, 1, ("u1_t",)))
grid = build_grid(DomainSpec(1, (1.0,), 1.0), (64, 64), (8, 2))
zero = np.zeros((1, 64))
spectra = boundary_spectra(BoundaryData(zero, {"left": zero, "right": zero}), grid)

for a in (-1.0, 1.0):
    params = ParameterSet.scalar(plan, a, -0.5)
    rep = validate_parameters(plan, params)
    kernels = synthesize_kernels(plan, params, spectra, grid, check=False)
    chk = causality_check(kernels)
    print(f"a = {a:+.0f}: eigenvalue {rep.eigenvalues[0].real:+.1f}, causal={rep.causal}, "
          f"mass before t = 0: {chk.far_mass:.1e} -> {'pass' if chk.passed else 'fail'}")
