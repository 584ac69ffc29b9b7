import dataclasses
import warnings

import numpy as np
import pytest

from fixpde import builtin, solve_problem
from fixpde.expr import DomainFault, eval_expression
from fixpde.fixedpoint import SolverConfig, evaluate_psi, extract_solution
from fixpde.pipeline import exact_on_grid, relative_error
from fixpde.problems import load_problem_text
from fixpde.reduction import ParameterSet

TEMPLATE = """\
[domain]
extent = 1
horizon = {T}
[system]
u1_t = {rhs}
[initial]
u1 = {u0}
[boundary.left]
u1 = {face}
[boundary.right]
u1 = {face}
{extra}
"""


def scalar_problem(rhs, u0, face, T=0.5, extra=""):
    return load_problem_text(TEMPLATE.format(rhs=rhs, u0=u0, face=face, T=T, extra=extra))


def test_zero_residual_returns_w1_in_one_step():
    p = scalar_problem("-u1 - 0.5*u1_x", "sin(pi*x)", "exp(-t)*sin(pi*(x - 0.5*t))",
                       extra="[params]\nmode = manual\na = -1\nb = -0.5")
    s = solve_problem(p, resolution=(32, 32))
    assert s.report.iterations == 1 and s.report.converged
    assert s.report.history == [0.0]
    assert np.array_equal(s.Z1, s.kernels.w1)


def test_psi_for_reaction_and_burgers():
    for name, expect in [("reaction_cubic", lambda u, ux, a, b: u - u ** 3 - a * u - b * ux),
                         ("burgers", lambda u, ux, a, b: -u * ux - a * u - b * ux)]:
        p = builtin(name)
        plan = p.plan()
        params = ParameterSet.scalar(plan, -1.5, -0.25)
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(2, 4, 5))
        coords = [np.linspace(0, 0.4, 4)[:, None], np.linspace(0, 1, 5)[None, :]]
        psi = evaluate_psi(Z, p, params, plan, coords)
        assert np.allclose(psi[0], expect(Z[0], Z[1], -1.5, -0.25), rtol=1e-14)


def test_reaction_converges_monotonically():
    s = solve_problem(builtin("reaction_linear"), resolution=(64, 64))
    h = s.report.history
    assert s.report.converged and h[-1] <= 1e-8
    assert all(b < a for a, b in zip(h, h[1:]))
    assert s.report.max_contraction < 1


def test_interior_residual_tracks_tolerance():
    p = builtin("reaction_cubic")
    loose = solve_problem(p, resolution=(64, 64), tol=1e-4)
    tight = solve_problem(p, resolution=(64, 64), tol=1e-10)
    assert tight.report.interior_residual < loose.report.interior_residual
    # one more Picard step changes Z by at most the last update times the contraction
    assert tight.report.interior_residual < 1e-8


@pytest.mark.parametrize("name", ["transport", "reaction_cubic"])
def test_derivative_slot_agrees_with_field(name):
    s = solve_problem(builtin(name), resolution=(128, 128))
    u, ux = s.u[0], s.derivatives["u1_x"]
    g = np.gradient(u, s.grid.spacings[1], axis=1)
    inner = (slice(4, -4), slice(4, -4))
    assert np.linalg.norm((ux - g)[inner]) < 0.02 * np.linalg.norm(g[inner])


def test_corrupted_outflow_raises_exterior_residual():
    p = builtin("transport")
    clean = solve_problem(p, resolution=(64, 64))
    right = p.boundary["right"][0]
    def bad(t, x):
        return eval_expression(right, {"t": t, "x": x}) + 0.1 * np.sin(4 * np.pi * t)

    q = dataclasses.replace(p, boundary={"left": p.boundary["left"], "right": [bad]})
    dirty = solve_problem(q, resolution=(64, 64))
    assert dirty.report.converged
    assert dirty.report.exterior_residual > clean.report.exterior_residual


def test_blow_up_is_reported_and_best_iterate_kept():
    p = scalar_problem("u1^2", "3", "3", T=1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = solve_problem(p, resolution=(32, 32))
    assert s.report.status in ("diverged", "numeric_fault")
    assert not s.report.converged
    assert np.all(np.isfinite(s.u))
    assert s.report.best_iteration >= 1


def test_domain_fault_is_reported():
    p = scalar_problem("-sqrt(u1)", "0.5 - x", "0.5 - x",
                       extra="[params]\nmode = manual\na = -2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # the automatic band limit probes f at the initial state and hits the fault first
        with pytest.raises(DomainFault):
            solve_problem(p, resolution=(16, 16))
        s = solve_problem(p, resolution=(16, 16), band_limit="none")
    assert s.report.status == "numeric_fault"
    assert "iteration 1" in s.report.message


def test_anderson_mixing_converges_to_same_fixed_point():
    p = builtin("reaction_cubic")
    plain = solve_problem(p, resolution=(64, 64))
    mixed = solve_problem(p, resolution=(64, 64), anderson=3)
    assert mixed.report.converged
    assert mixed.report.iterations <= plain.report.iterations
    assert np.allclose(mixed.u, plain.u, atol=1e-6)


def test_heat_extraction_rebuilds_resolved_component():
    p = builtin("heat_reduced_1d")
    s = solve_problem(p, resolution=(64, 64))
    assert s.report.converged
    l2, _ = relative_error(s.u, exact_on_grid(p, s.grid))
    assert l2 < 0.05
    with pytest.raises(ValueError):
        extract_solution(s.Z1[(slice(None),) + s.grid.interior], s.plan)


def test_solver_config_validation():
    for bad in ({"rel_tolerance": 0}, {"damping": 0}, {"damping": 1.5}, {"max_iterations": 0},
                {"divergence_factor": 1}, {"anderson": -1}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_damping_reaches_same_solution():
    p = builtin("reaction_linear")
    a = solve_problem(p, resolution=(32, 32))
    b = solve_problem(p, resolution=(32, 32), damping=0.7)
    assert b.report.converged and b.report.iterations > a.report.iterations
    assert np.allclose(a.u, b.u, atol=1e-7)
