import dataclasses
import math

import numpy as np
import pytest

from fixpde import builtin
from fixpde.grid import DomainSpec, build_grid
from fixpde.oracles import (CFLError, OracleNotApplicable, characteristics_burgers,
                            characteristics_transport, classify_rhs, duhamel_scalar,
                            finite_difference_reference, ode_pointwise, shock_time)
from fixpde.pipeline import exact_on_grid, relative_error
from fixpde.problems import load_problem_text


def grid(n=32, T=1.0, L=1.0, nt=None):
    return build_grid(DomainSpec(1, (L,), T), (nt or n, n), 2)


def centres(g):
    return np.meshgrid(g.centers(0)[: g.points[0]], g.centers(1)[: g.points[1]], indexing="ij")


def with_horizon(p, T):
    return dataclasses.replace(p, domain=DomainSpec(1, p.domain.extents, T, p.m))


def test_transport_speed_zero_is_identity():
    g = grid()
    r = characteristics_transport("sin(x)", 0.0, "0", g)
    tt, xx = centres(g)
    assert np.array_equal(r.u_ref[0], np.sin(xx))
    assert r.valid.all()


def test_transport_linear_profile():
    g = grid()
    r = characteristics_transport("x", 1.0, "-t", g)
    tt, xx = centres(g)
    assert np.allclose(r.u_ref[0], xx - tt, atol=1e-15)


def test_transport_matches_builtin_exact():
    p = builtin("transport")
    g = build_grid(p.domain, (64, 64), 2)
    r = characteristics_transport(p.initial[0], 1.0, "exp(-((-t - 0.3)/0.07)^2)", g)
    assert np.allclose(r.u_ref, exact_on_grid(p, g), atol=1e-14)


def test_burgers_constant_and_linear_profiles():
    g = grid()
    r = characteristics_burgers("0.3", g)
    assert np.allclose(r.u_ref, 0.3) and r.valid.all()
    r = characteristics_burgers("x", g)
    tt, xx = centres(g)
    assert math.isinf(r.info["t_shock"])
    assert np.allclose(r.u_ref[0], xx / (1 + tt), atol=1e-13) and r.valid.all()


def test_burgers_matches_newton_solution():
    p = builtin("burgers")
    g = build_grid(p.domain, (64, 64), 2)
    r = characteristics_burgers(p.initial[0], g)
    assert r.info["t_shock"] == pytest.approx(2 / math.pi, rel=1e-6)
    assert r.valid.all()  # T is half the shock time
    assert np.allclose(r.u_ref, exact_on_grid(p, g), atol=1e-13)


def test_burgers_mask_after_shock():
    g = grid(T=1.0)
    r = characteristics_burgers("0.5 + 0.25*sin(2*pi*x)", g)
    tt, _ = centres(g)
    assert np.array_equal(r.valid[0], tt <= 0.9 * 2 / math.pi)
    assert shock_time("1 - x", 1.0) == pytest.approx(1.0)


def test_burgers_agrees_with_fine_lax_friedrichs():
    p = with_horizon(builtin("burgers"), 0.1)
    g = build_grid(p.domain, (20, 64), 2)
    ref = characteristics_burgers(p.initial[0], g)
    lf = finite_difference_reference(p, g, scheme="lax_friedrichs", refine=16)
    assert lf.info["scheme"] == "lax_friedrichs"
    assert relative_error(lf.u_ref, ref.u_ref, ref.valid)[0] < 0.01


def test_ode_examples():
    g = grid(8, T=1.0)
    r = ode_pointwise("0", "sin(x)", g)
    tt, xx = centres(g)
    assert np.array_equal(r.u_ref[0], np.broadcast_to(np.sin(xx), tt.shape))
    g = build_grid(DomainSpec(1, (1.0,), 1.0), (4, 4), 2)
    r = ode_pointwise("u1", "1", g)
    # last centre is t = 7/8; step on to t = 1 with the same closed form
    assert r.u_ref[0, -1, 0] * math.exp(1 / 8) == pytest.approx(math.e, abs=1e-8)
    assert r.u_ref[0, -1, 0] == pytest.approx(math.exp(7 / 8), abs=1e-8)


def test_ode_step_halving():
    g = grid(8, T=1.0)
    a = ode_pointwise("u1 - u1^3", "0.1", g, substeps=10)
    b = ode_pointwise("u1 - u1^3", "0.1", g, substeps=20)
    assert np.max(np.abs(a.u_ref - b.u_ref)) < 1e-8


def test_ode_blow_up_is_masked():
    g = grid(8, T=1.0)
    r = ode_pointwise("u1^2", "3", g)
    tt, _ = centres(g)
    assert not r.valid[0][tt > 0.34].any() and r.valid[0][tt < 0.3].all()


def test_duhamel_examples():
    g = grid(16)
    assert np.all(duhamel_scalar(np.zeros((16, 16)), -1.0, 0.0, g) == 0)
    out = duhamel_scalar(np.ones((16, 16)), -2.0, 0.0, g)
    tt, _ = centres(g)
    assert np.allclose(out, (np.exp(-2 * tt) - 1) / -2, rtol=2e-3)


def test_cfl_refusal():
    p = builtin("transport")
    g = build_grid(p.domain, (64, 64), 2)
    dx = 1 / 64
    with pytest.raises(CFLError) as info:
        finite_difference_reference(p, g, dt=1.5 * dx)
    assert info.value.required_dt == pytest.approx(dx)
    heat = builtin("heat_reduced_1d")
    with pytest.raises(CFLError):
        finite_difference_reference(heat, build_grid(heat.domain, (64, 64), 2), dt=1e-3)


def test_transport_upwind_first_order():
    p = load_problem_text("""\
[domain]
extent = 1
horizon = 0.5
[system]
u1_t = -u1_x
[initial]
u1 = sin(2*pi*x)
[boundary.left]
u1 = sin(-2*pi*t)
[boundary.right]
u1 = sin(2*pi*(1 - t))
""")
    g = build_grid(p.domain, (32, 32), 2)
    ref = characteristics_transport(p.initial[0], 1.0, "sin(-2*pi*t)", g)
    errs = [relative_error(finite_difference_reference(p, g, refine=r).u_ref, ref.u_ref)[0]
            for r in (4, 8, 16)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(0.8 < o < 1.2 for o in orders), orders


def test_heat_ftcs_matches_separable_solution():
    p = builtin("heat_reduced_1d")
    g = build_grid(p.domain, (64, 64), 2)
    r = finite_difference_reference(p, g)
    assert r.info["scheme"] == "ftcs" and r.info["ratio"] == pytest.approx(0.4)
    assert relative_error(r.u_ref, exact_on_grid(p, g)[:1])[0] < 1e-3


def test_classification_and_refusal():
    assert classify_rhs(builtin("transport")) == "linear_transport"
    assert classify_rhs(builtin("burgers")) == "burgers"
    assert classify_rhs(builtin("reaction_cubic")) == "reaction"
    assert classify_rhs(builtin("hamilton_jacobi_1d")) == "hamilton_jacobi"
    assert classify_rhs(builtin("heat_reduced_1d")) == "heat_reduced"
    hj = builtin("hamilton_jacobi_1d")
    with pytest.raises(OracleNotApplicable):
        finite_difference_reference(hj, build_grid(hj.domain, (16, 16), 2))


def test_oracles_are_deterministic():
    p = builtin("burgers")
    g = build_grid(p.domain, (32, 32), 2)
    a = finite_difference_reference(p, g).u_ref
    b = finite_difference_reference(p, g).u_ref
    assert a.tobytes() == b.tobytes()
