import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixpde.reduction import (EquationSystem, ParameterSet, PlanError, assemble_symbol,
                              auto_parameters, build_plan, default_parameters, invert_symbol,
                              plan_dump, pole_scan, reduce_time_pencil, scalar_closed_form,
                              validate_parameters)


def lu_det(M):
    """Determinant by Gaussian elimination with partial pivoting, in plain Python."""
    a = [[complex(v) for v in row] for row in M]
    n = len(a)
    det = 1 + 0j
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(a[i][k]))
        if abs(a[p][k]) == 0:
            return 0j
        if p != k:
            a[k], a[p] = a[p], a[k]
            det = -det
        det *= a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] / a[k][k]
            for j in range(k, n):
                a[i][j] -= f * a[k][j]
    return det


def time_resolved(m, dim):
    return build_plan(EquationSystem(m, dim, tuple(f"u{j + 1}_t" for j in range(m))))


def heat_plan():
    return build_plan(EquationSystem(2, 1, ("u1_t", "u2")))


HEAT_HAND = {(0, "u1"): -10.0, (0, "u2_x"): 1.0, (1, "u1_x"): 1.0, (1, "u2_t"): -1e-4}


def test_scalar_symbol_rows():
    plan = time_resolved(1, 1)
    p = ParameterSet.scalar(plan, -2.0, 0.5)
    B1, B2 = assemble_symbol(plan, p, [3.0, 4.0])
    # rows: i xi0 u - (a u + b u_x + v), i xi1 u - u_x
    assert np.allclose(B1, [[3j + 2.0, -0.5], [4j, -1.0]])
    assert np.allclose(B2, [[1.0], [0.0]])


def test_plan_bookkeeping():
    plan = heat_plan()
    assert plan.r == 1 and plan.n1 == 4
    assert plan.system.rhs_order == ("u1", "u2_t", "u1_x", "u2_x")
    assert list(plan.perm) == [0, 1, 2, 3]


def test_system_validation():
    with pytest.raises(PlanError):
        EquationSystem(1, 1, ("u1_t", "u1"))
    with pytest.raises(PlanError):
        EquationSystem(1, 1, ("u1_y",))
    with pytest.raises(PlanError):
        EquationSystem(2, 1, ("u1_t", "u2_t"), ("u1_x", "u1", "u2", "u2_x"))
    with pytest.raises(PlanError):
        EquationSystem(1, 1, ("u1_t",), ("u1", "u1"))


def test_closed_form_matches_generic_inverse():
    plan = time_resolved(1, 3)
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c, d = rng.normal(size=4)
        xi = rng.normal(size=(4, 50)) * 5
        B1, _ = assemble_symbol(plan, ParameterSet.scalar(plan, a, b, c, d), list(xi))
        a1, inv = scalar_closed_form(a, b, c, d, list(xi))
        gen, sing = invert_symbol(B1)
        assert not sing.any()
        assert np.allclose(np.linalg.det(B1), a1, rtol=1e-12)
        assert np.allclose(gen, inv, rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 4), dim=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_det_matches_lu_oracle(m, dim, seed):
    rng = np.random.default_rng(seed)
    plan = time_resolved(m, dim)
    p = ParameterSet(rng.normal(size=(m, plan.n1)))
    xi = rng.normal(size=dim + 1) * 3
    B1, _ = assemble_symbol(plan, p, list(xi))
    ref = lu_det(B1)
    assert abs(np.linalg.det(B1) - ref) <= 1e-10 * max(1.0, abs(ref))


@settings(max_examples=25, deadline=None)
@given(m=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_time_resolved_det_reduces_to_small_matrix(m, seed):
    # det B1 = det(A + i xi1 B - i xi0 E) with C = (A | B)
    rng = np.random.default_rng(seed)
    plan = time_resolved(m, 1)
    C = rng.normal(size=(m, 2 * m))
    xi = rng.normal(size=2) * 4
    B1, _ = assemble_symbol(plan, ParameterSet(C), list(xi))
    small = C[:, :m] + 1j * xi[1] * C[:, m:] - 1j * xi[0] * np.eye(m)
    assert np.linalg.det(B1) == pytest.approx(np.linalg.det(small), rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_slot_order_only_permutes_columns(seed):
    # reordering the derivative slots of Z1 permutes columns of B1: |det| is unchanged
    rng = np.random.default_rng(seed)
    base = EquationSystem(2, 1, ("u1_t", "u2_t"))
    order = list(base.rhs_order)
    tail = order[2:]
    rng.shuffle(tail)
    other = EquationSystem(2, 1, ("u1_t", "u2_t"), tuple(order[:2] + tail))
    p1, p2 = build_plan(base), build_plan(other)
    vals = {(j, s): rng.normal() for j in range(2) for s in order}
    xi = list(rng.normal(size=2))
    B1a, _ = assemble_symbol(p1, ParameterSet.from_slots(p1, vals), xi)
    B1b, _ = assemble_symbol(p2, ParameterSet.from_slots(p2, vals), xi)
    cols = lambda B: sorted(tuple(np.round(np.r_[c.real, c.imag], 12)) for c in B.T)  # noqa: E731
    assert cols(B1a) == cols(B1b)
    assert abs(np.linalg.det(B1a)) == pytest.approx(abs(np.linalg.det(B1b)), rel=1e-10)


def test_permutation_sign_matches_matrix_det():
    systems = [EquationSystem(2, 1, ("u1_t", "u2")), EquationSystem(2, 1, ("u2_x", "u1_t")),
               EquationSystem(2, 2, ("u1", "u2_y")), EquationSystem(3, 1, ("u3", "u1_x", "u2_t"))]
    for s in systems:
        plan = build_plan(s)
        P = plan.permutation_matrix()
        assert np.array_equal(P @ P.T, np.eye(plan.n1))
        assert plan.permutation_sign() == round(np.linalg.det(P))


def test_singular_frequencies_are_masked():
    plan = time_resolved(1, 1)
    p = ParameterSet.scalar(plan, 0.0, 0.0)
    B1, _ = assemble_symbol(plan, p, [np.array([0.0, 1.0]), np.array([0.0, 0.0])])
    inv, sing = invert_symbol(B1)
    assert list(sing) == [True, False]
    assert np.all(inv[0] == 0)


def test_validate_scalar_sign_convention():
    plan = time_resolved(1, 1)
    good = validate_parameters(plan, ParameterSet.scalar(plan, -1.0, 0.3))
    bad = validate_parameters(plan, ParameterSet.scalar(plan, 1.0, 0.3))
    assert good.causal and good.eigenvalues == pytest.approx([-1.0])
    assert not bad.causal and bad.reason


def test_validate_systems():
    plan = time_resolved(2, 1)
    A = np.array([[-1.0, 0.5], [0.0, -2.0]])
    rep = validate_parameters(plan, ParameterSet(np.hstack([A, np.eye(2)])))
    assert rep.causal and sorted(rep.eigenvalues.real) == pytest.approx([-2, -1])
    rep = validate_parameters(heat_plan(), ParameterSet.from_slots(heat_plan(), HEAT_HAND),
                              [np.linspace(-50, 50, 11)])
    assert rep.ok
    assert sorted(rep.eigenvalues.real) == pytest.approx([-1e4, -10.0])


def test_parabolic_split_without_time_weight_is_rejected():
    # tau = 0 makes A05 singular: the algebraic equation carries no time derivative
    vals = dict(HEAT_HAND)
    vals[(1, "u2_t")] = 0.0
    plan = heat_plan()
    rep = validate_parameters(plan, ParameterSet.from_slots(plan, vals))
    assert not rep.causal


def test_reduce_time_pencil_factorises_det():
    plan = heat_plan()
    p = ParameterSet.from_slots(plan, HEAT_HAND)
    A05, B05, phi = reduce_time_pencil(plan, p)
    for w in (0.0, 1.7, -20.0):
        B1, _ = assemble_symbol(plan, p, [w, 0.0])
        lhs = np.linalg.det(B1)
        rhs = np.linalg.det(1j * w * A05 - B05) * phi
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_pole_scan_reports_decay_rate():
    plan = time_resolved(1, 1)
    _, decay = pole_scan(plan, ParameterSet.scalar(plan, -1.0, 3.0), [np.linspace(-9, 9, 7)])
    assert decay == pytest.approx(1.0)


def test_pole_scan_catches_backward_diffusion():
    # flipping the flux sign passes the zero-frequency test but not the scan
    vals = dict(HEAT_HAND)
    vals[(0, "u2_x")] = -1.0
    plan = heat_plan()
    rep = validate_parameters(plan, ParameterSet.from_slots(plan, vals), [np.linspace(-50, 50, 11)])
    assert rep.causal and rep.pole_scan_ok is False and not rep.ok


def test_default_and_auto_parameters():
    plan = heat_plan()
    d = default_parameters(plan, 0.5, 1e-3)
    assert d.coeffs[0, 0] == -2.0 and d.coeffs[1, 1] == -1e-3
    J = np.array([[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 0.0]])
    p = auto_parameters(plan, 0.5, J, [np.linspace(-20, 20, 9)], 1e-3)
    assert p.note == "auto"
    assert validate_parameters(plan, p).causal


def test_parameters_are_read_only():
    p = ParameterSet(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        p.coeffs[0, 0] = 1.0
    with pytest.raises(ValueError):
        ParameterSet(np.array([[np.nan, 0.0]]))


GOLDEN = """\
plan m=2 dim=1 r=1 n1=4
eq1: u1_t
eq2: u2
Z1: u1 u2_t u1_x u2_x
P: 0 1 2 3
A00: -10 0 0 1 1 0
A00: 0 1 0 0 0 0
A0: 1 0 0 0 0 0
A0: 0 0 1 0 0 1
A01: 0 0 1 0 0 0
A01: 0 0 0 1 0 0
C[1]: -10 0 0 1
C[2]: 0 0 1 0
"""


def test_plan_dump_golden():
    plan = heat_plan()
    p = ParameterSet.from_slots(plan, {(0, "u1"): -10.0, (0, "u2_x"): 1.0, (1, "u1_x"): 1.0})
    text = plan_dump(plan, p)
    assert text == GOLDEN
    assert plan_dump(plan, p) == text


def test_scalar_shorthand_rejects_missing_axes():
    plan = time_resolved(1, 1)
    with pytest.raises(ValueError):
        ParameterSet.scalar(plan, -1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ParameterSet.scalar(time_resolved(2, 1), -1.0)


def test_every_slot_combination_builds():
    for lhs in itertools.product(["u1_t", "u1", "u1_x"], ["u2_t", "u2", "u2_x"]):
        plan = build_plan(EquationSystem(2, 1, lhs))
        assert plan.n1 == 4 and sorted(plan.perm) == [0, 1, 2, 3]
