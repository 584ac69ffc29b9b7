import warnings

import numpy as np
import pytest

from fixpde.grid import build_grid
from fixpde.pipeline import resolve_parameters
from fixpde.problems import (BUILTINS, ProblemFileError, builtin, compatibility_warnings,
                             load_problem, load_problem_text, resolve_problem, rhs_jacobian,
                             sample_boundary)
from fixpde.reduction import validate_parameters

GOOD = """\
# advected bump
[domain]
dim = 1
extent = 2.0
horizon = 0.5

[system]
u1_t = -0.5*u1_x

[initial]
u1 = exp(-(x - 1)^2 / 0.01)

[boundary.left]
u1 = 0

[boundary.right]
u1 = 0

[params]
mode = manual
a = -2
b = -0.5

[solver]
resolution = 32, 32
tol = 1e-9
band_limit = none
"""


def test_parse_problem_file():
    p = load_problem_text(GOOD, "bump")
    assert p.domain.extents == (2.0,) and p.domain.horizon == 0.5
    assert p.system.lhs == ("u1_t",)
    assert p.params == {(0, "u1"): -2.0, (0, "u1_x"): -0.5}
    assert p.solver == {"resolution": (32, 32), "tol": 1e-9, "band_limit": "none"}
    assert p.fingerprint() == load_problem_text(GOOD, "bump").fingerprint()


def test_load_from_path(tmp_path):
    f = tmp_path / "bump.ini"
    f.write_text(GOOD)
    assert resolve_problem(str(f)).name == "bump"


def _error(text):
    with pytest.raises(ProblemFileError) as info:
        load_problem_text(text)
    return info.value


def test_bad_expression_points_at_value():
    e = _error(GOOD.replace("-0.5*u1_x", "-0.5*u1_q"))
    assert e.line == 8 and e.column == 13


def test_unknown_keys_and_sections():
    assert _error(GOOD.replace("horizon = 0.5", "horizon = 0.5\nspeed = 2")).line == 6
    assert _error(GOOD + "\n[extra]\nx = 1\n").line == 29
    assert _error(GOOD.replace("tol = 1e-9", "tolerance = 1e-9")).line == 26


def test_missing_pieces():
    assert "boundary.right" in str(_error(GOOD.replace("[boundary.right]\nu1 = 0\n", "")))
    assert "horizon" in str(_error(GOOD.replace("horizon = 0.5\n", "")))
    e = _error(GOOD.replace("u1_t = -0.5*u1_x", "u1_y = -0.5*u1_x"))
    assert e.line == 8


def test_parameter_errors():
    assert _error(GOOD.replace("a = -2", "a = fast")).line == 21
    assert _error(GOOD.replace("mode = manual", "mode = auto")).line == 20
    assert _error(GOOD.replace("a = -2", "eq2.u1 = 1")).line == 21


def test_initial_data_may_not_depend_on_time():
    assert _error(GOOD.replace("u1 = exp(-(x - 1)^2 / 0.01)", "u1 = t")).line == 11


def test_builtin_lookup():
    assert resolve_problem("builtin:burgers").name == "burgers"
    with pytest.raises(KeyError):
        builtin("nope")


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_every_builtin_validates_under_auto(name):
    p = builtin(name)
    grid = build_grid(p.domain, (32,) * (p.dim + 1), (8, 2))
    plan = p.plan()
    params = resolve_parameters(p, plan, grid)
    assert params.note == "auto"
    rep = validate_parameters(plan, params, [grid.frequencies(1)])
    assert rep.ok, rep.reason
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bd = sample_boundary(p, grid)
    assert bd.initial.shape == (p.m, 32)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_exact_solutions_match_data(name):
    p = builtin(name)
    grid = build_grid(p.domain, (16,) * (p.dim + 1), 2)
    x = grid.centers(1)[:16]
    ex = np.asarray(p.exact(np.zeros_like(x), x))
    assert np.allclose(ex, sample_boundary(p, grid).initial, atol=1e-12)


def test_jacobian_of_linear_rhs():
    p = builtin("transport")
    grid = build_grid(p.domain, (16, 16), 2)
    J = rhs_jacobian(p, grid, p.plan())
    assert J.tolist() == [[0.0, -1.0]]


def test_compatibility_warning_on_mismatch():
    p = load_problem_text(GOOD.replace("[boundary.left]\nu1 = 0", "[boundary.left]\nu1 = 1"))
    grid = build_grid(p.domain, (16, 16), 2)
    assert compatibility_warnings(p, grid)
    with pytest.warns(UserWarning):
        sample_boundary(p, grid)
