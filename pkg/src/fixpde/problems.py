"""Problem specifications: built-in registry, problem files and data sampling."""

from __future__ import annotations

import configparser
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .expr import (COORDINATES, DomainFault, ExpressionError, eval_expression,
                   parse_expression, to_text, variables)
from .grid import DomainSpec, SpaceTimeGrid
from .reduction import (EquationSystem, ParameterSet, ReductionPlan, build_plan, parse_slot,
                        slot_name)
from .spectral import FACE_NAMES, BoundaryData

SOLVER_KEYS = {
    "resolution": "resolution",
    "pad": "pad",
    "tol": "tol",
    "max_iter": "max_iter",
    "damping": "damping",
    "band_limit": "band_limit",
    "eps_sing": "eps_sing",
    "anderson": "anderson",
}


class ProblemFileError(ValueError):
    def __init__(self, message, line=0, column=0):
        self.line, self.column = line, column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass
class ProblemSpec:
    """A first-order system with its box, data and parameter choice.

    ``initial`` holds one expression (AST) or callable ``f(x, ...)`` per
    component; ``boundary`` maps face names to such lists, callables taking
    ``(t, x, ...)``.  ``params`` is a :class:`ParameterSet`, ``"auto"`` or a
    dict ``{(eq, slot): value}``.
    """

    name: str
    domain: DomainSpec
    system: EquationSystem
    initial: list
    boundary: dict
    params: object = "auto"
    solver: dict = field(default_factory=dict)
    exact: Callable | None = None
    description: str = ""

    def __post_init__(self):
        if self.domain.components != self.system.m:
            raise ValueError("domain components must equal the number of equations")
        if self.domain.spatial_dim != self.system.dim:
            raise ValueError("domain and system dimensions differ")
        if len(self.initial) != self.system.m:
            raise ValueError("need one initial expression per component")
        for k in range(self.system.dim):
            for name in FACE_NAMES[k]:
                if name not in self.boundary:
                    raise ValueError(f"missing boundary data for face {name!r}")
                if len(self.boundary[name]) != self.system.m:
                    raise ValueError(f"face {name!r} needs one expression per component")

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def dim(self) -> int:
        return self.system.dim

    def plan(self) -> ReductionPlan:
        return build_plan(self.system)

    def fingerprint(self) -> str:
        """Canonical text used for hashing run manifests."""
        parts = [self.name, repr(self.domain), ",".join(self.system.lhs),
                 ",".join(self.system.rhs_order)]
        parts += [to_text(e) for e in self.system.rhs_exprs]
        parts += [_data_text(e) for e in self.initial]
        for face in sorted(self.boundary):
            parts += [f"{face}:{_data_text(e)}" for e in self.boundary[face]]
        p = self.params
        parts.append(p if isinstance(p, str) else repr(getattr(p, "coeffs", p)))
        parts.append(repr(sorted(self.solver.items())))
        return "\n".join(parts)


def _data_text(e) -> str:
    return to_text(e) if not callable(e) else f"<callable {getattr(e, '__name__', 'data')}>"


# -- evaluation ----------------------------------------------------------------

def coordinate_names(dim: int) -> tuple[str, ...]:
    return ("x", "y", "z")[:dim]


def _eval_data(e, env: dict, shape, args):
    if callable(e):
        val = np.asarray(e(*args), dtype=float)
    else:
        val = np.asarray(eval_expression(e, env), dtype=float)
    return np.broadcast_to(val, shape).astype(float)


def sample_initial(problem: ProblemSpec, grid: SpaceTimeGrid) -> np.ndarray:
    """``A1`` on the spatial cell centres, shape ``(m, N_1, ...)``."""
    axes = np.meshgrid(*[grid.centers(k)[: grid.points[k]] for k in range(1, grid.ndim)],
                       indexing="ij")
    env = dict(zip(coordinate_names(grid.dim), axes))
    env["t"] = 0.0
    shape = tuple(grid.points[1:])
    return np.stack([_eval_data(e, env, shape, axes) for e in problem.initial])


def face_coordinates(grid: SpaceTimeGrid, axis: int, upper: bool):
    """Mesh ``(t, x, ...)`` over a face: ``axis`` (1-based spatial) fixed at 0 or L."""
    pts = [grid.centers(0)[: grid.points[0]]]
    for k in range(1, grid.ndim):
        if k != axis:
            pts.append(grid.centers(k)[: grid.points[k]])
    mesh = np.meshgrid(*pts, indexing="ij")
    full = [mesh[0]]
    it = iter(mesh[1:])
    for k in range(1, grid.ndim):
        if k == axis:
            full.append(np.full(mesh[0].shape, grid.lengths[k] if upper else 0.0))
        else:
            full.append(next(it))
    return full


def sample_boundary(problem: ProblemSpec, grid: SpaceTimeGrid, check_compat: bool = True):
    """Sample ``A1`` and ``A3`` into :class:`BoundaryData`."""
    initial = sample_initial(problem, grid)
    faces = {}
    for k in range(1, grid.ndim):
        for upper, name in enumerate(FACE_NAMES[k - 1]):
            mesh = face_coordinates(grid, k, bool(upper))
            env = dict(zip(("t",) + coordinate_names(grid.dim), mesh))
            faces[name] = np.stack([_eval_data(e, env, mesh[0].shape, mesh)
                                    for e in problem.boundary[name]])
    if check_compat:
        for msg in compatibility_warnings(problem, grid):
            warnings.warn(msg, stacklevel=2)
    return BoundaryData(initial, faces)


def compatibility_warnings(problem: ProblemSpec, grid: SpaceTimeGrid,
                           threshold: float = 1e-3) -> list[str]:
    """Faces whose data at ``t -> 0+`` disagrees with the initial data there."""
    out = []
    names = coordinate_names(grid.dim)
    for k in range(1, grid.ndim):
        for upper, face in enumerate(FACE_NAMES[k - 1]):
            mesh = face_coordinates(grid, k, bool(upper))
            sl = [m[0] for m in mesh]
            sl[0] = np.zeros_like(sl[0])
            env = dict(zip(("t",) + names, sl))
            for j in range(problem.m):
                try:
                    a1 = _eval_data(problem.initial[j], env, sl[0].shape, sl[1:])
                    a3 = _eval_data(problem.boundary[face][j], env, sl[0].shape, sl)
                except DomainFault:
                    continue
                gap = float(np.max(np.abs(a1 - a3))) if a1.size else 0.0
                if gap > threshold * (1 + float(np.max(np.abs(a1)))):
                    out.append(f"face {face}, component {j + 1}: initial and boundary data "
                               f"differ by {gap:.3g} at t = 0")
    return out


def slot_bindings(plan: ReductionPlan, Z1: np.ndarray) -> dict:
    return {s: Z1[i] for s, i in plan.z_index.items()}


def evaluate_rhs(problem: ProblemSpec, plan: ReductionPlan, Z1: np.ndarray, coords) -> np.ndarray:
    """``f_j`` evaluated on stacked slot samples ``Z1`` (``(n1, ...)``)."""
    env = slot_bindings(plan, Z1)
    env.update(zip(("t",) + coordinate_names(plan.dim), coords))
    shape = Z1.shape[1:]
    return np.stack([np.broadcast_to(eval_expression(e, env), shape)
                     for e in problem.system.rhs_exprs])


def reference_state(problem: ProblemSpec, grid: SpaceTimeGrid, plan: ReductionPlan):
    """Slot values built from the initial data (time derivatives zero) at ``t = 0``."""
    A1 = sample_initial(problem, grid)
    Z = np.zeros((plan.n1,) + A1.shape[1:])
    for s, i in plan.z_index.items():
        kind, comp = parse_slot(s)
        if kind == "":
            Z[i] = A1[comp]
        elif kind in ("x", "y", "z"):
            ax = "xyz".index(kind)
            Z[i] = np.gradient(A1[comp], grid.spacings[ax + 1], axis=ax)
    axes = np.meshgrid(*[grid.centers(k)[: grid.points[k]] for k in range(1, grid.ndim)],
                       indexing="ij")
    coords = [np.zeros(A1.shape[1:])] + list(axes)
    return Z, coords


def rhs_jacobian(problem: ProblemSpec, grid: SpaceTimeGrid, plan: ReductionPlan,
                 h: float = 1e-6) -> np.ndarray:
    """Mean of ``df_j/dZ1_i`` over the initial state, by central differences."""
    Z, coords = reference_state(problem, grid, plan)
    J = np.zeros((plan.m, plan.n1))
    for i in range(plan.n1):
        zp, zm = Z.copy(), Z.copy()
        zp[i] += h
        zm[i] -= h
        try:
            J[:, i] = ((evaluate_rhs(problem, plan, zp, coords)
                        - evaluate_rhs(problem, plan, zm, coords)) / (2 * h)).reshape(
                plan.m, -1).mean(axis=1)
        except DomainFault:
            J[:, i] = 0.0
    # drop difference-quotient noise so linear terms come out exact
    return np.array([[float(f"{v:.8g}") for v in row] for row in J])


# -- built-in problems ------------------------------------------------------------

def _system(m, dim, lines: list[tuple[str, str]]) -> EquationSystem:
    lhs = tuple(l for l, _ in lines)
    base = EquationSystem(m, dim, lhs)
    allowed = set(base.rhs_order) | set(COORDINATES)
    exprs = tuple(parse_expression(e, allowed) for _, e in lines)
    return EquationSystem(m, dim, lhs, base.rhs_order, exprs)


def _p(text):
    return parse_expression(text)


def _newton_burgers(x, t, u0, du0, iters=60):
    """Root of ``s + u0(s) t = x`` by Newton from ``s = x - u0(x) t`` (pre-shock)."""
    s = x - u0(x) * t
    for _ in range(iters):
        g = s + u0(s) * t - x
        s = s - g / (1 + du0(s) * t)
    return u0(s)


def _burgers_exact(t, x):
    u0 = lambda s: 0.5 + 0.25 * np.sin(2 * np.pi * s)  # noqa: E731
    du0 = lambda s: 0.5 * np.pi * np.cos(2 * np.pi * s)  # noqa: E731
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    return _newton_burgers(x, t, u0, du0)


def _expr_exact(*texts):
    nodes = [_p(s) for s in texts]

    def exact(t, *coords):
        env = dict(zip(("t",) + coordinate_names(len(coords)), (t,) + tuple(coords)))
        shape = np.broadcast_shapes(*[np.shape(v) for v in env.values()])
        return np.stack([np.broadcast_to(eval_expression(n, env), shape) for n in nodes])

    return exact


def _scalar_1d(name, rhs, u0, exact_text, T, description, solver=None, boundary=None):
    system = _system(1, 1, [("u1_t", rhs)])
    bnd = boundary or {"left": [_p(exact_text)], "right": [_p(exact_text)]}
    return ProblemSpec(name, DomainSpec(1, (1.0,), T, 1), system, [_p(u0)], bnd,
                       "auto", dict(solver or {}), _expr_exact(exact_text), description)


def _transport():
    e = "exp(-((x - t - 0.3)/0.07)^2)"
    return _scalar_1d("transport", "-u1_x", "exp(-((x - 0.3)/0.07)^2)", e, 0.5,
                      "u_t + u_x = 0 with a Gaussian bump and exact face data",
                      {"resolution": (256, 256)})


def _reaction_linear():
    return _scalar_1d("reaction_linear", "u1", "sin(pi*x)", "exp(t)*sin(pi*x)", 0.5,
                      "u_t = u", {"resolution": (128, 128)})


def _reaction_cubic():
    e = "0.5*sin(pi*x)*exp(t)/sqrt(1 + (0.5*sin(pi*x))^2*(exp(2*t) - 1))"
    return _scalar_1d("reaction_cubic", "u1 - u1^3", "0.5*sin(pi*x)", e, 0.5,
                      "u_t = u - u^3", {"resolution": (128, 128)})


def _burgers():
    system = _system(1, 1, [("u1_t", "-u1*u1_x")])
    T = 1 / math.pi  # half the shock time 2/pi of the initial profile
    bnd = {"left": [lambda t, x: _burgers_exact(t, x)],
           "right": [lambda t, x: _burgers_exact(t, x)]}
    return ProblemSpec("burgers", DomainSpec(1, (1.0,), T, 1), system,
                       [_p("0.5 + 0.25*sin(2*pi*x)")], bnd, "auto",
                       {"resolution": (256, 256)},
                       lambda t, x: _burgers_exact(t, x)[None],
                       "u_t + u u_x = 0 before the shock; face data from characteristics")


def _hamilton_jacobi():
    return _scalar_1d("hamilton_jacobi_1d", "-0.5*u1_x^2", "0.5*x^2", "x^2/(2*(1 + t))", 0.5,
                      "u_t + H(u_x) = 0 with H(p) = p^2/2", {"resolution": (128, 128)})


def _heat_reduced():
    system = _system(2, 1, [("u1_t", "u2_x"), ("u2", "u1_x")])
    u = "exp(-pi^2*t)*sin(pi*x)"
    v = "pi*exp(-pi^2*t)*cos(pi*x)"
    bnd = {"left": [_p(u), _p(v)], "right": [_p(u), _p(v)]}
    return ProblemSpec("heat_reduced_1d", DomainSpec(1, (1.0,), 0.1, 2), system,
                       [_p("sin(pi*x)"), _p("pi*cos(pi*x)")], bnd, "auto",
                       {"resolution": (128, 128)}, _expr_exact(u, v),
                       "u_t = u_xx written as u_t = v_x, v = u_x")


BUILTINS = {
    "transport": _transport,
    "reaction_linear": _reaction_linear,
    "reaction_cubic": _reaction_cubic,
    "burgers": _burgers,
    "hamilton_jacobi_1d": _hamilton_jacobi,
    "heat_reduced_1d": _heat_reduced,
}


def builtin(name: str) -> ProblemSpec:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}") from None


# -- problem files -------------------------------------------------------------------

_SECTIONS = ("domain", "system", "initial", "params", "solver")
_DOMAIN_KEYS = ("dim", "extent", "horizon", "components")


class _Lines:
    """Map keys of a parsed section back to line numbers."""

    def __init__(self, text):
        self.where = {}
        section = None
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                self.where[(section, None)] = (n, raw.index("[") + 1)
            elif section and "=" in line and not line.startswith(("#", ";")):
                key = line.split("=", 1)[0].strip()
                col = raw.index("=") + 2 + len(raw.split("=", 1)[1]) - len(
                    raw.split("=", 1)[1].lstrip())
                self.where[(section, key)] = (n, raw.index(key) + 1, col)

    def line(self, section, key=None):
        return self.where.get((section, key), (0, 0))[0]

    def value_col(self, section, key):
        w = self.where.get((section, key))
        return w[2] if w and len(w) > 2 else 0

    def key_col(self, section, key):
        w = self.where.get((section, key))
        return w[1] if w else 0


def _floats(text, what, lines, section, key):
    try:
        return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]
    except ValueError:
        raise ProblemFileError(f"{what} must be numbers", lines.line(section, key),
                               lines.value_col(section, key)) from None


def load_problem_text(text: str, name: str = "problem") -> ProblemSpec:
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None,
                                   strict=True)
    cp.optionxform = str
    lines = _Lines(text)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", 0) or 0
        raise ProblemFileError(str(exc).splitlines()[0], ln, 1) from None

    def err(msg, section, key=None, value=True):
        col = lines.value_col(section, key) if (key and value) else lines.key_col(section, key)
        raise ProblemFileError(msg, lines.line(section, key), col)

    for sec in cp.sections():
        if sec not in _SECTIONS and not sec.startswith("boundary."):
            err(f"unknown section [{sec}]", sec)
    for sec in ("domain", "system", "initial"):
        if sec not in cp:
            raise ProblemFileError(f"missing section [{sec}]", 0, 0)
    dom = cp["domain"]
    for key in dom:
        if key not in _DOMAIN_KEYS:
            err(f"unknown key {key!r} in [domain]", "domain", key, value=False)
    try:
        dim = int(dom.get("dim", "1"))
        comps = int(dom.get("components", "1"))
    except ValueError:
        err("dim and components must be integers", "domain", "dim")
    if "extent" not in dom or "horizon" not in dom:
        raise ProblemFileError("[domain] needs extent and horizon", lines.line("domain"), 1)
    ext = _floats(dom["extent"], "extent", lines, "domain", "extent")
    if len(ext) == 1 and dim > 1:
        ext = ext * dim
    horizon = _floats(dom["horizon"], "horizon", lines, "domain", "horizon")
    try:
        domain = DomainSpec(dim, tuple(ext), horizon[0], comps)
    except ValueError as exc:
        err(str(exc), "domain", "extent")

    sys_items = list(cp["system"].items())
    if len(sys_items) != comps:
        err(f"[system] has {len(sys_items)} equation(s), expected {comps}", "system")
    lhs = []
    for key, _ in sys_items:
        try:
            kind, comp = parse_slot(key)
        except ValueError:
            err(f"left-hand side {key!r} is not a slot name", "system", key, value=False)
        if comp >= comps or (kind in "yz" and kind and "xyz".index(kind) >= dim):
            err(f"slot {key!r} does not exist here", "system", key, value=False)
        lhs.append(key)
    try:
        base = EquationSystem(comps, dim, tuple(lhs))
    except ValueError as exc:
        err(str(exc), "system")
    allowed = set(base.rhs_order) | set(COORDINATES)
    exprs = []
    for key, val in sys_items:
        try:
            exprs.append(parse_expression(val, allowed))
        except ExpressionError as exc:
            raise ProblemFileError(str(exc), lines.line("system", key),
                                   lines.value_col("system", key) + exc.offset) from None
    system = EquationSystem(comps, dim, tuple(lhs), base.rhs_order, tuple(exprs))

    data_names = set(coordinate_names(dim)) | {"t"}

    def data_list(section, space_only):
        sec = cp[section]
        names = set(coordinate_names(dim)) if space_only else data_names
        out = []
        for key in sec:
            if key not in [slot_name("", j) for j in range(comps)]:
                err(f"unknown key {key!r} in [{section}]", section, key, value=False)
        for j in range(comps):
            key = slot_name("", j)
            if key not in sec:
                raise ProblemFileError(f"[{section}] is missing {key}", lines.line(section), 1)
            try:
                out.append(parse_expression(sec[key], names))
            except ExpressionError as exc:
                raise ProblemFileError(str(exc), lines.line(section, key),
                                       lines.value_col(section, key) + exc.offset) from None
        return out

    initial = data_list("initial", True)
    boundary = {}
    want = {f for k in range(dim) for f in FACE_NAMES[k]}
    for sec in cp.sections():
        if sec.startswith("boundary."):
            face = sec.split(".", 1)[1]
            if face not in want:
                err(f"unknown face {face!r}", sec)
            boundary[face] = data_list(sec, False)
    missing = sorted(want - set(boundary))
    if missing:
        raise ProblemFileError(f"missing boundary section(s): "
                               f"{', '.join('[boundary.' + f + ']' for f in missing)}", 0, 0)

    params: object = "auto"
    if "params" in cp:
        params = _parse_params(cp["params"], system, err)
    solver = {}
    if "solver" in cp:
        for key, val in cp["solver"].items():
            if key not in SOLVER_KEYS:
                err(f"unknown key {key!r} in [solver]", "solver", key, value=False)
            solver[key] = _solver_value(key, val, err)
    return ProblemSpec(name, domain, system, initial, boundary, params, solver)


def _parse_params(sec, system: EquationSystem, err):
    mode = sec.get("mode", "auto").strip()
    if mode not in ("auto", "manual"):
        err("mode must be auto or manual", "params", "mode")
    values = {}
    shorthand = dict(zip("abcd", ("u1", "u1_x", "u1_y", "u1_z")))
    for key, val in sec.items():
        if key == "mode":
            continue
        try:
            v = float(val)
        except ValueError:
            err(f"parameter {key!r} must be a number", "params", key)
        if key in shorthand:
            if system.m != 1:
                err("a/b/c/d shorthand needs a single equation", "params", key, value=False)
            slot = shorthand[key]
            if slot not in system.rhs_order:
                err(f"{key} is not available in {system.dim}-d", "params", key, value=False)
            values[(0, slot)] = v
            continue
        m = re.fullmatch(r"eq([1-9][0-9]*)\.(\w+)", key)
        if not m or int(m.group(1)) > system.m or m.group(2) not in system.rhs_order:
            err(f"unknown parameter key {key!r}", "params", key, value=False)
        values[(int(m.group(1)) - 1, m.group(2))] = v
    if mode == "auto":
        if values:
            err("mode = auto takes no coefficients", "params", "mode")
        return "auto"
    return values


def _solver_value(key, val, err):
    val = val.strip()
    try:
        if key in ("resolution",):
            return tuple(int(v) for v in re.split(r"[,\s]+", val) if v)
        if key == "pad":
            return tuple(float(v) for v in re.split(r"[,\s]+", val) if v)
        if key in ("max_iter", "anderson"):
            return int(val)
        if key == "band_limit":
            return val if val in ("auto", "none") else float(val)
        return float(val)
    except ValueError:
        err(f"bad value for {key!r}", "solver", key)


def load_problem(path) -> ProblemSpec:
    from pathlib import Path

    p = Path(path)
    return load_problem_text(p.read_text(), p.stem)


def resolve_problem(ref: str) -> ProblemSpec:
    """``builtin:NAME``, a bare builtin name or a problem-file path."""
    if ref.startswith("builtin:"):
        return builtin(ref.split(":", 1)[1])
    if ref in BUILTINS:
        return builtin(ref)
    return load_problem(ref)


def problem_variables(problem: ProblemSpec) -> list[set]:
    return [variables(e) for e in problem.system.rhs_exprs]
