"""Reference solutions that share no code with the spectral path.

All oracles return values at the cell centres of the physical box
(``t_j = (j + 1/2) dt``, ``x_i = (i + 1/2) dx``), recomputed here from the
grid's counts and lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import eval_expression, parse_expression

MAX_CFL = 1.0
FTCS_LIMIT = 0.5


class CFLError(ValueError):
    def __init__(self, message, required_dt):
        self.required_dt = required_dt
        super().__init__(f"{message}; use dt <= {required_dt:.6g}")


class OracleNotApplicable(ValueError):
    pass


@dataclass
class OracleResult:
    u_ref: np.ndarray
    valid: np.ndarray
    method: str
    info: dict = field(default_factory=dict)

    @property
    def valid_fraction(self) -> float:
        return float(np.mean(self.valid))


def _centres(n, length):
    return (np.arange(n) + 0.5) * (length / n)


def _box(grid):
    """``(t, x)`` cell-centre vectors of a 1-d space-time grid."""
    if len(grid.points) != 2:
        raise OracleNotApplicable("this oracle needs a 1-d spatial grid")
    T, L = grid.domain.horizon, grid.domain.extents[0]
    return _centres(grid.points[0], T), _centres(grid.points[1], L), T, L


def _as_function(f, names):
    """Callable from a callable, expression text or parsed expression."""
    if callable(f):
        return f
    node = parse_expression(f) if isinstance(f, str) else f

    def call(*args):
        shape = np.broadcast_shapes(*[np.shape(a) for a in args])
        return np.broadcast_to(eval_expression(node, dict(zip(names, args))), shape).astype(float)

    return call


def characteristics_transport(u0, speed: float, inflow, grid) -> OracleResult:
    """``u = u0(x - c t)`` when the foot is in the box, else the inflow value.

    ``inflow`` is a function of ``t`` (expression in ``t``) giving the value
    on the inflow face (left for ``c > 0``, right for ``c < 0``).
    """
    t, x, T, L = _box(grid)
    f0 = _as_function(u0, ("x",))
    fin = _as_function(inflow, ("t",)) if inflow is not None else (lambda s: np.zeros_like(s))
    tt, xx = np.meshgrid(t, x, indexing="ij")
    foot = xx - speed * tt
    inside = (foot >= 0) & (foot <= L)
    u = np.where(inside, f0(np.clip(foot, 0, L)), 0.0)
    if speed != 0:
        xb = 0.0 if speed > 0 else L
        tb = tt - (xx - xb) / speed
        u = np.where(inside, u, fin(np.clip(tb, 0, T)))
    return OracleResult(u[None], np.ones(u.shape, dtype=bool)[None], "characteristics",
                        {"speed": speed})


def shock_time(u0, length: float, samples: int = 20001, du0=None) -> float:
    """``1 / max(-u0')`` from a dense sample of the initial profile."""
    xs = np.linspace(0.0, length, samples)
    if du0 is not None:
        d = _as_function(du0, ("x",))(xs)
    else:
        d = np.gradient(_as_function(u0, ("x",))(xs), xs)
    worst = float(np.max(-d))
    return math.inf if worst <= 0 else 1.0 / worst


def characteristics_burgers(u0, grid, margin: float = 0.9, du0=None,
                            iterations: int = 200) -> OracleResult:
    """Implicit characteristics ``x = s + u0(s) t`` by vectorised bisection.

    Cells with ``t > margin * t_shock`` are marked invalid, as are cells where
    the bracket does not enclose a sign change.
    """
    t, x, T, L = _box(grid)
    f0 = _as_function(u0, ("x",))
    ts = shock_time(u0, L, du0=du0)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    probe = f0(np.linspace(-L, 2 * L, 6001))
    umin, umax = float(probe.min()), float(probe.max())
    lo = xx - umax * tt - 1e-12
    hi = xx - umin * tt + 1e-12
    g = lambda s: s + f0(s) * tt - xx  # noqa: E731
    glo, ghi = g(lo), g(hi)
    bracketed = (glo <= 0) & (ghi >= 0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        left = gm > 0
        hi = np.where(left, mid, hi)
        lo = np.where(left, lo, mid)
        if np.all(hi - lo <= 1e-15 * (1 + np.abs(hi))):
            break
    s = 0.5 * (lo + hi)
    u = f0(s)
    valid = bracketed & (tt <= margin * ts)
    return OracleResult(u[None], valid[None], "characteristics_burgers",
                        {"t_shock": ts, "margin": margin})


def _rk4(f, u, t, h, steps):
    for _ in range(steps):
        k1 = f(u, t)
        k2 = f(u + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(u + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(u + h * k3, t + h)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t + h
    return u, t


def ode_pointwise(f_of_u, u0, grid, substeps: int = 10, blowup: float = 1e12) -> OracleResult:
    """Classic RK4 for ``u_t = f(u)`` at every spatial point.

    ``f_of_u`` is an expression in ``u1`` (``x`` and ``t`` are also bound) or
    a callable ``f(u, x, t)``.  At least ``substeps`` steps per grid ``dt``.
    """
    t, x, T, L = _box(grid)
    if callable(f_of_u):
        fu = f_of_u
    else:
        node = parse_expression(f_of_u) if isinstance(f_of_u, str) else f_of_u
        fu = lambda u, xx, tt: np.broadcast_to(  # noqa: E731
            eval_expression(node, {"u1": u, "x": xx, "t": tt}), np.shape(u)).astype(float)
    u = _as_function(u0, ("x",))(x).astype(float)
    dt = T / grid.points[0]
    h = dt / substeps
    out = np.zeros((t.size, x.size))
    valid = np.ones_like(out, dtype=bool)

    def rhs(v, s):
        # blown-up points are masked below; keep them from overflowing the evaluator
        with np.errstate(invalid="ignore"):
            live = np.isfinite(v) & (np.abs(v) <= blowup)
        return np.where(live, fu(np.where(live, v, 0.0), x, s), 0.0)

    cur, now = _rk4(rhs, u, 0.0, h / 2, substeps)  # to the first centre
    dead = np.zeros(x.size, dtype=bool)
    for j in range(t.size):
        if j:
            cur, now = _rk4(rhs, cur, now, h, substeps)
        with np.errstate(all="ignore"):
            dead |= ~np.isfinite(cur) | (np.abs(cur) > blowup)
        out[j] = np.where(dead, 0.0, cur)
        valid[j] = ~dead
    return OracleResult(out[None], valid[None], "rk4", {"substep": h})


def duhamel_scalar(source: np.ndarray, a: float, b, grid) -> np.ndarray:
    """``int_0^t e^{a s} g(x + b s, t - s) ds`` on the cell centres.

    ``source`` holds ``g`` on the box cells ``(N_t, N_x)`` and is taken as zero
    outside the box.  Trapezoid rule in ``s`` with nodes on the grid time
    levels, linear interpolation in ``x``; ``g`` is held constant on
    ``[0, dt/2]``.
    """
    t, x, T, L = _box(grid)
    b = float(np.atleast_1d(b)[0])
    g = np.asarray(source, dtype=float)
    nt = t.size
    dt = T / nt
    out = np.zeros_like(g)

    def g_at(level, s):
        pos = x + b * s
        vals = np.interp(pos, x, g[level])
        # linear interpolation stops at the first/last centre; outside the box g = 0
        return np.where((pos >= 0) & (pos <= L), vals, 0.0)

    for j in range(nt):
        # nodes s_k = k dt (k = 0..j) land on levels j - k; the last node s = t_j
        # reaches t = 0, where g is extended from level 0
        s_nodes = [k * dt for k in range(j + 1)] + [t[j]]
        vals = [math.exp(a * s) * g_at(j - k, s) for k, s in enumerate(s_nodes[:-1])]
        vals.append(math.exp(a * t[j]) * g_at(0, t[j]))
        acc = np.zeros(x.size)
        for k in range(len(s_nodes) - 1):
            acc += 0.5 * (s_nodes[k + 1] - s_nodes[k]) * (vals[k] + vals[k + 1])
        out[j] = acc
    return out


# -- finite differences ---------------------------------------------------------

def classify_rhs(problem, samples: int = 64, seed: int = 0) -> str | None:
    """Recognise the right-hand side by probing it at random slot values.

    Returns one of ``reaction``, ``linear_transport``, ``burgers``,
    ``hamilton_jacobi``, ``heat_reduced`` or None.
    """
    sysm = problem.system
    rng = np.random.default_rng(seed)
    env = {s: rng.normal(size=samples) for s in sysm.rhs_order}
    env.update({c: rng.uniform(0, 1, size=samples) for c in ("x", "y", "z", "t")})

    def ev(node, e=env):
        return np.broadcast_to(eval_expression(node, e), (samples,))

    try:
        if sysm.m == 2 and sysm.dim == 1 and tuple(sysm.lhs) == ("u1_t", "u2"):
            f1, f2 = (ev(n) for n in sysm.rhs_exprs)
            if np.allclose(f1, env["u2_x"]) and np.allclose(f2, env["u1_x"]):
                return "heat_reduced"
            return None
        if sysm.m != 1 or sysm.dim != 1 or tuple(sysm.lhs) != ("u1_t",):
            return None
        f = ev(sysm.rhs_exprs[0])
        shifted = dict(env, u1_x=env["u1_x"] + 1.0, x=env["x"] + 0.1, t=env["t"] + 0.1)
        if np.allclose(ev(sysm.rhs_exprs[0], shifted), f):
            return "reaction"
        if np.allclose(f, -env["u1"] * env["u1_x"]):
            return "burgers"
        if np.allclose(f, -0.5 * env["u1_x"] ** 2):
            return "hamilton_jacobi"
        c = ev(sysm.rhs_exprs[0], dict(env, u1=0 * env["u1"], u1_x=np.ones(samples)))
        if np.allclose(c, c[0]) and np.allclose(f, c[0] * env["u1_x"]):
            return "linear_transport"
    except (ArithmeticError, NameError):
        return None
    return None


def transport_speed(problem) -> float:
    """Speed ``c`` of ``u_t = -c u_x``."""
    node = problem.system.rhs_exprs[0]
    return -float(eval_expression(node, {"u1": 0.0, "u1_x": 1.0, "u1_t": 0.0,
                                          "x": 0.0, "t": 0.0}))


def _face_value(problem, face, comp=0):
    e = problem.boundary[face][comp]
    if callable(e):
        return lambda tt: np.asarray(e(tt, 0.0 if face == "left" else problem.domain.extents[0]),
                                     dtype=float)
    xb = 0.0 if face == "left" else problem.domain.extents[0]
    return lambda tt: np.broadcast_to(
        eval_expression(e, {"t": tt, "x": xb}), np.shape(tt)).astype(float)


def _to_centres(times, nodes, frames, t, x):
    """Linear interpolation of node/time-level data onto the cell centres."""
    frames = np.asarray(frames)
    spatial = np.stack([np.interp(x, nodes, f) for f in frames])
    out = np.empty((t.size, x.size))
    for i in range(x.size):
        out[:, i] = np.interp(t, times, spatial[:, i])
    return out


def finite_difference_reference(problem, grid, dt: float | None = None, cfl: float = 0.5,
                                refine: int = 1, scheme: str | None = None) -> OracleResult:
    """First-order reference runs for the built-in problem families.

    * transport / Burgers: upwind (Godunov flux for Burgers; ``scheme =
      'lax_friedrichs'`` selects Lax-Friedrichs), Dirichlet inflow, outflow by
      extrapolation;
    * reaction: forward Euler per point;
    * reduced heat: FTCS on ``u_t = u_xx`` with Dirichlet faces.

    ``dt`` overrides the CFL-derived step and is refused if unstable.
    """
    kind = classify_rhs(problem)
    if kind is None or kind == "hamilton_jacobi":
        raise OracleNotApplicable(f"no finite-difference scheme for {problem.name}")
    t, x, T, L = _box(grid)
    nx = grid.points[1] * refine
    dx = L / nx
    nodes = np.linspace(0.0, L, nx + 1)
    u_init = _as_function(problem.initial[0], ("x",))(nodes)
    left, right = _face_value(problem, "left"), _face_value(problem, "right")

    if kind == "reaction":
        node = problem.system.rhs_exprs[0]
        fu = lambda v, s: np.broadcast_to(  # noqa: E731
            eval_expression(node, {"u1": v, "x": nodes, "t": s}), v.shape)
        step = dt if dt is not None else T / grid.points[0] / 50
        info = {"scheme": "forward_euler", "order": 1}
        advance = lambda v, s, h: v + h * fu(v, s)  # noqa: E731
    elif kind == "heat_reduced":
        limit = FTCS_LIMIT * dx * dx
        step = dt if dt is not None else 0.4 * dx * dx
        if step > limit * (1 + 1e-12):
            raise CFLError(f"FTCS step {step:.3g} exceeds dx^2/2", limit)
        info = {"scheme": "ftcs", "order": 1, "ratio": step / dx ** 2}

        def advance(v, s, h):
            w = v.copy()
            w[1:-1] = v[1:-1] + h / dx ** 2 * (v[2:] - 2 * v[1:-1] + v[:-2])
            w[0], w[-1] = left(s + h), right(s + h)
            return w
    else:
        if kind == "linear_transport":
            c = transport_speed(problem)
            flux = lambda v: c * v  # noqa: E731
            vmax = abs(c)
        else:
            probe = np.concatenate([u_init, left(t), right(t)])
            vmax = float(np.max(np.abs(probe)))
            flux = lambda v: 0.5 * v * v  # noqa: E731
        limit = MAX_CFL * dx / max(vmax, 1e-300)
        step = dt if dt is not None else cfl * limit
        if step > limit * (1 + 1e-12):
            raise CFLError(f"CFL number {step / limit:.3g} exceeds {MAX_CFL}", limit)
        lf = scheme == "lax_friedrichs"
        info = {"scheme": "lax_friedrichs" if lf else "upwind", "order": 1,
                "cfl": step / limit}

        def godunov(ul, ur):
            if kind == "linear_transport":
                return np.where(c >= 0, flux(ul), flux(ur))
            fl, fr = flux(ul), flux(ur)
            shock = np.maximum(fl, fr)
            rare = np.where((ul < 0) & (ur > 0), 0.0, np.minimum(fl, fr))
            return np.where(ul > ur, shock, rare)

        def advance(v, s, h):
            if lf:
                w = v.copy()
                w[1:-1] = 0.5 * (v[2:] + v[:-2]) - h / (2 * dx) * (flux(v[2:]) - flux(v[:-2]))
                w[0], w[-1] = left(s + h), right(s + h)
                return w
            F = godunov(v[:-1], v[1:])
            w = v.copy()
            w[1:-1] = v[1:-1] - h / dx * (F[1:] - F[:-1])
            speed_l = c if kind == "linear_transport" else v[0]
            speed_r = c if kind == "linear_transport" else v[-1]
            w[0] = left(s + h) if speed_l > 0 else w[1]
            w[-1] = right(s + h) if speed_r < 0 else w[-2]
            return w

    nsteps = int(math.ceil(T / step))
    h = T / nsteps
    times = [0.0]
    frames = [u_init]
    v, s = u_init.copy(), 0.0
    for _ in range(nsteps):
        v = advance(v, s, h)
        s += h
        times.append(s)
        frames.append(v)
    u = _to_centres(np.array(times), nodes, frames, t, x)
    info.update(dt=h, dx=dx, steps=nsteps, kind=kind)
    return OracleResult(u[None], np.isfinite(u)[None], f"fd_{info['scheme']}", info)
