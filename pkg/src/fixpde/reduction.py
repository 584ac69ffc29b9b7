"""Linear-algebra reduction of a first-order system to a frequency-domain symbol.

A system in ``m`` unknowns on a ``d``-dimensional box has ``(d + 2) m`` slots:
the components of ``u_t, u, u_x, u_y, u_z`` (``u_y``/``u_z`` only when the
dimension allows).  Each equation isolates one slot on the left,

    v_j = f_j(v_{m+1}, ..., v_{(d+2)m}, x, y, z, t),

and the remaining slots, ordered with the ``r`` plain ``u`` components first,
form the vector ``Z1``.  With a real coefficient matrix ``C`` (``m x (d+1)m``)
each equation is split as ``v_j = C_j . Z1 + s_j`` and ``Z2 = S`` collects the
nonlinear remainders.  Every slot is then a linear function of
``Z = (Z1, Z2)``: either a unit row (right-hand-side slots) or a row of
``beta^T = (C | E)`` (resolved slots).

The symbol ``B(xi) = (i xi_0 A_0 - A_00; i xi_k A_0 - A_0k)`` is split into the
square ``B1`` acting on ``Z1`` and ``-B2`` acting on ``Z2``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

KINDS = ("t", "", "x", "y", "z")
SPATIAL_KINDS = ("x", "y", "z")


class PlanError(ValueError):
    """Malformed slot assignment."""


def slot_kinds(dim: int) -> tuple[str, ...]:
    return KINDS[: dim + 2]


def slot_name(kind: str, comp: int) -> str:
    """Name of a slot; ``comp`` is 0-based (``slot_name('x', 0) == 'u1_x'``)."""
    return f"u{comp + 1}" + (f"_{kind}" if kind else "")


def parse_slot(name: str) -> tuple[str, int]:
    base, _, kind = name.partition("_")
    if not base.startswith("u") or not base[1:].isdigit() or kind not in KINDS:
        raise PlanError(f"not a slot name: {name!r}")
    return kind, int(base[1:]) - 1


def all_slots(m: int, dim: int) -> list[str]:
    return [slot_name(k, j) for k in slot_kinds(dim) for j in range(m)]


def canonical_rhs_order(lhs: Sequence[str], m: int, dim: int) -> list[str]:
    """Right-hand-side slots: plain components first, then derivatives by kind."""
    taken = set(lhs)
    us = [slot_name("", j) for j in range(m) if slot_name("", j) not in taken]
    rest = [slot_name(k, j) for k in ("t",) + SPATIAL_KINDS[:dim] for j in range(m)
            if slot_name(k, j) not in taken]
    return us + rest


@dataclass(frozen=True)
class EquationSystem:
    """Which slot each equation resolves, and the order of the remaining slots."""

    m: int
    dim: int
    lhs: tuple[str, ...]
    rhs_order: tuple[str, ...] = ()
    rhs_exprs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lhs", tuple(self.lhs))
        if not self.rhs_order:
            object.__setattr__(self, "rhs_order",
                               tuple(canonical_rhs_order(self.lhs, self.m, self.dim)))
        object.__setattr__(self, "rhs_order", tuple(self.rhs_order))
        object.__setattr__(self, "rhs_exprs", tuple(self.rhs_exprs))
        if len(self.lhs) != self.m:
            raise PlanError(f"{self.m} equations need {self.m} resolved slots, got {len(self.lhs)}")
        every = all_slots(self.m, self.dim)
        used = list(self.lhs) + list(self.rhs_order)
        for s in used:
            if s not in every:
                raise PlanError(f"slot {s!r} does not exist for m={self.m}, dim={self.dim}")
        dup = sorted({s for s in used if used.count(s) > 1})
        if dup:
            raise PlanError(f"slot(s) used twice: {', '.join(dup)}")
        missing = sorted(set(every) - set(used))
        if missing:
            raise PlanError(f"slot(s) missing: {', '.join(missing)}")
        kinds = [parse_slot(s)[0] for s in self.rhs_order]
        r = kinds.count("")
        if any(k != "" for k in kinds[:r]):
            raise PlanError("plain u components must come first in the right-hand-side order")
        if self.rhs_exprs and len(self.rhs_exprs) != self.m:
            raise PlanError("need one right-hand-side expression per equation")

    @property
    def r(self) -> int:
        return sum(1 for s in self.rhs_order if parse_slot(s)[0] == "")

    @property
    def n1(self) -> int:
        return (self.dim + 1) * self.m


@dataclass(frozen=True)
class ParameterSet:
    """Coefficients ``C`` of the linear split, one row per equation over ``Z1``."""

    coeffs: np.ndarray
    note: str = ""

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("coefficient matrix must be 2-d")
        if not np.all(np.isfinite(c)):
            raise ValueError("parameters must be finite reals")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def blocks(self) -> list[np.ndarray]:
        """The ``m x m`` blocks ``C_1, C_2, ...`` over consecutive groups of ``Z1``."""
        m = self.coeffs.shape[0]
        return [self.coeffs[:, i * m:(i + 1) * m] for i in range(self.coeffs.shape[1] // m)]

    @classmethod
    def from_slots(cls, plan: "ReductionPlan", values: dict, note: str = "") -> "ParameterSet":
        """``values`` maps ``(equation index, slot name)`` to a coefficient."""
        c = np.zeros((plan.m, plan.n1))
        for (eq, slot), v in values.items():
            if slot not in plan.z_index:
                raise ValueError(f"slot {slot!r} is not on the right-hand side")
            c[eq, plan.z_index[slot]] = v
        return cls(c, note)

    @classmethod
    def scalar(cls, plan: "ReductionPlan", a: float, b: float = 0.0, c: float = 0.0,
               d: float = 0.0) -> "ParameterSet":
        """Scalar shorthand ``u_t = a u + b u_x + c u_y + d u_z + v``."""
        if plan.m != 1:
            raise ValueError("scalar shorthand needs m = 1")
        vals = {(0, "u1"): a}
        for name, v in zip(("u1_x", "u1_y", "u1_z"), (b, c, d)):
            if name in plan.z_index:
                vals[(0, name)] = v
            elif v != 0:
                raise ValueError(f"{name} is not available in {plan.dim}-d")
        return cls.from_slots(plan, vals, "scalar")

    def key(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.coeffs).tobytes()).hexdigest()[:16]


class ReductionPlan:
    """Slot bookkeeping, selector rows and the row permutation ``P``."""

    def __init__(self, system: EquationSystem):
        self.system = system
        self.m = system.m
        self.dim = system.dim
        self.n1 = system.n1
        self.r = system.r
        self.z_index = {s: i for i, s in enumerate(system.rhs_order)}
        self.lhs_index = {s: j for j, s in enumerate(system.lhs)}
        self.perm = self._permutation()

    # -- selector rows -------------------------------------------------
    def slot_row(self, slot: str, params: ParameterSet) -> np.ndarray:
        """Row expressing ``slot`` as a linear function of ``Z = (Z1, Z2)``."""
        row = np.zeros(self.n1 + self.m)
        if slot in self.z_index:
            row[self.z_index[slot]] = 1.0
        else:
            j = self.lhs_index[slot]
            row[: self.n1] = params.coeffs[j]
            row[self.n1 + j] = 1.0
        return row

    def selectors(self, params: ParameterSet) -> dict[str, np.ndarray]:
        """``A_00, A_0, A_01, ...`` keyed by slot kind (``'t'``, ``''``, ``'x'``...)."""
        return {k: np.array([self.slot_row(slot_name(k, j), params) for j in range(self.m)])
                for k in slot_kinds(self.dim)}

    def beta_rows(self, params: ParameterSet) -> np.ndarray:
        return np.hstack([params.coeffs, np.eye(self.m)])

    def symbol_parts(self, params: ParameterSet):
        """Constant part and per-axis coefficient of ``B``: ``B = K0 + sum i xi_k Kk``."""
        sel = self.selectors(params)
        m, n = self.m, self.n1 + self.m
        const = np.zeros((self.n1, n))
        axes = [np.zeros((self.n1, n)) for _ in range(self.dim + 1)]
        for b, kind in enumerate(("t",) + SPATIAL_KINDS[: self.dim]):
            const[b * m:(b + 1) * m] = -sel[kind]
            axes[b][b * m:(b + 1) * m] = sel[""]
        return const, axes

    # -- permutation -----------------------------------------------------
    def _permutation(self) -> np.ndarray:
        m = self.m
        dest = np.empty(self.n1, dtype=int)
        nxt = 0
        deriv_kinds = ("t",) + SPATIAL_KINDS[: self.dim]
        for b, kind in enumerate(deriv_kinds):
            for j in range(m):
                slot = slot_name(kind, j)
                if slot in self.z_index:
                    dest[b * m + j] = self.z_index[slot]
                else:
                    dest[b * m + j] = -1
        lhs_rows = [i for i in range(self.n1) if dest[i] < 0]
        # resolved derivative rows fill the first r positions in equation order
        lhs_rows.sort(key=lambda i: self.lhs_index[slot_name(deriv_kinds[i // m], i % m)])
        for i in lhs_rows:
            dest[i] = nxt
            nxt += 1
        if nxt != self.r or sorted(dest) != list(range(self.n1)):
            raise PlanError("could not build the row permutation")
        perm = np.empty(self.n1, dtype=int)
        perm[dest] = np.arange(self.n1)
        return perm

    def permutation_matrix(self) -> np.ndarray:
        P = np.zeros((self.n1, self.n1))
        P[np.arange(self.n1), self.perm] = 1.0
        return P

    def permutation_sign(self) -> int:
        perm = list(self.perm)
        sign = 1
        seen = [False] * len(perm)
        for i in range(len(perm)):
            if seen[i]:
                continue
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
        return sign

    def is_time_resolved(self) -> bool:
        """True for systems ``u_t = f`` with the canonical slot order."""
        return (list(self.system.lhs) == [slot_name("t", j) for j in range(self.m)]
                and list(self.system.rhs_order)
                == canonical_rhs_order(self.system.lhs, self.m, self.dim))

    def key(self) -> str:
        text = "|".join([str(self.m), str(self.dim), ",".join(self.system.lhs),
                         ",".join(self.system.rhs_order)])
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_plan(system: EquationSystem) -> ReductionPlan:
    return ReductionPlan(system)


def assemble_symbol(plan: ReductionPlan, params: ParameterSet, freq: Sequence):
    """Return ``(B1, B2)`` at the frequencies ``freq = (xi_0, xi_1, ...)``.

    Frequencies may be scalars or broadcastable arrays; the matrices are
    stacked along leading axes, shapes ``(..., n1, n1)`` and ``(..., n1, m)``.
    """
    if len(freq) != plan.dim + 1:
        raise ValueError(f"need {plan.dim + 1} frequency entries, got {len(freq)}")
    const, axes = plan.symbol_parts(params)
    xis = np.broadcast_arrays(*[np.asarray(f, dtype=float) for f in freq])
    B = np.broadcast_to(const, xis[0].shape + const.shape).astype(complex)
    for xi, Kk in zip(xis, axes):
        B = B + 1j * xi[..., None, None] * Kk
    return B[..., :, : plan.n1], -B[..., :, plan.n1:]


def singular_threshold(B1: np.ndarray, eps_sing: float = 1e-12) -> np.ndarray:
    return eps_sing * (1.0 + np.abs(B1).max(axis=(-2, -1)))


def invert_symbol(B1: np.ndarray, eps_sing: float = 1e-12):
    """Batched inverse with singular flags.

    Returns ``(inverse, singular)``; singular frequencies (``|det| <=
    eps_sing * (1 + max |entry|)``) get a zero matrix and a True flag.
    """
    det = np.linalg.det(B1)
    singular = np.abs(det) <= singular_threshold(B1, eps_sing)
    safe = np.where(singular[..., None, None], np.eye(B1.shape[-1]), B1)
    inv = np.linalg.inv(safe)
    inv = np.where(singular[..., None, None], 0.0, inv)
    return inv, singular


def scalar_closed_form(a, b, c, d, freq):
    """Closed-form ``det B1`` and ``B1^{-1}`` for the scalar time-resolved plan (3-d slots)."""
    x0, x1, x2, x3 = (np.asarray(f, dtype=float) for f in freq)
    a1 = a + 1j * (b * x1 + c * x2 + d * x3) - 1j * x0
    ia = 1.0 / a1
    ik = [1j * x1, 1j * x2, 1j * x3]
    coef = [b, c, d]
    shape = np.broadcast(a1, x0, x1, x2, x3).shape
    inv = np.zeros(shape + (4, 4), dtype=complex)
    # row k >= 1 gives z_k = i xi_k z_0 - y_k; row 0 then gives -a1 z_0 = y_0 - sum b_k y_k
    inv[..., 0, 0] = -ia
    for j in range(3):
        inv[..., 0, j + 1] = ia * coef[j]
        inv[..., j + 1, 0] = -ik[j] * ia
        for k in range(3):
            inv[..., j + 1, k + 1] = ik[j] * ia * coef[k] - (1.0 if j == k else 0.0)
    return a1, inv


# -- causality -------------------------------------------------------------

@dataclass
class CausalityReport:
    det_nonzero_generic: bool
    A05: np.ndarray | None
    B05: np.ndarray | None
    eigenvalues: np.ndarray
    causal: bool
    margin: float
    reason: str = ""
    convention: str = "Re(lambda) < 0 for A05^-1 B05"
    a2_eigenvalues: np.ndarray | None = None
    max_pole_real: float | None = None
    pole_scan_ok: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.causal and self.pole_scan_ok is not False


def _time_pencil(plan: ReductionPlan, params: ParameterSet):
    const, axes = plan.symbol_parts(params)
    M = axes[0][:, : plan.n1]
    return const[:, : plan.n1], M, [a[:, : plan.n1] for a in axes[1:]]


def reduce_time_pencil(plan: ReductionPlan, params: ParameterSet, spatial=None):
    """Row-reduce ``B1`` at spatial frequency ``spatial`` (default 0).

    The rows of the spatial blocks are eliminated against ``dm`` pivot
    columns, leaving ``det B1 = det(i xi_0 A05 - B05) * phi``.  Returns
    ``(A05, B05, phi)``; ``phi`` is None when the spatial rows are rank
    deficient.
    """
    const, M, sp_axes = _time_pencil(plan, params)
    m, n1 = plan.m, plan.n1
    if spatial is None:
        spatial = [0.0] * plan.dim
    K = const.astype(complex)
    for xi, Ak in zip(spatial, sp_axes):
        K = K + 1j * xi * Ak
    A1 = M[:m]
    B1t = -K[:m]
    rest = K[m:]
    if plan.dim == 0 or rest.shape[0] == 0:
        return A1.astype(complex), B1t, 1.0
    _, R, piv = scipy.linalg.qr(rest, pivoting=True)
    nr = rest.shape[0]
    if abs(R[nr - 1, nr - 1]) <= 1e-12 * max(1.0, abs(R[0, 0])):
        return None, None, None
    b = np.sort(piv[:nr])
    a = np.sort(piv[nr:])
    Kb_inv_Ka = np.linalg.solve(rest[:, b], rest[:, a])
    A05 = A1[:, a] - A1[:, b] @ Kb_inv_Ka
    B05 = B1t[:, a] - B1t[:, b] @ Kb_inv_Ka
    # det B1 = det([iw A05 - B05, *; 0, Kb]) with columns reordered (a, b)
    order = np.concatenate([a, b])
    sign = np.linalg.det(np.eye(n1)[:, order]).real
    phi = sign * np.linalg.det(rest[:, b])
    return A05, B05, phi


def pencil_poles(plan: ReductionPlan, params: ParameterSet, spatial) -> np.ndarray:
    """Finite roots ``s = i xi_0`` of ``det B1 = 0`` at one spatial frequency."""
    const, M, sp_axes = _time_pencil(plan, params)
    K = -const.astype(complex)
    for xi, Ak in zip(spatial, sp_axes):
        K = K - 1j * xi * Ak
    # B1 = s M - K
    w = scipy.linalg.eigvals(K, M.astype(complex))
    return w[np.isfinite(w)]


def pole_scan(plan: ReductionPlan, params: ParameterSet, spatial_freqs,
              max_points: int = 4096):
    """Largest real part of the time poles over a set of spatial frequencies.

    ``spatial_freqs`` is a list of 1-d frequency arrays, one per spatial axis;
    the scan runs over their tensor grid (strided down to ``max_points``).
    Returns ``(max_real, min_decay)``.
    """
    if plan.dim == 0:
        poles = pencil_poles(plan, params, [])
        mr = float(poles.real.max()) if poles.size else -math.inf
        return mr, -mr
    grids = np.meshgrid(*spatial_freqs, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    if len(pts) > max_points:
        step = int(math.ceil(len(pts) / max_points))
        pts = np.concatenate([pts[::step], pts[:1]])
    worst = -math.inf
    for p in pts:
        poles = pencil_poles(plan, params, p)
        if poles.size:
            worst = max(worst, float(poles.real.max()))
    return worst, -worst


def validate_parameters(plan: ReductionPlan, params: ParameterSet, spatial_freqs=None,
                        rng_seed: int = 0) -> CausalityReport:
    """Check that the parameters give a causal inverse symbol.

    The primary test is the sign of ``Re(lambda)`` for the eigenvalues of
    ``A05^{-1} B05`` (all must be negative).  When ``spatial_freqs`` is
    given, the roots of ``det B1`` are also scanned over those spatial
    frequencies.
    """
    rng = np.random.default_rng(rng_seed)
    xi = rng.normal(size=plan.dim + 1) * 3.0
    B1, _ = assemble_symbol(plan, params, list(xi))
    det_generic = abs(np.linalg.det(B1)) > 1e-10 * (1 + np.abs(B1).max()) ** plan.n1
    A05, B05, phi = reduce_time_pencil(plan, params)
    empty = np.zeros(0, dtype=complex)
    if A05 is None:
        return CausalityReport(bool(det_generic), None, None, empty, False, -math.inf,
                               "spatial rows are rank deficient at zero frequency")
    cond = np.linalg.cond(A05) if A05.size else 1.0
    if not np.isfinite(cond) or cond > 1e12:
        return CausalityReport(bool(det_generic), A05.real, B05.real, empty, False, -math.inf,
                               "A05 is numerically singular")
    lam = np.linalg.eigvals(np.linalg.solve(A05, B05))
    margin = float(np.min(-lam.real))
    causal = bool(margin > 0)
    report = CausalityReport(bool(det_generic), A05.real, B05.real, lam, causal, margin,
                             "" if causal else "an eigenvalue of A05^-1 B05 has Re >= 0")
    if plan.is_time_resolved():
        A = params.blocks()[0]
        report.a2_eigenvalues = np.linalg.eigvals(-A)
        report.extra["a2_convention"] = "Re(lambda) > 0 for a2 = -(A + i xi.B)"
    if spatial_freqs is not None:
        worst, _ = pole_scan(plan, params, spatial_freqs)
        report.max_pole_real = worst
        report.pole_scan_ok = bool(worst < 0)
        if not report.pole_scan_ok and causal:
            report.reason = "a pole of det B1 reaches Re >= 0 at nonzero spatial frequency"
    return report


# -- automatic parameters ----------------------------------------------------

def default_parameters(plan: ReductionPlan, horizon: float,
                       algebraic_tau: float | None = None) -> ParameterSet:
    """``-1/T`` on each time-resolved component's own value, zeros elsewhere.

    Equations resolved with respect to a plain component get ``-tau`` on that
    component's time derivative (``tau`` defaults to ``T / 1024``) so that
    ``A05`` is invertible.
    """
    c = np.zeros((plan.m, plan.n1))
    tau = horizon / 1024 if algebraic_tau is None else algebraic_tau
    for j, slot in enumerate(plan.system.lhs):
        kind, comp = parse_slot(slot)
        u = slot_name("", comp)
        if kind == "t" and u in plan.z_index:
            c[j, plan.z_index[u]] = -1.0 / horizon
        elif kind == "":
            ut = slot_name("t", comp)
            if ut in plan.z_index:
                c[j, plan.z_index[ut]] = -tau
    return ParameterSet(c, "default")


def auto_parameters(plan: ReductionPlan, horizon: float, jacobian=None,
                    spatial_freqs=None, algebraic_tau: float | None = None) -> ParameterSet:
    """Pick causal parameters, absorbing the linear part of ``f`` when possible.

    ``jacobian`` is the ``m x n1`` matrix of ``df_j / dZ1`` at a reference
    state.  Derivative-slot coefficients are taken from it; each time-resolved
    equation gets ``min(df/du_own, 0) - 1/T`` on its own component.  If the
    result fails the causality checks the plain default is returned.
    """
    base = default_parameters(plan, horizon, algebraic_tau)
    if jacobian is None:
        return base
    J = np.asarray(jacobian, dtype=float)
    c = base.coeffs.copy()
    for j, slot in enumerate(plan.system.lhs):
        kind, comp = parse_slot(slot)
        for s, i in plan.z_index.items():
            sk, sc = parse_slot(s)
            if sk in SPATIAL_KINDS:
                c[j, i] = J[j, i]
            elif sk == "" and kind == "t" and sc == comp:
                c[j, i] = min(J[j, i], 0.0) - 1.0 / horizon
            elif sk == "" and kind == "":
                c[j, i] = J[j, i]
    cand = ParameterSet(c, "auto")
    rep = validate_parameters(plan, cand, spatial_freqs)
    if rep.ok:
        return cand
    return base


def plan_dump(plan: ReductionPlan, params: ParameterSet | None = None,
              report: CausalityReport | None = None) -> str:
    """Stable text dump of a plan for golden-file comparisons."""
    fmt = lambda v: f"{v + 0.0:.12g}"  # noqa: E731  (+0.0 folds -0 into 0)
    lines = [f"plan m={plan.m} dim={plan.dim} r={plan.r} n1={plan.n1}"]
    for j, s in enumerate(plan.system.lhs):
        lines.append(f"eq{j + 1}: {s}")
    lines.append("Z1: " + " ".join(plan.system.rhs_order))
    lines.append("P: " + " ".join(str(int(p)) for p in plan.perm))
    if params is not None:
        for kind, A in plan.selectors(params).items():
            label = {"t": "A00", "": "A0", "x": "A01", "y": "A02", "z": "A03"}[kind]
            for row in A:
                lines.append(f"{label}: " + " ".join(fmt(v) for v in row))
        for j, row in enumerate(params.coeffs):
            lines.append(f"C[{j + 1}]: " + " ".join(fmt(v) for v in row))
    if report is not None:
        lines.append(f"det_nonzero_generic: {report.det_nonzero_generic}")
        if report.A05 is not None:
            for row in np.atleast_2d(report.A05):
                lines.append("A05: " + " ".join(fmt(v) for v in row))
            for row in np.atleast_2d(report.B05):
                lines.append("B05: " + " ".join(fmt(v) for v in row))
        lines.append("eigenvalues: " + " ".join(
            f"{fmt(v.real)}{v.imag:+.12g}j" for v in np.sort_complex(report.eigenvalues)))
        lines.append(f"causal: {report.causal}")
        lines.append(f"margin: {fmt(report.margin)}")
        if report.max_pole_real is not None:
            lines.append(f"max_pole_real: {fmt(report.max_pole_real)}")
        if report.reason:
            lines.append(f"reason: {report.reason}")
    return "\n".join(lines) + "\n"
