"""Picard solution of ``Z1 I = w1 + w2 * (psi(Z1) I)`` and the interior/exterior split."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .expr import DomainFault
from .grid import field_norm, forward_transform
from .problems import ProblemSpec, evaluate_rhs
from .reduction import ParameterSet, ReductionPlan, parse_slot, slot_name
from .spectral import KernelPair, apply_w2


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    rel_tolerance: float = 1e-8
    damping: float = 1.0
    divergence_factor: float = 10.0
    window: int = 5
    anderson: int = 0

    def __post_init__(self):
        if not self.rel_tolerance > 0:
            raise ValueError("rel_tolerance must be > 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.divergence_factor > 1:
            raise ValueError("divergence_factor must be > 1")
        if self.window < 1 or self.anderson < 0:
            raise ValueError("window must be >= 1 and anderson >= 0")


@dataclass
class FixedPointReport:
    iterations: int
    history: list
    converged: bool
    status: str
    interior_residual: float = math.nan
    exterior_residual: float = math.nan
    contraction: list = field(default_factory=list)
    best_iteration: int = 0
    wall_time_ms: float = 0.0
    message: str = ""

    @property
    def update_norm_final(self) -> float:
        return self.history[-1] if self.history else math.nan

    @property
    def max_contraction(self) -> float:
        return max(self.contraction) if self.contraction else math.nan


def evaluate_psi(Z1: np.ndarray, problem: ProblemSpec, params: ParameterSet,
                 plan: ReductionPlan, coords) -> np.ndarray:
    """``psi(Z1) = f(Z1, x, t) - C Z1`` pointwise; ``coords`` = ``(t, x, ...)`` arrays."""
    f = evaluate_rhs(problem, plan, Z1, coords)
    lin = np.tensordot(params.coeffs, Z1, axes=(1, 0))
    return f - lin


class _Anderson:
    """Type-II Anderson mixing on the fixed-point residual ``g = G(z) - z``."""

    def __init__(self, depth):
        self.depth = depth
        self.dz, self.dg = [], []
        self.prev = None

    def step(self, z, g, damping):
        if self.prev is not None:
            self.dz.append(z - self.prev[0])
            self.dg.append(g - self.prev[1])
            if len(self.dz) > self.depth:
                self.dz.pop(0)
                self.dg.pop(0)
        self.prev = (z, g)
        if not self.dz:
            return z + damping * g
        DG = np.stack(self.dg, axis=1)
        DZ = np.stack(self.dz, axis=1)
        gamma, *_ = np.linalg.lstsq(DG, g, rcond=None)
        return z + damping * g - (DZ + damping * DG) @ gamma


def _interior_coords(grid):
    return grid.mesh(interior=True)


def _residual_map(Z: np.ndarray, kernels: KernelPair, problem: ProblemSpec, coords):
    """``w1 + W2[psi(Z) I]`` together with ``psi`` on the box."""
    grid = kernels.grid
    box = (slice(None),) + grid.interior
    psi_in = evaluate_psi(Z[box], problem, kernels.params, kernels.plan, coords)
    psi = np.zeros((kernels.plan.m,) + grid.shape)
    psi[box] = psi_in
    if not np.any(psi_in):
        return kernels.w1.copy(), psi_in
    return kernels.w1 + apply_w2(kernels, forward_transform(psi, None, grid)), psi_in


def picard_solve(kernels: KernelPair, problem: ProblemSpec, config: SolverConfig = SolverConfig(),
                 log=None):
    """Damped Picard iteration from ``Z1 = w1``.

    Returns ``(Z1, report)``; ``Z1`` covers the padded grid, inside the box it
    is the last (or, on failure, the best) iterate.
    """
    t0 = time.perf_counter()
    grid = kernels.grid
    box = (slice(None),) + grid.interior
    coords = _interior_coords(grid)
    Z = kernels.w1.copy()
    hist: list[float] = []
    ratios: list[float] = []
    best, best_norm, best_it = Z, math.inf, 0
    status, message = "max_iterations", ""
    accel = _Anderson(config.anderson) if config.anderson else None
    streak = 0
    it = 0
    for it in range(1, config.max_iterations + 1):
        try:
            R, _ = _residual_map(Z, kernels, problem, coords)
        except DomainFault as exc:
            status, message = "numeric_fault", f"iteration {it}: {exc}"
            it -= 1
            break
        if not np.all(np.isfinite(R[box])):
            status, message = "numeric_fault", f"iteration {it}: non-finite values"
            it -= 1
            break
        if accel is not None:
            zi = accel.step(Z[box].ravel(), (R - Z)[box].ravel(), config.damping)
            Znew = R.copy()
            Znew[box] = zi.reshape(Z[box].shape)
        elif config.damping == 1.0:
            Znew = R
        else:
            Znew = (1 - config.damping) * Z + config.damping * R
        num = field_norm((Znew - Z)[box], grid)
        den = field_norm(Znew[box], grid)
        upd = num / den if den > 0 else (0.0 if num == 0 else math.inf)
        if not math.isfinite(upd):
            status, message = "diverged", f"iteration {it}: update norm overflowed"
            it -= 1
            break
        if hist and hist[-1] > 0:
            ratios.append(upd / hist[-1])
        hist.append(upd)
        if log is not None:
            log(f"iteration {it}: update {upd:.3e}")
        Z = Znew
        if upd < best_norm:
            best, best_norm, best_it = Z, upd, it
        if upd <= config.rel_tolerance:
            status = "converged"
            break
        streak = streak + 1 if upd > config.divergence_factor * min(hist) else 0
        if streak >= config.window:
            status, message = "diverged", f"update grew above {config.divergence_factor}x its minimum"
            break
    if status != "converged":
        Z = best
    rep = FixedPointReport(it, hist, status == "converged", status, contraction=ratios,
                           best_iteration=best_it if status != "converged" else it,
                           message=message)
    if status != "numeric_fault":
        try:
            rep.interior_residual, rep.exterior_residual = classical_residual(
                Z, kernels, problem)
        except DomainFault:
            pass
    rep.wall_time_ms = (time.perf_counter() - t0) * 1e3
    return Z, rep


def classical_residual(Z1: np.ndarray, kernels: KernelPair, problem: ProblemSpec):
    """Grid norms of ``Z1 I - w1 - W2[psi I]`` inside the box and outside it.

    The exterior region runs up to the half-padding mark on every axis.
    """
    grid = kernels.grid
    R, _ = _residual_map(Z1, kernels, problem, _interior_coords(grid))
    box = grid.indicator()
    outer = grid.half_pad_region() & ~box
    ZI = np.where(box, Z1, 0.0)
    diff = ZI - R
    return field_norm(diff, grid, box), field_norm(diff, grid, outer)


def extract_solution(Z1: np.ndarray, plan: ReductionPlan, params: ParameterSet | None = None,
                     psi: np.ndarray | None = None):
    """Split ``Z1`` into ``u`` (``(m, ...)``) and a dict of derivative slots.

    Components resolved on the left-hand side are rebuilt as ``C_j Z1 + psi_j``
    and need ``params`` and ``psi``.
    """
    u = np.zeros((plan.m,) + Z1.shape[1:])
    for c in range(plan.m):
        name = slot_name("", c)
        if name in plan.z_index:
            u[c] = Z1[plan.z_index[name]]
        else:
            if params is None or psi is None:
                raise ValueError(f"{name} is resolved by an equation; pass params and psi")
            j = plan.lhs_index[name]
            u[c] = np.tensordot(params.coeffs[j], Z1, axes=(0, 0)) + psi[j]
    derivs = {s: Z1[i] for s, i in plan.z_index.items() if parse_slot(s)[0] not in ("",)}
    return u, derivs
