"""End-to-end solve: data sampling, parameters, kernels, Picard, extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPointReport, SolverConfig, evaluate_psi, extract_solution, picard_solve
from .grid import SpaceTimeGrid, build_grid
from .problems import (ProblemSpec, evaluate_rhs, reference_state, rhs_jacobian,
                       sample_boundary)
from .reduction import (CausalityReport, ParameterSet, ReductionPlan, auto_parameters,
                        parse_slot, validate_parameters)
from .spectral import (KernelPair, band_limit_filter, boundary_spectra, synthesize_kernels)

DEFAULT_PAD_TIME = 8
DEFAULT_PAD_SPACE = 2
DEFAULT_RESOLUTION = 64
BAND_LIMIT_FACTOR = 5.0


@dataclass
class Solution:
    problem: ProblemSpec
    grid: SpaceTimeGrid
    plan: ReductionPlan
    params: ParameterSet
    causality: CausalityReport
    kernels: KernelPair
    Z1: np.ndarray
    u: np.ndarray
    derivatives: dict
    report: FixedPointReport
    band_limit: float | None
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.report.converged


def resolve_parameters(problem: ProblemSpec, plan: ReductionPlan, grid: SpaceTimeGrid,
                       override=None) -> ParameterSet:
    p = problem.params if override is None else override
    if isinstance(p, ParameterSet):
        return p
    if isinstance(p, dict):
        return ParameterSet.from_slots(plan, p, "manual")
    if p != "auto":
        raise ValueError(f"unknown parameter choice {p!r}")
    J = rhs_jacobian(problem, grid, plan)
    sp = [grid.frequencies(k) for k in range(1, grid.ndim)]
    return auto_parameters(plan, grid.domain.horizon, J, sp, algebraic_tau(grid))


def algebraic_tau(grid: SpaceTimeGrid) -> float:
    """Time-derivative weight for equations resolved in a plain component.

    ``tau * max|xi_0| = pi / 8`` keeps the per-frequency Picard factor
    ``tau |xi_0| / |1 + i tau xi_0|`` well below one on the whole grid.
    """
    return grid.spacings[0] / 8


def derivative_coupling(problem: ProblemSpec, plan: ReductionPlan, grid: SpaceTimeGrid,
                        params: ParameterSet, h: float = 1e-6) -> float:
    """Largest ``|d psi / d(spatial-derivative slot)|`` over the initial state."""
    Z, coords = reference_state(problem, grid, plan)
    worst = 0.0
    for s, i in plan.z_index.items():
        if parse_slot(s)[0] not in ("x", "y", "z"):
            continue
        zp, zm = Z.copy(), Z.copy()
        zp[i] += h
        zm[i] -= h
        d = (evaluate_rhs(problem, plan, zp, coords)
             - evaluate_rhs(problem, plan, zm, coords)) / (2 * h)
        d = d - params.coeffs[:, i].reshape((-1,) + (1,) * (d.ndim - 1))
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def auto_band_limit(problem, plan, grid, params, factor=BAND_LIMIT_FACTOR):
    """Spatial cutoff ``factor / (c T)`` for derivative coupling ``c``; None if uncoupled."""
    c = derivative_coupling(problem, plan, grid, params)
    if c < 1e-9:
        return None
    return factor / (c * grid.domain.horizon)


def solver_settings(problem: ProblemSpec, **overrides) -> dict:
    s = {"resolution": None, "pad": None, "tol": 1e-8, "max_iter": 200, "damping": 1.0,
         "band_limit": "auto", "eps_sing": 1e-12, "anderson": 0}
    s.update(problem.solver)
    s.update({k: v for k, v in overrides.items() if v is not None})
    d = problem.dim
    res = s["resolution"] or (DEFAULT_RESOLUTION,) * (d + 1)
    if np.ndim(res) == 0:
        res = (int(res),) * (d + 1)
    elif len(res) == 1:
        res = tuple(res) * (d + 1)
    s["resolution"] = tuple(int(r) for r in res)
    pad = s["pad"]
    if pad is None:
        pad = (DEFAULT_PAD_TIME,) + (DEFAULT_PAD_SPACE,) * d
    elif np.ndim(pad) == 0:
        pad = (pad,) * (d + 1)
    elif len(pad) == 1:
        pad = tuple(pad) * (d + 1)
    s["pad"] = tuple(pad)
    return s


def solve_problem(problem: ProblemSpec, params=None, check: bool = True, log=None,
                  **overrides) -> Solution:
    """Run the full pipeline; ``overrides`` are solver settings (``resolution``, ``tol``...)."""
    s = solver_settings(problem, **overrides)
    grid = build_grid(problem.domain, s["resolution"], s["pad"])
    plan = problem.plan()
    pset = resolve_parameters(problem, plan, grid, params)
    sp = [grid.frequencies(k) for k in range(1, grid.ndim)]
    causality = validate_parameters(plan, pset, sp)
    bd = sample_boundary(problem, grid)
    kernels = synthesize_kernels(plan, pset, boundary_spectra(bd, grid), grid,
                                 s["eps_sing"], check=check)
    bl = s["band_limit"]
    if bl == "auto":
        bl = auto_band_limit(problem, plan, grid, pset)
    elif bl == "none":
        bl = None
    if bl is not None:
        kernels.spatial_filter = band_limit_filter(grid, bl)
    config = SolverConfig(max_iterations=s["max_iter"], rel_tolerance=s["tol"],
                          damping=s["damping"], anderson=s["anderson"])
    Z1, report = picard_solve(kernels, problem, config, log=log)
    box = (slice(None),) + grid.interior
    Zin = Z1[box]
    psi = None
    if plan.r < plan.m:
        psi = evaluate_psi(Zin, problem, pset, plan, grid.mesh(interior=True))
    u, derivs = extract_solution(Zin, plan, pset, psi)
    return Solution(problem, grid, plan, pset, causality, kernels, Z1, u, derivs, report,
                    bl, list(kernels.warnings))


def relative_error(u: np.ndarray, ref: np.ndarray, valid=None):
    """Relative L2 and max errors over ``valid`` cells."""
    if valid is None:
        valid = np.ones(ref.shape, dtype=bool)
    valid = np.broadcast_to(valid, ref.shape)
    diff = np.where(valid, u - ref, 0.0)
    refv = np.where(valid, ref, 0.0)
    den = np.linalg.norm(refv)
    l2 = float(np.linalg.norm(diff) / den) if den > 0 else float(np.linalg.norm(diff))
    linf = float(np.abs(diff).max() / max(np.abs(refv).max(), 1e-300))
    return l2, linf


def exact_on_grid(problem: ProblemSpec, grid: SpaceTimeGrid) -> np.ndarray:
    if problem.exact is None:
        raise ValueError(f"{problem.name} has no exact solution")
    mesh = np.meshgrid(*[grid.centers(k)[: grid.points[k]] for k in range(grid.ndim)],
                       indexing="ij")
    return np.asarray(problem.exact(*mesh), dtype=float)


def tail_bound_text(kernels: KernelPair) -> str:
    return f"{kernels.tail_bound:.3e}" if math.isfinite(kernels.tail_bound) else "inf"
