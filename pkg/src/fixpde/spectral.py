"""Boundary spectra, kernel synthesis and the causal-support check.

Applying the masked transform to the slot relations turns the initial and
face data into a right-hand side ``beta1 = -(g_0; g_1; ...)`` with

* ``g_0 = F_x(-A_1)``: the initial slice, constant in ``xi_0``;
* ``g_k = F(A_3 on the upper face) e^{-i xi_k L_k} - F(A_3 on the lower face)``,

so that ``B1 FI(Z1) = beta1 + B2 FI(Z2)``.  The kernels are
``w1 = F^{-1}[B1^{-1} beta1]`` (physical space) and ``w2_hat = B1^{-1} B2``
(kept in frequency space).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fileio
from .grid import (SpaceTimeGrid, axis_transform, forward_transform, inverse_transform)
from .reduction import (EquationSystem, ParameterSet, ReductionPlan, assemble_symbol,
                        build_plan, invert_symbol, pole_scan, validate_parameters)

FACE_NAMES = (("left", "right"), ("bottom", "top"), ("back", "front"))
MASK_WARN_FRACTION = 1e-3


class NonCausalError(ValueError):
    """Kernel synthesis refused: the parameters fail the causality test."""


@dataclass
class BoundaryData:
    """Initial slice ``A1`` (``(m, N_1, ...)``) and face samples ``A3``.

    ``faces`` maps a face name (``left/right``, ``bottom/top``, ``back/front``)
    to samples over ``(m, N_t, <other spatial axes>)``.
    """

    initial: np.ndarray
    faces: dict

    def check(self, grid: SpaceTimeGrid) -> None:
        m = self.initial.shape[0]
        if self.initial.shape[1:] != tuple(grid.points[1:]):
            raise ValueError(f"initial data shape {self.initial.shape[1:]} != {grid.points[1:]}")
        for k in range(grid.dim):
            for name in FACE_NAMES[k]:
                if name not in self.faces:
                    raise ValueError(f"missing data for face {name!r}")
                want = (m, grid.points[0]) + tuple(
                    grid.points[1 + j] for j in range(grid.dim) if j != k)
                if self.faces[name].shape != want:
                    raise ValueError(f"face {name!r}: shape {self.faces[name].shape} != {want}")
        for arr in [self.initial, *self.faces.values()]:
            if not np.all(np.isfinite(arr)):
                raise ValueError("boundary data must be finite")


def boundary_spectra(bd: BoundaryData, grid: SpaceTimeGrid) -> list[np.ndarray]:
    """Return ``[g_0, g_1, ...]``, each of shape ``(m,) + grid.shape``."""
    bd.check(grid)
    m = bd.initial.shape[0]
    d = grid.dim
    g0 = axis_transform(-bd.initial, grid, range(1, d + 1))
    out = [np.broadcast_to(g0[:, None], (m,) + grid.shape)]
    for k in range(d):
        other = [1 + j for j in range(d) if j != k]
        lo = axis_transform(bd.faces[FACE_NAMES[k][0]], grid, [0] + other)
        hi = axis_transform(bd.faces[FACE_NAMES[k][1]], grid, [0] + other)
        shift = np.exp(-1j * grid.frequencies(k + 1) * grid.lengths[k + 1])
        shp = [1] * (grid.ndim + 1)
        shp[k + 2] = shift.size
        gk = np.expand_dims(hi, k + 2) * shift.reshape(shp) - np.expand_dims(lo, k + 2)
        out.append(np.broadcast_to(gk, (m,) + grid.shape))
    return out


@dataclass
class KernelPair:
    plan: ReductionPlan
    params: ParameterSet
    grid: SpaceTimeGrid
    w1: np.ndarray
    w2_hat: np.ndarray
    singular: np.ndarray
    eps_sing: float
    masked_fraction: float
    decay_rate: float
    tail_bound: float
    imag_residue: float
    spatial_filter: np.ndarray | None = None
    warnings: list = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "plan": self.plan.key(),
            "m": self.plan.m,
            "dim": self.plan.dim,
            "lhs": list(self.plan.system.lhs),
            "rhs_order": list(self.plan.system.rhs_order),
            "params": self.params.coeffs.tolist(),
            "eps_sing": self.eps_sing,
            "masked_fraction": self.masked_fraction,
            "decay_rate": self.decay_rate,
            "tail_bound": self.tail_bound,
            "imag_residue": self.imag_residue,
            "points": list(self.grid.points),
            "pad": list(self.grid.pad),
            "extents": list(self.grid.domain.extents),
            "horizon": self.grid.domain.horizon,
            "warnings": list(self.warnings),
        }


def nyquist_mask(grid: SpaceTimeGrid) -> np.ndarray:
    """True on frequencies lying on the Nyquist plane of any even-length axis."""
    mask = np.zeros(grid.shape, dtype=bool)
    for k, M in enumerate(grid.shape):
        if M % 2 == 0:
            idx = [slice(None)] * grid.ndim
            idx[k] = M // 2
            mask[tuple(idx)] = True
    return mask


def _grid_spatial_freqs(grid: SpaceTimeGrid) -> list[np.ndarray]:
    return [grid.frequencies(k) for k in range(1, grid.ndim)]


def _chunks(grid_shape, n1, budget=1 << 22):
    per_t = max(1, math.prod(grid_shape[1:]) * n1 * n1)
    step = max(1, budget // per_t)
    for start in range(0, grid_shape[0], step):
        yield slice(start, min(start + step, grid_shape[0]))


def _symbol_inverse(plan, params, xi, sl, eps_sing):
    """``(B1^{-1}, B2, singular)`` on the time-frequency slice ``sl``."""
    freq = [xi[0][sl]] + list(xi[1:])
    B1, B2 = assemble_symbol(plan, params, freq)
    inv, sing = invert_symbol(B1, eps_sing)
    return inv, B2, sing


def synthesize_kernels(plan: ReductionPlan, params: ParameterSet, spectra, grid: SpaceTimeGrid,
                       eps_sing: float = 1e-12, check: bool = True) -> KernelPair:
    """Build ``w1`` and ``w2_hat`` on the padded grid.

    With ``check`` the parameters must pass :func:`validate_parameters`
    (including the pole scan over the grid's spatial frequencies).
    """
    sp_freqs = _grid_spatial_freqs(grid)
    rep = validate_parameters(plan, params, sp_freqs)
    if check and not rep.ok:
        raise NonCausalError(f"parameters are not causal: {rep.reason}")
    n1, m = plan.n1, plan.m
    beta = -np.concatenate([np.asarray(g) for g in spectra], axis=0)
    if beta.shape != (n1,) + grid.shape:
        raise ValueError(f"spectra stack to {beta.shape}, expected {(n1,) + grid.shape}")
    xi = grid.frequency_mesh()
    w1_hat = np.zeros((n1,) + grid.shape, dtype=complex)
    w2_hat = np.zeros((n1, m) + grid.shape, dtype=complex)
    singular = np.zeros(grid.shape, dtype=bool)
    for sl in _chunks(grid.shape, n1):
        inv, B2, sing = _symbol_inverse(plan, params, xi, sl, eps_sing)
        b = np.moveaxis(beta[:, sl], 0, -1)
        w1c = np.einsum("...ij,...j->...i", inv, b)
        w2c = inv @ B2
        w1_hat[:, sl] = np.moveaxis(w1c, -1, 0)
        w2_hat[:, :, sl] = np.moveaxis(w2c, (-2, -1), (0, 1))
        singular[sl] = sing
    # the Nyquist plane of an even axis has no mirror partner, so a complex symbol
    # there would break Hermitian symmetry; drop it
    nyq = nyquist_mask(grid)
    w1_hat[:, nyq] = 0.0
    w2_hat[:, :, nyq] = 0.0
    masked = float(singular.mean())
    warnings = []
    if masked > MASK_WARN_FRACTION:
        warnings.append(f"masked fraction {masked:.3g} exceeds {MASK_WARN_FRACTION}")
    worst, decay = pole_scan(plan, params, sp_freqs)
    tail_len = grid.periods[0] - grid.lengths[0]
    tail = math.exp(-decay * tail_len) if decay > 0 else math.inf
    w1c = inverse_transform(w1_hat, grid, real=False)
    re = np.linalg.norm(w1c.real)
    imag = float(np.linalg.norm(w1c.imag) / re) if re > 0 else 0.0
    return KernelPair(plan, params, grid, np.ascontiguousarray(w1c.real), w2_hat, singular,
                      eps_sing, masked, float(decay), tail, imag, warnings=warnings)


def band_limit_filter(grid: SpaceTimeGrid, cutoff) -> np.ndarray:
    """Indicator of ``|xi_k| <= cutoff_k`` on the spatial axes (broadcast over time)."""
    if np.ndim(cutoff) == 0:
        cutoff = [cutoff] * grid.dim
    mask = np.ones((1,) + grid.shape[1:], dtype=float)
    for k, c in enumerate(cutoff):
        xi = grid.frequencies(k + 1)
        shp = [1] * grid.ndim
        shp[k + 1] = xi.size
        mask = mask * (np.abs(xi) <= c).reshape(shp)
    return mask


def apply_w2(kernels: KernelPair, source_hat: np.ndarray, filtered: bool = True) -> np.ndarray:
    """Physical-space ``w2 * source`` from the spectrum ``(m, ...)`` of the source."""
    prod = np.einsum("ij...,j...->i...", kernels.w2_hat, source_hat)
    if filtered and kernels.spatial_filter is not None:
        prod = prod * kernels.spatial_filter
    return inverse_transform(prod, kernels.grid)


def convolve_w2(kernels: KernelPair, source: np.ndarray, mask=None, filtered=True) -> np.ndarray:
    """``w2 * (source . mask)`` for a physical-space source ``(m, ...)``."""
    return apply_w2(kernels, forward_transform(source, mask, kernels.grid), filtered)


def jordan_inverse_transform(lam: complex, n: int, t):
    """Inverse transform of ``(i xi + lam)^{-n}``: ``e^{-lam t} t^{n-1}/(n-1)!`` for ``t >= 0``.

    Convention: ``(1/2pi) int (i xi + lam)^{-n} e^{i t xi} d xi``.
    """
    lam = complex(lam)
    if not lam.real > 0:
        raise ValueError(f"need Re(lambda) > 0, got {lam}")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    t = np.asarray(t, dtype=float)
    pos = np.where(t >= 0, t, 0.0)
    val = np.exp(-lam * pos) * pos ** (n - 1) / math.factorial(int(n) - 1)
    out = np.where(t >= 0, val, 0.0)
    return complex(out) if out.ndim == 0 else out


@dataclass
class CausalityCheck:
    passed: bool
    far_mass: float
    near_mass: float
    sigma_t: float
    period: float
    time_stride: int
    per_column: np.ndarray


def causality_check(kernels: KernelPair, sigma_cells: float = 2.0, far_tol: float = 1e-6,
                    wrap_level: float = 1e-9, budget: int = 1 << 21) -> CausalityCheck:
    """Measure the smoothed ``w2`` mass at negative times.

    Each column is re-synthesised on a longer time period (so the wrapped
    tail is below ``wrap_level``), multiplied by a Gaussian window of width
    ``sigma_cells`` cells on every axis and inverse transformed.  Mass within
    ``6 sigma`` before ``t = 0`` is the smoothing leak and is reported as
    ``near_mass``; the check passes iff the mass further back (``far_mass``,
    relative to the column total) is at most ``far_tol``.
    """
    grid, plan = kernels.grid, kernels.plan
    nu = kernels.decay_rate
    dt = grid.spacings[0]
    need = 2 * math.log(1 / wrap_level) / nu if nu > 0 else grid.periods[0]
    period = max(need, grid.periods[0])
    space = math.prod(grid.shape[1:]) * plan.n1
    stride = 1
    while math.ceil(period / (dt * stride)) * space > budget and stride < grid.points[0] // 4:
        stride *= 2
    h = dt * stride
    nt = int(math.ceil(grid.lengths[0] / h))
    mt = max(int(math.ceil(period / h)), 2 * nt)
    dom = grid.domain
    ext = SpaceTimeGrid(dom, (nt,) + grid.points[1:], (mt - nt,) + grid.pad[1:])
    # ext may have a slightly different dt when stride does not divide N_t
    xi = ext.frequency_mesh()
    window = np.ones(ext.shape)
    for k in range(ext.ndim):
        window = window * np.exp(-0.5 * (xi[k] * sigma_cells * ext.spacings[k]) ** 2)
    sigma_t = sigma_cells * ext.spacings[0]
    near = int(math.ceil(6 * sigma_t / ext.spacings[0]))
    ratios = np.zeros((plan.n1, plan.m))
    near_ratios = np.zeros((plan.n1, plan.m))
    for j in range(plan.m):
        cols = np.zeros((plan.n1,) + ext.shape, dtype=complex)
        for sl in _chunks(ext.shape, plan.n1):
            inv, B2, _ = _symbol_inverse(plan, kernels.params, xi, sl, kernels.eps_sing)
            cols[:, sl] = np.moveaxis(inv @ B2[..., j:j + 1], (-2, -1), (0, -1))[..., 0]
        phys = np.abs(inverse_transform(cols * window, ext, real=False))
        tmass = phys.reshape(plan.n1, mt, -1).sum(axis=2)
        total = tmass.sum(axis=1)
        neg_far = tmass[:, mt // 2: mt - near].sum(axis=1)
        neg_near = tmass[:, mt - near:].sum(axis=1)
        ok = total > 1e-300
        ratios[ok, j] = neg_far[ok] / total[ok]
        near_ratios[ok, j] = neg_near[ok] / total[ok]
    far = float(ratios.max())
    return CausalityCheck(bool(far <= far_tol), far, float(near_ratios.max()), sigma_t,
                          mt * ext.spacings[0], stride, ratios)


def save_kernels(path, kernels: KernelPair) -> None:
    """Kernel cache: ``(n1, m + 1, ...)`` complex dump, slot 0 holding ``w1``."""
    stack = np.concatenate([kernels.w1[:, None].astype(complex), kernels.w2_hat], axis=1)
    meta = kernels.metadata()
    meta["kind"] = "kernels"
    fileio.dump_array(path, stack, [0.0, 0.0] + list(kernels.grid.spacings), meta)


def load_kernels(path) -> KernelPair:
    from .grid import DomainSpec

    stack, _, meta = fileio.load_array(path)
    if not meta or meta.get("kind") != "kernels":
        raise ValueError(f"{path}: not a kernel cache")
    system = EquationSystem(meta["m"], meta["dim"], tuple(meta["lhs"]), tuple(meta["rhs_order"]))
    plan = build_plan(system)
    dom = DomainSpec(meta["dim"], tuple(meta["extents"]), meta["horizon"], meta["m"])
    grid = SpaceTimeGrid(dom, tuple(meta["points"]), tuple(meta["pad"]))
    params = ParameterSet(np.array(meta["params"]))
    xi = grid.frequency_mesh()
    singular = np.zeros(grid.shape, dtype=bool)
    for sl in _chunks(grid.shape, plan.n1):
        B1, _ = assemble_symbol(plan, params, [xi[0][sl]] + list(xi[1:]))
        singular[sl] = invert_symbol(B1, meta["eps_sing"])[1]
    return KernelPair(plan, params, grid, np.ascontiguousarray(stack[:, 0].real),
                      np.ascontiguousarray(stack[:, 1:]), singular, meta["eps_sing"],
                      meta["masked_fraction"], meta["decay_rate"], meta["tail_bound"],
                      meta["imag_residue"], warnings=list(meta["warnings"]))
