"""Space-time boxes, padded cell-centred grids and the masked Fourier transform.

Fields live on a padded grid of shape ``(M_t, M_1, ..., M_d)``; the physical
box ``[0, T] x [0, L_1] x ... x [0, L_d]`` occupies the leading
``(N_t, N_1, ..., N_d)`` cells of every axis and the remaining cells are
padding.  Arrays carrying several components put the component index(es) in
front of the grid axes, so a field with ``m`` components has shape
``(m, M_t, M_1, ...)``.

Transform convention (fixed once, used everywhere):

* forward:  ``F(xi) = sum_cells f(c) exp(-i xi.c) * dV``, summed over cell
  centres ``c``; this is the Riemann-sum approximation of the masked integral
  over the box when ``f`` is pre-multiplied by the box indicator.
* inverse:  the exact discrete inverse of the forward map, so that on the
  continuum scale it carries the usual ``1/(2 pi)^(d+1)`` factor.
* norms:   ``||F||^2 = sum |F|^2 * prod(dxi_k / 2 pi)`` equals
  ``||f||^2 = sum |f|^2 dV`` exactly (discrete Plancherel).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.fft

AXIS_NAMES = ("t", "x", "y", "z")

_workers = 1


def set_threads(n: int) -> None:
    """Set the number of FFT worker threads (1 gives bitwise-reproducible runs)."""
    global _workers
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _workers = int(n)


def get_threads() -> int:
    return _workers


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box Omega = prod [0, L_i] with time horizon T."""

    spatial_dim: int
    extents: tuple[float, ...]
    horizon: float
    components: int = 1

    def __post_init__(self):
        if self.spatial_dim not in (1, 2, 3):
            raise ValueError(f"spatial_dim must be 1, 2 or 3, got {self.spatial_dim}")
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if len(self.extents) != self.spatial_dim:
            raise ValueError(
                f"{self.spatial_dim}-d domain needs {self.spatial_dim} extents, "
                f"got {len(self.extents)}")
        if any(not (e > 0) for e in self.extents) or not (self.horizon > 0):
            raise ValueError("extents and horizon must be strictly positive")
        if self.components < 1:
            raise ValueError("components must be >= 1")


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform cell-centred grid on the padded space-time box.

    Axis 0 is time, axes 1..d are space.  ``points`` are the cell counts
    covering the physical box, ``pad`` the number of extra cells appended
    above each axis.
    """

    domain: DomainSpec
    points: tuple[int, ...]
    pad: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.ndim - 1

    @property
    def lengths(self) -> tuple[float, ...]:
        return (self.domain.horizon,) + self.domain.extents

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.points))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n + p for n, p in zip(self.points, self.pad))

    @property
    def periods(self) -> tuple[float, ...]:
        return tuple(M * h for M, h in zip(self.shape, self.spacings))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacings)

    @property
    def interior(self) -> tuple[slice, ...]:
        """Index of the physical box inside a padded array."""
        return tuple(slice(0, n) for n in self.points)

    def centers(self, axis: int) -> np.ndarray:
        """Cell centres along ``axis`` over the full padded length."""
        h = self.spacings[axis]
        return (np.arange(self.shape[axis]) + 0.5) * h

    def frequencies(self, axis: int) -> np.ndarray:
        """Angular frequencies of the padded axis in standard FFT order."""
        return 2 * np.pi * scipy.fft.fftfreq(self.shape[axis], d=self.spacings[axis])

    def mesh(self, interior: bool = False) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (t, x, ...)."""
        out = []
        for k in range(self.ndim):
            c = self.centers(k)
            if interior:
                c = c[: self.points[k]]
            shp = [1] * self.ndim
            shp[k] = c.size
            out.append(c.reshape(shp))
        return out

    def frequency_mesh(self) -> list[np.ndarray]:
        out = []
        for k in range(self.ndim):
            shp = [1] * self.ndim
            shp[k] = self.shape[k]
            out.append(self.frequencies(k).reshape(shp))
        return out

    def indicator(self) -> np.ndarray:
        """Indicator of Omega x (0, T): 1 on cells whose centres lie in the box."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.interior] = True
        return mask

    def half_pad_region(self) -> np.ndarray:
        """Cells up to the half-padding mark on every axis (box included)."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(0, n + p // 2) for n, p in zip(self.points, self.pad))] = True
        return mask


def _pad_length(n: int, factor: Fraction) -> int:
    return max(math.ceil(factor * n), 2 * n)


def build_grid(domain: DomainSpec, resolution: Sequence[int],
               pad_factor=2) -> SpaceTimeGrid:
    """Build the padded grid for ``domain``.

    ``resolution`` lists cell counts ``(N_t, N_1, ..., N_d)``.  ``pad_factor``
    is a scalar or per-axis sequence of rationals >= 1; each padded length is
    ``max(ceil(pad_factor * N), 2 N)`` so linear convolutions of box-supported
    fields are always representable.
    """
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != domain.spatial_dim + 1:
        raise ValueError(
            f"need {domain.spatial_dim + 1} resolution entries (t first), got {len(resolution)}")
    if any(n < 4 for n in resolution):
        raise ValueError(f"resolution must be >= 4 per axis, got {resolution}")
    if np.ndim(pad_factor) == 0:
        factors = [pad_factor] * len(resolution)
    else:
        factors = list(pad_factor)
        if len(factors) != len(resolution):
            raise ValueError("pad_factor needs one entry per axis")
    fracs = []
    for f in factors:
        fr = Fraction(f).limit_denominator(10**6) if not isinstance(f, Fraction) else f
        if fr < 1:
            raise ValueError(f"pad_factor must be >= 1, got {f}")
        fracs.append(fr)
    pad = tuple(_pad_length(n, f) - n for n, f in zip(resolution, fracs))
    return SpaceTimeGrid(domain, resolution, pad)


def _phase(grid: SpaceTimeGrid) -> np.ndarray:
    # cell-centre offset: samples sit at (j + 1/2) h
    ph = np.ones(grid.shape, dtype=complex)
    for xi, h in zip(grid.frequency_mesh(), grid.spacings):
        ph = ph * np.exp(-0.5j * xi * h)
    return ph


def _check_shape(arr: np.ndarray, grid: SpaceTimeGrid, what: str) -> None:
    if arr.shape[arr.ndim - grid.ndim:] != grid.shape:
        raise ValueError(f"{what} shape {arr.shape} does not end with grid shape {grid.shape}")


def apply_mask(field: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, field, 0.0)


def forward_transform(field: np.ndarray, mask: np.ndarray | None,
                      grid: SpaceTimeGrid) -> np.ndarray:
    """Discrete FI transform of ``field`` restricted by ``mask``.

    Leading axes beyond the grid axes are treated as component indices.
    """
    _check_shape(field, grid, "field")
    if mask is not None:
        if mask.shape != grid.shape:
            raise ValueError(f"mask shape {mask.shape} != grid shape {grid.shape}")
        field = apply_mask(field, mask)
    axes = tuple(range(field.ndim - grid.ndim, field.ndim))
    spec = scipy.fft.fftn(field, axes=axes, workers=_workers)
    spec *= grid.cell_volume * _phase(grid)
    return spec


def inverse_transform(spec: np.ndarray, grid: SpaceTimeGrid,
                      real: bool = True) -> np.ndarray:
    """Exact discrete inverse of :func:`forward_transform`."""
    _check_shape(spec, grid, "spectrum")
    axes = tuple(range(spec.ndim - grid.ndim, spec.ndim))
    out = scipy.fft.ifftn(spec / _phase(grid), axes=axes, workers=_workers)
    out /= grid.cell_volume
    return out.real if real else out


def field_norm(field: np.ndarray, grid: SpaceTimeGrid,
               mask: np.ndarray | None = None) -> float:
    """Grid L2 norm ``sqrt(sum |f|^2 dV)`` (over ``mask`` if given)."""
    with np.errstate(over="ignore", invalid="ignore"):
        sq = np.abs(field) ** 2
    if mask is not None:
        sq = np.where(mask, sq, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sqrt(sq.sum() * grid.cell_volume))


def spectral_norm(spec: np.ndarray, grid: SpaceTimeGrid) -> float:
    """Frequency-grid L2 norm matching :func:`field_norm` under Plancherel."""
    dxi = math.prod(1.0 / p for p in grid.periods)  # prod dxi_k / (2 pi)
    return float(np.sqrt((np.abs(spec) ** 2).sum() * dxi))


def axis_transform(arr: np.ndarray, grid: SpaceTimeGrid, axes: Sequence[int]) -> np.ndarray:
    """Transform over a subset of grid axes (e.g. a face or the t = 0 slice).

    The trailing ``len(axes)`` dimensions of ``arr`` hold samples along the
    grid axes ``axes`` (interior or padded length); they are zero-padded to the
    padded length and transformed with the same scaling and phase convention
    as :func:`forward_transform`.
    """
    axes = tuple(axes)
    lead = arr.ndim - len(axes)
    pad_width = [(0, 0)] * lead
    for k, ax in enumerate(axes):
        n = arr.shape[lead + k]
        if n > grid.shape[ax]:
            raise ValueError(f"axis {ax}: {n} samples exceed padded length {grid.shape[ax]}")
        pad_width.append((0, grid.shape[ax] - n))
    full = np.pad(arr, pad_width)
    fax = tuple(range(lead, arr.ndim))
    spec = scipy.fft.fftn(full, axes=fax, workers=_workers)
    for k, ax in enumerate(axes):
        h = grid.spacings[ax]
        xi = grid.frequencies(ax)
        shp = [1] * spec.ndim
        shp[lead + k] = xi.size
        spec = spec * (h * np.exp(-0.5j * xi * h)).reshape(shp)
    return spec
