"""Differentiable multi-level 2D discrete wavelet transform (Daubechies-2).

Analysis is zero-padded full convolution downsampled to the odd (0-based)
phase, which keeps exactly the coefficients whose filter support overlaps
the signal: m = floor((n+3)/2) per axis and level. Stacking the low- and
high-pass analysis matrices then gives orthonormal columns, so energy is
conserved exactly and the inverse transform is the transpose.

Each separable level filters the time axis (last) first, then the channel
axis, and the subband name orders the filters in that application order:
LH means low-pass along time, high-pass along channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import sqrt as _msqrt

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor


@dataclass(frozen=True)
class WaveletFilters:
    """Orthonormal analysis pair; synthesis is the transpose of analysis."""

    lo: tuple[float, float, float, float]
    hi: tuple[float, float, float, float]

    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=np.float64)

    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi, dtype=np.float64)


def db2_filters() -> WaveletFilters:
    """Length-4 orthogonal filters with two vanishing moments.

    lo solves sum h = sqrt(2), sum h^2 = 1, shift-2 orthogonality, and the
    quadrature mirror hi[n] = (-1)^n lo[3-n] kills constants and ramps.
    """
    s3 = _msqrt(3.0)
    norm = 4.0 * _msqrt(2.0)
    lo = ((1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm)
    hi = (lo[3], -lo[2], lo[1], -lo[0])
    return WaveletFilters(lo=lo, hi=hi)


def band_length(n: int) -> int:
    """Output length of one analysis pass over a length-n axis."""
    return (n + 3) // 2


def subband_shapes(rows: int, cols: int, levels: int) -> list[tuple[int, int]]:
    """Shapes per level 1..levels; the final entry is also the LL shape."""
    if levels < 1:
        raise ConfigError(f"level count must be >= 1, got {levels}")
    shapes = []
    r, c = rows, cols
    for level in range(1, levels + 1):
        if r < 1 or c < 1:
            raise ConfigError(f"input collapsed below 1 sample entering level {level}")
        r, c = band_length(r), band_length(c)
        shapes.append((r, c))
    return shapes


def coefficient_count(rows: int, cols: int, levels: int) -> int:
    """Total pyramid size: 3 detail subbands per level plus the final LL."""
    shapes = subband_shapes(rows, cols, levels)
    return 3 * sum(r * c for r, c in shapes) + shapes[-1][0] * shapes[-1][1]


def _analysis_matrix(n: int, filt: np.ndarray) -> np.ndarray:
    m = band_length(n)
    a = np.zeros((m, n))
    for k in range(m):
        for j in range(max(0, 2 * k - 2), min(n, 2 * k + 2)):
            a[k, j] = filt[2 * k + 1 - j]
    return a


@lru_cache(maxsize=None)
def _db2_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    f = db2_filters()
    return _analysis_matrix(n, f.lo_array()), _analysis_matrix(n, f.hi_array())


def _matrices(n: int, filters: WaveletFilters) -> tuple[np.ndarray, np.ndarray]:
    if filters == db2_filters():
        return _db2_matrices(n)
    return _analysis_matrix(n, filters.lo_array()), _analysis_matrix(n, filters.hi_array())


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def dwt1d(x, filters: WaveletFilters | None = None) -> tuple[Tensor, Tensor]:
    """One analysis pass along the last axis -> (approx, detail)."""
    x = _lift(x)
    filters = filters or db2_filters()
    n = x.shape[-1] if x.ndim else 0
    if x.ndim < 1 or n < 1:
        raise DimensionError(f"dwt1d: empty signal, shape {x.shape}")
    ah, ag = _matrices(n, filters)
    return T.const_axis_matmul(x, ah, -1), T.const_axis_matmul(x, ag, -1)


def dwt2d_level(x, filters: WaveletFilters | None = None) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Single separable level -> (ll, lh, hl, hh), each (..., m_r, m_c)."""
    x = _lift(x)
    filters = filters or db2_filters()
    if x.ndim < 2:
        raise DimensionError(f"dwt2d_level: need a matrix, got shape {x.shape}")
    r, c = x.shape[-2], x.shape[-1]
    if r < 1 or c < 1:
        raise DimensionError(f"dwt2d_level: degenerate shape {x.shape}")
    ah_c, ag_c = _matrices(c, filters)
    ah_r, ag_r = _matrices(r, filters)
    xl = T.const_axis_matmul(x, ah_c, -1)
    xh = T.const_axis_matmul(x, ag_c, -1)
    ll = T.const_axis_matmul(xl, ah_r, -2)
    lh = T.const_axis_matmul(xl, ag_r, -2)
    hl = T.const_axis_matmul(xh, ah_r, -2)
    hh = T.const_axis_matmul(xh, ag_r, -2)
    return ll, lh, hl, hh


@dataclass
class WaveletPyramid:
    """Multi-level decomposition: final LL plus (LH, HL, HH) per level.

    `input_shapes[l]` is the (rows, cols) fed into level l+1; entry 0 is the
    original shape, which the inverse transform needs.
    """

    ll: Tensor
    details: list[tuple[Tensor, Tensor, Tensor]]
    input_shapes: list[tuple[int, int]] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)

    def coefficient_count(self) -> int:
        total = self.ll.shape[-2] * self.ll.shape[-1]
        for lh, hl, hh in self.details:
            for band in (lh, hl, hh):
                total += band.shape[-2] * band.shape[-1]
        return total

    def subbands(self) -> list[tuple[str, Tensor]]:
        """Canonical order: LL_J, then LH_l, HL_l, HH_l for l = 1..J."""
        bands = [(f"ll{self.levels}", self.ll)]
        for level, (lh, hl, hh) in enumerate(self.details, start=1):
            bands.extend([(f"lh{level}", lh), (f"hl{level}", hl), (f"hh{level}", hh)])
        return bands

    def flatten(self) -> Tensor:
        """All coefficients in canonical order along the last axis."""
        pieces = []
        for _, band in self.subbands():
            lead = band.shape[:-2]
            pieces.append(T.reshape(band, lead + (band.shape[-2] * band.shape[-1],)))
        return T.concat(pieces, axis=-1)


def dwt2d_multilevel(x, levels: int, filters: WaveletFilters | None = None) -> WaveletPyramid:
    """Recurse the separable level on LL `levels` times."""
    x = _lift(x)
    filters = filters or db2_filters()
    if levels < 1:
        raise ConfigError(f"level count must be >= 1, got {levels}")
    if x.ndim < 2:
        raise DimensionError(f"dwt2d_multilevel: need a matrix, got shape {x.shape}")
    shapes = [(x.shape[-2], x.shape[-1])]
    details: list[tuple[Tensor, Tensor, Tensor]] = []
    ll = x
    for level in range(1, levels + 1):
        r, c = ll.shape[-2], ll.shape[-1]
        if r < 1 or c < 1:
            raise ConfigError(f"input collapsed below 1 sample entering level {level}")
        ll, lh, hl, hh = dwt2d_level(ll, filters)
        details.append((lh, hl, hh))
        shapes.append((ll.shape[-2], ll.shape[-1]))
    return WaveletPyramid(ll=ll, details=details, input_shapes=shapes[:-1])


def idwt2d_multilevel(pyramid: WaveletPyramid, filters: WaveletFilters | None = None) -> Tensor:
    """Exact inverse via transposed analysis matrices."""
    filters = filters or db2_filters()
    if not pyramid.input_shapes:
        raise DimensionError("pyramid is missing its original-shape record")
    if len(pyramid.input_shapes) != pyramid.levels:
        raise DimensionError(
            f"pyramid records {len(pyramid.input_shapes)} shapes for {pyramid.levels} levels"
        )
    x = pyramid.ll
    for level in range(pyramid.levels, 0, -1):
        lh, hl, hh = pyramid.details[level - 1]
        r, c = pyramid.input_shapes[level - 1]
        ah_c, ag_c = _matrices(c, filters)
        ah_r, ag_r = _matrices(r, filters)
        xl = T.add(T.const_axis_matmul(x, ah_r.T, -2), T.const_axis_matmul(lh, ag_r.T, -2))
        xh = T.add(T.const_axis_matmul(hl, ah_r.T, -2), T.const_axis_matmul(hh, ag_r.T, -2))
        x = T.add(T.const_axis_matmul(xl, ah_c.T, -1), T.const_axis_matmul(xh, ag_c.T, -1))
    return x
