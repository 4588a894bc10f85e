"""Elastic measures on raw time series: DTW, the KDTW kernel and its alignment grids.

KDTW sums, over every staircase alignment path between ``x`` and ``y``, two
families of products of the local kernel ``k(a, b) = exp(-nu * |a - b|^2) / 3``:

* cross terms, where each visited cell ``(p, q)`` contributes ``k(x[p], y[q])``;
* self-aligned terms, where each visited cell contributes
  ``(k(x[p], y[p]) + k(x[q], y[q])) / 2`` and diagonal moves are only allowed
  on the main diagonal.

Samples read past the end of a series are the null sample (the zero vector).
The self-aligned local terms compare same-index samples; an exhaustive
enumeration of alignment maps (:func:`brute_force_kdtw`) is the reference that
fixes this reading, and the recursion reproduces it to round-off.
"""

from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import _kernels

__all__ = [
    "TimeSeries",
    "Corridor",
    "AlignmentMatrices",
    "FBMatrix",
    "KernelUnderflowWarning",
    "local_kernel",
    "dtw_distance",
    "kdtw",
    "log_kdtw",
    "brute_force_kdtw",
    "alignment_maps",
    "forward_backward",
    "fb_matrix",
    "gram_matrix",
    "gram_psd_check",
    "write_grid_csv",
]

BRUTE_FORCE_MAX_LENGTH = 6
_TINY = np.finfo(float).tiny


class KernelUnderflowWarning(RuntimeWarning):
    """A kernel value fell below the smallest positive normal double."""


@dataclass
class TimeSeries:
    """An ``n x d`` grid of samples with an optional label and name."""

    samples: np.ndarray
    label: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"samples must be a non-empty n x d grid, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("samples must be finite")
        self.samples = np.ascontiguousarray(a)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dimension(self) -> int:
        return self.samples.shape[1]

    def at(self, k: int) -> np.ndarray:
        """Sample ``k``; indices outside ``[0, n)`` read as the null sample."""
        if 0 <= k < len(self):
            return self.samples[k]
        return np.zeros(self.dimension)

    def reversed(self) -> "TimeSeries":
        return TimeSeries(self.samples[::-1].copy(), self.label, self.name)

    def truncated(self, n: int) -> "TimeSeries":
        return TimeSeries(self.samples[:n].copy(), self.label, self.name)


SeriesLike = Union[TimeSeries, np.ndarray, Sequence]


def as_samples(x: SeriesLike) -> np.ndarray:
    if isinstance(x, TimeSeries):
        return x.samples
    return TimeSeries(x).samples


@dataclass(frozen=True)
class Corridor:
    """Sakoe-Chiba band of half-width ``radius`` samples (``None`` is unbounded)."""

    radius: Optional[int] = None

    def __post_init__(self):
        if self.radius is not None and self.radius < 0:
            raise ValueError("corridor radius must be nonnegative")

    def contains(self, p: int, q: int) -> bool:
        return self.radius is None or abs(p - q) <= self.radius

    @property
    def code(self) -> int:
        # -1 encodes "no corridor" for the compiled kernels
        return -1 if self.radius is None else int(self.radius)

    def check_feasible(self, n: int, m: int):
        if self.radius is not None and abs(n - m) > self.radius:
            raise ValueError(
                f"corridor radius {self.radius} cannot reach cell ({n - 1}, {m - 1})"
            )


def _corridor(c) -> Corridor:
    if isinstance(c, Corridor):
        return c
    if c is None or c == np.inf:
        return Corridor(None)
    return Corridor(int(c))


def local_kernel(a, b, nu: float) -> float:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return float(np.exp(-nu * np.sum((a - b) ** 2)) / 3.0)


def dtw_distance(x: SeriesLike, y: SeriesLike, corridor=None, cost: str = "sqeuclidean") -> float:
    """DTW between multidimensional series.

    ``cost`` selects the per-sample local cost: ``"sqeuclidean"`` (sum of
    squared differences over dimensions) or ``"euclidean"`` (its square root).
    """
    xs, ys = as_samples(x), as_samples(y)
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("series dimensions differ")
    if cost not in ("sqeuclidean", "euclidean"):
        raise ValueError(f"unknown local cost {cost!r}")
    c = _corridor(corridor)
    c.check_feasible(len(xs), len(ys))
    return float(_kernels.dtw(xs, ys, c.code, cost == "sqeuclidean"))


def _validated(x, y, nu, corridor):
    xs, ys = as_samples(x), as_samples(y)
    if xs.shape[1] != ys.shape[1]:
        raise ValueError("series dimensions differ")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    c = _corridor(corridor)
    c.check_feasible(len(xs), len(ys))
    return xs, ys, c


def _weights(x, y, nu, corridor):
    xs, ys, c = _validated(x, y, nu, corridor)
    return _kernels.kdtw_weights(xs, ys, float(nu), c.code)


def log_kdtw(x: SeriesLike, y: SeriesLike, nu: float = 1.0, corridor=None) -> float:
    """Natural log of :func:`kdtw`, computed with row rescaling (never underflows)."""
    xs, ys, c = _validated(x, y, nu, corridor)
    return float(_kernels.kdtw_log(xs, ys, float(nu), c.code, True))


def kdtw(x: SeriesLike, y: SeriesLike, nu: float = 1.0, corridor=None, rescale: bool = True) -> float:
    """KDTW kernel value between ``x`` and ``y``.

    With ``rescale=False`` the recursion runs in the plain direct domain; the
    default rescales rows and restores the value at the end, which only
    differs when the direct-domain grids would underflow.
    """
    xs, ys, c = _validated(x, y, nu, corridor)
    logv = _kernels.kdtw_log(xs, ys, float(nu), c.code, rescale)
    if logv < np.log(_TINY):
        warnings.warn(
            f"KDTW value exp({logv:.1f}) is below the smallest normal double; "
            "use log_kdtw", KernelUnderflowWarning, stacklevel=2)
    return float(np.exp(logv))


def alignment_maps(n: int, m: int):
    """Yield every alignment map between ``range(n)`` and ``range(m)``.

    Maps are staircase paths from ``(0, 0)`` to ``(n - 1, m - 1)`` with unit
    steps ``(1, 0)``, ``(0, 1)`` or ``(1, 1)``.
    """
    def extend(path):
        i, j = path[-1]
        if (i, j) == (n - 1, m - 1):
            yield list(path)
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                path.append((a, b))
                yield from extend(path)
                path.pop()

    yield from extend([(0, 0)])


def _embeddings(pi, s: TimeSeries):
    """The two projections of ``s`` along the map ``pi``.

    Step ``t`` of the first projection carries the sample indexed by the map's
    first coordinate, the second projection the sample indexed by its second.
    """
    return [s.at(i) for i, _ in pi], [s.at(j) for _, j in pi]


def brute_force_kdtw(x: SeriesLike, y: SeriesLike, nu: float = 1.0) -> float:
    """KDTW by exhaustive enumeration of alignment maps (no corridor).

    For each map ``pi`` both series are projected onto ``pi``'s two
    coordinates. The cross product pairs the first projection of ``x`` with the
    second projection of ``y``; the self-aligned product pairs equal
    projections (first with first, second with second) and averages the two
    pairings step by step. Maps with off-diagonal diagonal moves carry no
    self-aligned mass. Exponential cost: lengths are capped at 6.
    """
    xt = x if isinstance(x, TimeSeries) else TimeSeries(x)
    yt = y if isinstance(y, TimeSeries) else TimeSeries(y)
    n, m = len(xt), len(yt)
    if max(n, m) > BRUTE_FORCE_MAX_LENGTH:
        raise ValueError(
            f"enumeration is capped at length {BRUTE_FORCE_MAX_LENGTH}, got {n} x {m}")
    if xt.dimension != yt.dimension:
        raise ValueError("series dimensions differ")

    total = 0.0
    for pi in alignment_maps(n, m):
        x1, x2 = _embeddings(pi, xt)
        y1, y2 = _embeddings(pi, yt)
        cross = 1.0
        for a, b in zip(x1, y2):
            cross *= local_kernel(a, b, nu)
        total += cross
        on_diagonal = all(
            not (b[0] == a[0] + 1 and b[1] == a[1] + 1) or b[0] == b[1]
            for a, b in zip(pi, pi[1:]))
        if on_diagonal:
            selfp = 1.0
            for a1, b1, a2, b2 in zip(x1, y1, x2, y2):
                selfp *= 0.5 * (local_kernel(a1, b1, nu) + local_kernel(a2, b2, nu))
            total += selfp
    return total


@dataclass
class AlignmentMatrices:
    """Forward and backward KDTW grids of one (x, y) pair.

    Grids are ``(n + 1) x (m + 1)`` and stored row-rescaled; the public
    properties return direct-domain values. ``backward*`` grids are indexed in
    reversed time: entry ``[a, b]`` sums the paths over the last ``a`` samples
    of ``x`` and the last ``b`` samples of ``y``.
    """

    _fwd_c: np.ndarray
    _fwd_t: np.ndarray
    _fwd_log: np.ndarray
    _bwd_c: np.ndarray
    _bwd_t: np.ndarray
    _bwd_log: np.ndarray

    @staticmethod
    def _restore(g, logscale):
        with np.errstate(under="ignore"):
            return g * np.exp(logscale)[:, None]

    @property
    def forward(self):
        return self._restore(self._fwd_c, self._fwd_log)

    @property
    def forward_tilde(self):
        return self._restore(self._fwd_t, self._fwd_log)

    @property
    def backward(self):
        return self._restore(self._bwd_c, self._bwd_log)

    @property
    def backward_tilde(self):
        return self._restore(self._bwd_t, self._bwd_log)

    @property
    def shape(self):
        return self._fwd_c.shape

    @property
    def log_value(self) -> float:
        return float(_kernels.log_value(self._fwd_c, self._fwd_t, self._fwd_log))

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))

    def log_forward_total(self):
        with np.errstate(divide="ignore"):
            return np.log(self._fwd_c + self._fwd_t) + self._fwd_log[:, None]

    def log_backward_total(self):
        with np.errstate(divide="ignore"):
            return np.log(self._bwd_c + self._bwd_t) + self._bwd_log[:, None]


def forward_backward(x: SeriesLike, y: SeriesLike, nu: float = 1.0, corridor=None) -> AlignmentMatrices:
    """Forward grids on ``(x, y)`` and backward grids on the reversed pair.

    The backward pass reuses the forward recursion on the time-reversed local
    weights, so ``backward[a, b]`` is the path mass of the suffixes of length
    ``a`` and ``b``. For equal lengths this is exactly KDTW on the reversed
    series; the self-aligned diagonal rule is kept on the original diagonal.
    """
    K, F = _weights(x, y, nu, corridor)
    return alignment_from_weights(K, F)


def alignment_from_weights(K: np.ndarray, F: np.ndarray) -> AlignmentMatrices:
    """Forward and reversed passes over precomputed local weight grids."""
    n, m = K.shape
    C, T, _, _, la = _kernels.alignment_pass(K, F, 0, True)
    Kr = np.ascontiguousarray(K[::-1, ::-1])
    Fr = np.ascontiguousarray(F[::-1, ::-1])
    Cb, Tb, _, _, lb = _kernels.alignment_pass(Kr, Fr, n - m, True)
    return AlignmentMatrices(C, T, la, Cb, Tb, lb)


@dataclass
class FBMatrix:
    """Pointwise product of the forward grid with the flipped backward grid.

    Both grids start from ``C[0, 0] = C~[0, 0] = 1``, so the two corner cells
    hold twice the kernel value.
    """

    log_cells: np.ndarray

    @property
    def cells(self):
        with np.errstate(under="ignore"):
            return np.exp(self.log_cells)


def fb_matrix(am: AlignmentMatrices) -> FBMatrix:
    """``FB[i, j] = F[i, j] * B[n - i, m - j]`` with F, B the summed grids."""
    lf = am.log_forward_total()
    lb = am.log_backward_total()
    return FBMatrix(lf + lb[::-1, ::-1])


def gram_matrix(series: Sequence[SeriesLike], nu: float, corridor=None) -> np.ndarray:
    s = [as_samples(a) for a in series]
    G = np.empty((len(s), len(s)))
    for i, a in enumerate(s):
        for j in range(i, len(s)):
            G[i, j] = G[j, i] = kdtw(a, s[j], nu, corridor)
    return G


def gram_psd_check(series: Sequence[SeriesLike], nu: float) -> float:
    """Smallest eigenvalue of the unbounded-corridor KDTW Gram matrix."""
    if not 1 <= len(series) <= 32:
        raise ValueError("gram_psd_check takes between 1 and 32 series")
    return float(np.linalg.eigvalsh(gram_matrix(series, nu)).min())


def write_grid_csv(grid: np.ndarray, path, log: bool = False):
    """Write a grid as ``i,j,value`` rows (row-major); ``log`` stores log values."""
    g = np.asarray(grid, dtype=float)
    if log:
        with np.errstate(divide="ignore"):
            g = np.log(g)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "value"])
        for (i, j), v in np.ndenumerate(g):
            w.writerow([i, j, repr(float(v))])
