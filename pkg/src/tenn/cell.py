"""A single teNN cell: a learnable reference series with attention and activation.

The cell compares its reference ``R`` (``n x d``) with an input ``X`` of at most
``n`` samples (padded with null samples) through KDTW, where the local kernel
is gated:

    E(i, j) = exp(-sum_k At[i, k] * (R[i, k] - X[j, k])**2)
    cross weight      K(i, j) = Ac[i, j] * E(i, j) / 3
    self-aligned      F(i, j) = Ac[i, j] * (E(i, i) + E(j, j)) / 6

``At`` (time attention, ``n x d``, nonnegative) replaces the single kernel
bandwidth by one per reference sample and dimension; ``Ac`` (activation matrix,
``n x n``, in ``[0, 1]``) weights every cell of the alignment grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .elastic import alignment_from_weights, as_samples

__all__ = [
    "TeNNCell",
    "CellGradients",
    "attended_local_kernel",
    "cell_forward",
    "cell_log_forward",
    "cell_gradients",
    "finite_difference_gradients",
]


@dataclass
class TeNNCell:
    """Parameters of one cell.

    Attributes:
        R: reference series, shape (n, d).
        At: time attention, shape (n, d), entries >= 0.
        Ac: activation matrix, shape (n, n), entries in [0, 1].
        label: category the cell votes for.
    """

    R: np.ndarray
    At: np.ndarray
    Ac: np.ndarray
    label: Optional[str] = None

    def __post_init__(self):
        self.R = np.ascontiguousarray(np.asarray(self.R, dtype=float))
        if self.R.ndim == 1:
            self.R = self.R[:, None]
        n, d = self.R.shape
        self.At = np.ascontiguousarray(np.asarray(self.At, dtype=float))
        self.Ac = np.ascontiguousarray(np.asarray(self.Ac, dtype=float))
        if self.At.shape != (n, d):
            raise ValueError(f"At must have shape {(n, d)}, got {self.At.shape}")
        if self.Ac.shape != (n, n):
            raise ValueError(f"Ac must have shape {(n, n)}, got {self.Ac.shape}")

    @classmethod
    def initial(cls, R, nu0: float = 1e-3, alpha0: float = 1.0, label=None, corridor=None):
        """Cell with uniform attention ``nu0`` and activation ``alpha0``.

        When ``corridor`` (a radius) is given, activations outside the band
        start at zero.
        """
        R = as_samples(R)
        n, d = R.shape
        Ac = np.full((n, n), float(alpha0))
        if corridor is not None:
            idx = np.arange(n)
            Ac[np.abs(idx[:, None] - idx[None, :]) > corridor] = 0.0
        return cls(R.copy(), np.full((n, d), float(nu0)), Ac, label)

    @property
    def length(self) -> int:
        return self.R.shape[0]

    @property
    def dimension(self) -> int:
        return self.R.shape[1]

    def copy(self) -> "TeNNCell":
        return TeNNCell(self.R.copy(), self.At.copy(), self.Ac.copy(), self.label)

    def project(self):
        """Clip parameters back into their domains in place."""
        np.clip(self.Ac, 0.0, 1.0, out=self.Ac)
        np.maximum(self.At, 0.0, out=self.At)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.length,
            "d": self.dimension,
            "R": self.R.tolist(),
            "At": self.At.tolist(),
            "Ac": self.Ac.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeNNCell":
        cell = cls(np.array(d["R"], dtype=float), np.array(d["At"], dtype=float),
                   np.array(d["Ac"], dtype=float), d.get("label"))
        if (cell.length, cell.dimension) != (d.get("n", cell.length), d.get("d", cell.dimension)):
            raise ValueError("declared n, d do not match the stored matrices")
        return cell

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "TeNNCell":
        return cls.from_dict(json.loads(s))


@dataclass
class CellGradients:
    """Gradients of a cell output, stored relative to the output itself.

    ``dR``, ``dAt`` and ``dAc`` hold ``dz/dtheta * exp(-log_scale)``. With
    ``log_scale == log_z`` (the usual case) they are the gradients of ``ln z``.
    """

    log_z: float
    log_scale: float
    dR: np.ndarray
    dAt: np.ndarray
    dAc: np.ndarray

    @property
    def z(self) -> float:
        return float(np.exp(self.log_z))

    def absolute(self):
        """Direct-domain gradients ``(dR, dAt, dAc)`` of ``z``."""
        s = np.exp(self.log_scale)
        return self.dR * s, self.dAt * s, self.dAc * s


def _check_input(cell: TeNNCell, X) -> np.ndarray:
    """Input samples padded with null samples to the cell length."""
    X = as_samples(X)
    n, d = cell.R.shape
    if X.shape[1] != d:
        raise ValueError(f"input dimension {X.shape[1]} does not match cell dimension {d}")
    if X.shape[0] > n:
        raise ValueError(f"input length {X.shape[0]} exceeds cell length {n}")
    if X.shape[0] < n:
        X = np.vstack([X, np.zeros((n - X.shape[0], d))])
    return X


def attended_local_kernel(cell: TeNNCell, X, i: int, j: int) -> float:
    """Gated local kernel ``Ac[i, j] * exp(-sum_k At[i, k] (R[i, k] - X[j, k])^2) / 3``."""
    X = _check_input(cell, X)
    return float(cell.Ac[i, j] * np.exp(-np.sum(cell.At[i] * (cell.R[i] - X[j]) ** 2)) / 3.0)


def cell_log_forward(cell: TeNNCell, X) -> float:
    """Natural log of the cell output."""
    X = _check_input(cell, X)
    return float(_kernels.cell_log_output(cell.R, cell.At, cell.Ac, X))


def cell_forward(cell: TeNNCell, X, return_grids: bool = False):
    """Cell output ``z``; may underflow to 0 for distant inputs (see ``cell_log_forward``).

    With ``return_grids`` the result is ``(z, AlignmentMatrices)`` where the
    grids run over the reference (rows) and the input (columns).
    """
    X = _check_input(cell, X)
    if not return_grids:
        return float(np.exp(_kernels.cell_log_output(cell.R, cell.At, cell.Ac, X)))
    _, K, F = _kernels.cell_weights(cell.R, cell.At, cell.Ac, X)
    am = alignment_from_weights(K, F)
    return am.value, am


def cell_gradients(cell: TeNNCell, X) -> CellGradients:
    """Output and gradients of a cell by one forward and one reversed pass."""
    X = _check_input(cell, X)
    logz, ref, dR, dAt, dAc = _kernels.cell_gradients(cell.R, cell.At, cell.Ac, X)
    return CellGradients(float(logz), float(ref), dR, dAt, dAc)


def finite_difference_gradients(cell: TeNNCell, X, h: float = 1e-6, log: bool = False):
    """Finite-difference gradients ``(dR, dAt, dAc)`` of ``z`` (or ``ln z``).

    Central differences inside the parameter domains; one-sided differences
    at the box edges (``Ac`` at 0 or 1, ``At`` at 0).
    """
    X = _check_input(cell, X)
    f = (lambda c: cell_log_forward(c, X)) if log else (lambda c: cell_forward(c, X))
    out = []
    for name, lo, hi in (("R", -np.inf, np.inf), ("At", 0.0, np.inf), ("Ac", 0.0, 1.0)):
        P = getattr(cell, name)
        G = np.empty_like(P)
        for idx in np.ndindex(P.shape):
            v = P[idx]
            up = v + h <= hi
            down = v - h >= lo
            c = cell.copy()
            Q = getattr(c, name)
            if up and down:
                Q[idx] = v + h
                fp = f(c)
                Q[idx] = v - h
                G[idx] = (fp - f(c)) / (2 * h)
            elif up:
                Q[idx] = v + h
                fp = f(c)
                Q[idx] = v
                G[idx] = (fp - f(c)) / h
            else:
                Q[idx] = v - h
                fm = f(c)
                Q[idx] = v
                G[idx] = (f(c) - fm) / h
        out.append(G)
    return tuple(out)
