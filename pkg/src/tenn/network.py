"""The full network: a bank of cells grouped by category.

For an input ``x`` every category keeps the output of its best cell, and the
kept outputs are normalized to a probability vector ``o_i = z_i / sum_j z_j``.
Outputs are handled as logs throughout so that tiny kernel values do not
collapse to zero before normalization.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .cell import TeNNCell, cell_log_forward

__all__ = [
    "TeNNNetwork",
    "NetworkOutput",
    "SparsityReport",
    "best_cell_per_category",
    "infer",
    "infer_many",
    "predict",
    "normalize_log_outputs",
    "sparsity_report",
]

ZERO_THRESHOLD = 1e-6


@dataclass
class TeNNNetwork:
    """Cells grouped by category, ``refs_per_category`` cells each."""

    cells: List[TeNNCell]
    categories: List[str]
    refs_per_category: int = 1

    def __post_init__(self):
        self.categories = list(self.categories)
        if len(set(self.categories)) != len(self.categories):
            raise ValueError("categories must be distinct")
        if self.refs_per_category < 1:
            raise ValueError("refs_per_category must be positive")
        counts = {c: 0 for c in self.categories}
        for cell in self.cells:
            if cell.label not in counts:
                raise ValueError(f"cell label {cell.label!r} is not a network category")
            counts[cell.label] += 1
        bad = [c for c, k in counts.items() if k != self.refs_per_category]
        if bad:
            raise ValueError(
                f"categories {bad} do not own exactly {self.refs_per_category} cells")
        shapes = {c.R.shape for c in self.cells}
        if len(shapes) > 1:
            raise ValueError(f"cells disagree on shape: {sorted(shapes)}")

    @property
    def length(self) -> int:
        return self.cells[0].length

    @property
    def dimension(self) -> int:
        return self.cells[0].dimension

    def cell_indices(self, category) -> List[int]:
        return [i for i, c in enumerate(self.cells) if c.label == category]

    def copy(self) -> "TeNNNetwork":
        return TeNNNetwork([c.copy() for c in self.cells], list(self.categories),
                           self.refs_per_category)

    def to_dict(self) -> dict:
        return {
            "categories": list(self.categories),
            "refsPerCategory": self.refs_per_category,
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeNNNetwork":
        return cls([TeNNCell.from_dict(c) for c in d["cells"]], d["categories"],
                   int(d["refsPerCategory"]))

    def save(self, path, extra: Optional[dict] = None):
        doc = self.to_dict()
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "TeNNNetwork":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump_matrices(self, directory) -> List[str]:
        """Write ``R``, ``At`` and ``Ac`` of every cell as plain CSV grids."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for i, cell in enumerate(self.cells):
            for name in ("R", "At", "Ac"):
                p = os.path.join(directory, f"cell{i:03d}_{name}.csv")
                np.savetxt(p, getattr(cell, name), delimiter=",", fmt="%.17g")
                paths.append(p)
        return paths


@dataclass
class NetworkOutput:
    """Best cell per category and the normalized outputs.

    Attributes:
        per_category: ``(category, cell index, z)`` for each category in order.
        log_z: natural logs of the kept outputs.
        normalized: probability vector over categories.
        degenerate: every kept output is exactly zero; ``normalized`` is uniform.
    """

    per_category: list
    log_z: np.ndarray
    normalized: np.ndarray
    degenerate: bool = False


def normalize_log_outputs(log_z: np.ndarray):
    """``(o, degenerate)`` with ``o_i = z_i / sum_j z_j`` computed from ``ln z``."""
    log_z = np.asarray(log_z, dtype=float)
    top = log_z.max()
    if not np.isfinite(top):
        return np.full(len(log_z), 1.0 / len(log_z)), True
    w = np.exp(log_z - top)
    return w / w.sum(), False


def _cell_logs(net: TeNNNetwork, x, indices=None) -> np.ndarray:
    idx = range(len(net.cells)) if indices is None else indices
    return np.array([cell_log_forward(net.cells[i], x) for i in idx])


def _select(net: TeNNNetwork, logs: np.ndarray):
    """Per category, the first cell achieving the maximal log output."""
    out = []
    for cat in net.categories:
        best, best_log = -1, -np.inf
        for i in net.cell_indices(cat):
            if best < 0 or logs[i] > best_log:
                best, best_log = i, logs[i]
        out.append((cat, best, best_log))
    return out


def best_cell_per_category(net: TeNNNetwork, x) -> list:
    """``(category, cell index, z)`` per category; ties go to the lowest index."""
    return [(c, i, float(np.exp(l))) for c, i, l in _select(net, _cell_logs(net, x))]


def _output_from_logs(net: TeNNNetwork, logs: np.ndarray) -> NetworkOutput:
    sel = _select(net, logs)
    log_z = np.array([l for _, _, l in sel])
    o, degenerate = normalize_log_outputs(log_z)
    return NetworkOutput([(c, i, float(np.exp(l))) for c, i, l in sel], log_z, o, degenerate)


def infer(net: TeNNNetwork, x) -> NetworkOutput:
    if not net.categories:
        raise ValueError("network has no categories")
    return _output_from_logs(net, _cell_logs(net, x))


def infer_many(net: TeNNNetwork, xs: Sequence, threads: int = 1) -> List[NetworkOutput]:
    """:func:`infer` over many inputs; results keep input order for any thread count."""
    if threads <= 1:
        return [infer(net, x) for x in xs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda x: infer(net, x), xs))


def predict(net: TeNNNetwork, x) -> str:
    """Category with maximal normalized output; ties go to the first category."""
    out = infer(net, x)
    return net.categories[int(np.argmax(out.normalized))]


@dataclass
class SparsityReport:
    """Percent of (near-)zero entries of ``Ac`` and ``At`` per cell."""

    ac_percent: List[float] = field(default_factory=list)
    at_percent: List[float] = field(default_factory=list)

    @property
    def mean_ac(self) -> float:
        return float(np.mean(self.ac_percent))

    @property
    def mean_at(self) -> float:
        return float(np.mean(self.at_percent))

    def write_csv(self, path, dataset: str = ""):
        """Rows ``dataset, Ac%, At%``: one per cell, then the network mean."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "cell", "Ac%", "At%"])
            for i, (a, t) in enumerate(zip(self.ac_percent, self.at_percent)):
                w.writerow([dataset, i, f"{a:.4f}", f"{t:.4f}"])
            w.writerow([dataset, "mean", f"{self.mean_ac:.4f}", f"{self.mean_at:.4f}"])


def _zero_percent(a: np.ndarray, threshold: float) -> float:
    return 100.0 * float(np.mean(np.abs(a) <= threshold))


def sparsity_report(net: TeNNNetwork, zero_threshold: float = ZERO_THRESHOLD) -> SparsityReport:
    if zero_threshold < 0:
        raise ValueError("zero_threshold must be nonnegative")
    return SparsityReport(
        [_zero_percent(c.Ac, zero_threshold) for c in net.cells],
        [_zero_percent(c.At, zero_threshold) for c in net.cells],
    )
