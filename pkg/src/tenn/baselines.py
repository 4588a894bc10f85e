"""1-nearest-neighbor classifiers over DTW and KDTW."""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .data import Dataset
from .elastic import dtw_distance, log_kdtw

__all__ = [
    "NU_GRID",
    "OneNNResult",
    "similarity_matrix",
    "one_nn_classify",
    "loo_accuracy",
    "loo_tune_nu",
    "append_results_csv",
]

NU_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)


@dataclass
class OneNNResult:
    predictions: List[str]
    accuracy: float
    measure: str
    nu: Optional[float]
    seconds: float


def similarity_matrix(queries: Sequence[np.ndarray], refs: Sequence[np.ndarray], measure: str,
                      nu: float = 1.0, corridor=None, cost: str = "euclidean") -> np.ndarray:
    """Scores where larger means closer: ``-dtw`` or ``ln kdtw``."""
    if measure == "dtw":
        f = lambda a, b: -dtw_distance(a, b, corridor, cost)
    elif measure == "kdtw":
        f = lambda a, b: log_kdtw(a, b, nu, corridor)
    else:
        raise ValueError(f"unknown measure {measure!r}")
    return np.array([[f(a, b) for b in refs] for a in queries])


def one_nn_classify(train: Dataset, test: Dataset, measure: str = "dtw", nu: float = 1.0,
                    corridor=None, cost: str = "euclidean") -> OneNNResult:
    """Label every test item with its nearest train item; ties go to the lowest index.

    ``cost`` is the DTW per-sample cost (``"euclidean"`` or ``"sqeuclidean"``);
    KDTW scores compare log values, which orders neighbors exactly like the
    kernel values themselves.
    """
    t0 = time.perf_counter()
    n = max(train.max_length, test.max_length)
    A = [s.samples for s in test.padded_to(n).items]
    B = [s.samples for s in train.padded_to(n).items]
    S = similarity_matrix(A, B, measure, nu, corridor, cost)
    pred = [train.items[int(np.argmax(row))].label for row in S]
    acc = float(np.mean([p == s.label for p, s in zip(pred, test.items)]))
    return OneNNResult(pred, acc, measure, nu if measure == "kdtw" else None,
                       time.perf_counter() - t0)


def loo_accuracy(train: Dataset, nu: float, corridor=None) -> float:
    """Leave-one-out 1NN-KDTW accuracy on ``train``."""
    X = [s.samples for s in train.items]
    S = similarity_matrix(X, X, "kdtw", nu, corridor)
    np.fill_diagonal(S, -np.inf)
    labels = train.labels
    return float(np.mean([labels[int(np.argmax(r))] == labels[i] for i, r in enumerate(S)]))


def loo_tune_nu(train: Dataset, candidates: Sequence[float] = NU_GRID, corridor=None) -> float:
    """Candidate with the best leave-one-out accuracy; ties go to the smaller value."""
    cands = sorted(set(float(c) for c in candidates))
    if not cands:
        raise ValueError("no candidate values")
    if len(cands) == 1:
        return cands[0]
    scores = [loo_accuracy(train, c, corridor) for c in cands]
    return cands[int(np.argmax(scores))]


def append_results_csv(path, dataset: str, result: OneNNResult):
    """Append a ``dataset, measure, nu, accuracy, wallTimeSeconds`` row."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["dataset", "measure", "nu", "accuracy", "wallTimeSeconds"])
        w.writerow([dataset, result.measure, "" if result.nu is None else repr(result.nu),
                    f"{result.accuracy:.6f}", f"{result.seconds:.3f}"])
