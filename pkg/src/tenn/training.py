"""Loss, centroid initialization and stochastic gradient training of a network.

The data term of the loss is the categorical cross entropy of the normalized
outputs ``o_i = z_i / sum_j z_j``. Its gradient with respect to a kept cell
output is ``(o_i - y_i) / z_i``, so multiplying by the cell gradient of ``z``
gives ``(o_i - y_i) * d ln z_i / d theta``: the training loop works with
gradients of ``ln z`` and never forms a raw (possibly underflowing) ``z``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .cell import TeNNCell, cell_gradients, cell_log_forward
from .data import Dataset, pad_to_length
from .elastic import TimeSeries, as_samples, log_kdtw
from .network import TeNNNetwork, _select, normalize_log_outputs

__all__ = [
    "TrainConfig",
    "TrainReport",
    "CentroidResult",
    "DivergenceError",
    "InsufficientMembersError",
    "cce_loss",
    "loss_grad_wrt_z",
    "project_parameters",
    "kdtw_medoid",
    "kdtw_centroid",
    "spectral_partition",
    "init_network",
    "train",
]

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-300


class DivergenceError(RuntimeError):
    """The training loss became non-finite."""


class InsufficientMembersError(ValueError):
    """A category has fewer members than references to initialize."""


@dataclass
class TrainConfig:
    """Meta-parameters of the training loop.

    Attributes:
        lambda_t: L1 weight on the attention matrices.
        lambda_a: L1 weight on the activation matrices.
        eta: relaxation coefficient (step length of the normalized update).
        batch_size: samples per batch; an epoch has ``max(1, N // batch_size)`` batches.
        nu0: initial attention value, also the centroid bandwidth.
        alpha0: initial activation value.
        refs_per_category: cells per category.
        max_epoch: number of epochs.
        optimize_r, optimize_ac, optimize_at: ablation switches.
        patience: epochs without a new train-accuracy maximum and without a new
            loss minimum before ``eta`` is divided by ``decay_factor``.
        decay_factor: learning-rate divisor.
        epsilon_norm: added to the gradient norm of each cell update.
        per_cell_factor: numerator of the update normalizer.
        seed: seed for batch splits and clustering.
        corridor: optional radius; activations outside it start at 0.
        frozen_at_nu: attention value used when ``optimize_at`` is off. None
            selects it by leave-one-out 1NN-KDTW on the training set.
        centroid_epochs, centroid_eta: averaging run of each initial reference.
        threads: worker threads for per-sample evaluations (results are reduced
            in sample order, so any thread count gives identical numbers).
    """

    lambda_t: float = 1e-3
    lambda_a: float = 1e-3
    eta: float = 0.1
    batch_size: int = 64
    nu0: float = 1e-3
    alpha0: float = 1.0
    refs_per_category: int = 1
    max_epoch: int = 2000
    optimize_r: bool = True
    optimize_ac: bool = True
    optimize_at: bool = True
    patience: int = 20
    decay_factor: float = 1.05
    epsilon_norm: float = 1e-12
    per_cell_factor: float = 1.0
    seed: int = 0
    corridor: Optional[int] = None
    frozen_at_nu: Optional[float] = None
    centroid_epochs: int = 100
    centroid_eta: float = 0.1
    threads: int = 1

    def __post_init__(self):
        checks = [
            (self.lambda_t >= 0, "lambda_t must be >= 0"),
            (self.lambda_a >= 0, "lambda_a must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.nu0 > 0, "nu0 must be > 0"),
            (0 < self.alpha0 <= 1, "alpha0 must be in (0, 1]"),
            (self.refs_per_category >= 1, "refs_per_category must be >= 1"),
            (self.max_epoch >= 0, "max_epoch must be >= 0"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.decay_factor >= 1, "decay_factor must be >= 1"),
            (self.epsilon_norm > 0, "epsilon_norm must be > 0"),
            (self.per_cell_factor > 0, "per_cell_factor must be > 0"),
            (self.corridor is None or self.corridor >= 0, "corridor must be >= 0"),
            (self.frozen_at_nu is None or self.frozen_at_nu >= 0, "frozen_at_nu must be >= 0"),
            (self.centroid_epochs >= 0, "centroid_epochs must be >= 0"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainReport:
    """Per-epoch trace and the two selected snapshots.

    ``loss`` (cross-entropy plus L1 terms), ``data_loss`` (cross-entropy
    only) and ``train_accuracy`` of epoch ``e`` are measured on the whole
    training set with the parameters reached at the end of that epoch.
    ``best_by_train_error`` (last minimum of the training error) and
    ``best_by_loss`` (last minimum of the cross-entropy) are epoch numbers;
    0 denotes the initial network.
    """

    loss: List[float] = field(default_factory=list)
    data_loss: List[float] = field(default_factory=list)
    train_accuracy: List[float] = field(default_factory=list)
    eta: List[float] = field(default_factory=list)
    best_by_train_error: int = 0
    best_by_loss: int = 0
    initial_loss: float = float("nan")
    initial_train_accuracy: float = float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "trainAccuracy", "eta"])
            for e, (l, a, h) in enumerate(zip(self.loss, self.train_accuracy, self.eta), 1):
                w.writerow([e, repr(l), repr(a), repr(h)])


def _labelled(items) -> List[TimeSeries]:
    if isinstance(items, Dataset):
        return items.items
    return list(items)


def _regularizer(net: TeNNNetwork, lambda_t: float, lambda_a: float) -> float:
    return (lambda_t * sum(np.abs(c.At).sum() for c in net.cells)
            + lambda_a * sum(np.abs(c.Ac).sum() for c in net.cells))


def _data_loss(o: np.ndarray, true_index: int) -> float:
    return -float(np.log(max(o[true_index], LOG_FLOOR)))


def cce_loss(net: TeNNNetwork, batch, lambda_t: float, lambda_a: float) -> float:
    """Cross entropy summed over ``batch`` plus the L1 penalties."""
    total = 0.0
    for x in _labelled(batch):
        logs = np.array([cell_log_forward(c, x) for c in net.cells])
        sel = _select(net, logs)
        o, _ = normalize_log_outputs(np.array([l for _, _, l in sel]))
        total += _data_loss(o, net.categories.index(x.label))
    return total + _regularizer(net, lambda_t, lambda_a)


def loss_grad_wrt_z(z: Sequence[float], true_index: int) -> np.ndarray:
    """``d(-ln o_true) / dz``: ``1/sum z`` for wrong categories, ``1/sum z - 1/z_true`` else."""
    z = np.asarray(z, dtype=float)
    if z[true_index] <= 0 or np.any(z < 0):
        raise ValueError("degenerate outputs: the true-category z must be positive")
    g = np.full(len(z), 1.0 / z.sum())
    g[true_index] -= 1.0 / z[true_index]
    return g


def project_parameters(cell: TeNNCell) -> TeNNCell:
    """Copy of ``cell`` with ``Ac`` clipped to [0, 1] and ``At`` to [0, inf)."""
    c = cell.copy()
    c.project()
    return c


def _padded(series, n=None) -> List[np.ndarray]:
    arrs = [as_samples(s) for s in series]
    n = n or max(len(a) for a in arrs)
    return [pad_to_length(a, n).samples for a in arrs]


def kdtw_medoid(series: Sequence, nu: float) -> TimeSeries:
    """Member maximizing the summed KDTW similarity to the set; ties to the lowest index."""
    arrs = _padded(series)
    logs = np.array([[log_kdtw(a, b, nu) for b in arrs] for a in arrs])
    scores = logsumexp(logs, axis=1)
    src = series[int(np.argmax(scores))]
    return src if isinstance(src, TimeSeries) else TimeSeries(src)


@dataclass
class CentroidResult:
    """Averaging outcome: best iterate and the log-objective trace.

    ``objective[e]`` is ``ln sum_x KDTW(x, M_e)`` for the iterate after ``e``
    updates (``e = 0`` is the medoid).
    """

    centroid: TimeSeries
    objective: List[float]
    best_epoch: int


def _log_objective(M, arrs, nu) -> float:
    return float(logsumexp([log_kdtw(M, a, nu) for a in arrs]))


def kdtw_centroid(series: Sequence, nu0: float, max_epoch: int = 100, eta: float = 0.1,
                  length: Optional[int] = None) -> CentroidResult:
    """Average a set of series by normalized gradient ascent on summed KDTW.

    Starts at the medoid; every epoch moves the estimate by ``eta`` along the
    unit-norm gradient of ``sum_x KDTW(x, M, nu0)``. The fixed-length step can
    overshoot, so the best iterate seen is returned.
    """
    arrs = _padded(series, length)
    M = pad_to_length(kdtw_medoid(arrs, nu0), len(arrs[0])).samples.copy()
    n, d = M.shape
    At = np.full((n, d), float(nu0))
    Ac = np.ones((n, n))
    trace = [_log_objective(M, arrs, nu0)]
    best, best_M = 0, M.copy()
    for e in range(1, max_epoch + 1):
        cell = TeNNCell(M, At, Ac)
        grads = [cell_gradients(cell, a) for a in arrs]
        logs = np.array([g.log_scale for g in grads])
        w = np.exp(logs - logs.max())
        G = sum(wi * g.dR for wi, g in zip(w, grads))
        norm = np.linalg.norm(G)
        if norm == 0 or not np.isfinite(norm):
            break
        M = M + eta * G / norm
        trace.append(_log_objective(M, arrs, nu0))
        if trace[-1] > trace[best]:
            best, best_M = e, M.copy()
    return CentroidResult(TimeSeries(best_M), trace, best)


def spectral_partition(series: Sequence, n_clusters: int, nu: float, seed: int = 0) -> np.ndarray:
    """Cluster labels from spectral clustering of a KDTW affinity.

    The affinity is the cosine-normalized Gram matrix
    ``K(a, b) / sqrt(K(a, a) K(b, b))``, computed from logs.
    """
    from sklearn.cluster import SpectralClustering

    arrs = _padded(series)
    N = len(arrs)
    if n_clusters == 1:
        return np.zeros(N, dtype=int)
    L = np.empty((N, N))
    for i in range(N):
        for j in range(i, N):
            L[i, j] = L[j, i] = log_kdtw(arrs[i], arrs[j], nu)
    dg = np.diag(L)
    A = np.exp(L - 0.5 * (dg[:, None] + dg[None, :]))
    sc = SpectralClustering(n_clusters=n_clusters, affinity="precomputed", random_state=seed)
    return sc.fit_predict(A)


def init_network(trainset, config: TrainConfig) -> TeNNNetwork:
    """One centroid-initialized cell per (category, cluster)."""
    items = _labelled(trainset)
    cats = (trainset.categories if isinstance(trainset, Dataset)
            else sorted({s.label for s in items}))
    n = max(len(s) for s in items)
    at0 = config.nu0
    if not config.optimize_at:
        at0 = config.frozen_at_nu if config.frozen_at_nu is not None else _loo_nu(trainset)
    cells = []
    for cat in cats:
        members = [s for s in items if s.label == cat]
        if len(members) < config.refs_per_category:
            raise InsufficientMembersError(
                f"category {cat!r} has {len(members)} members, "
                f"{config.refs_per_category} references requested")
        parts = spectral_partition(members, config.refs_per_category, config.nu0, config.seed)
        for k in range(config.refs_per_category):
            group = [m for m, p in zip(members, parts) if p == k]
            R = kdtw_centroid(group, config.nu0, config.centroid_epochs,
                              config.centroid_eta, n).centroid
            cell = TeNNCell.initial(R, at0, config.alpha0, cat, config.corridor)
            cells.append(cell)
    return TeNNNetwork(cells, cats, config.refs_per_category)


def _loo_nu(trainset) -> float:
    from .baselines import loo_tune_nu

    ds = trainset if isinstance(trainset, Dataset) else Dataset(list(trainset))
    return loo_tune_nu(ds)


def _evaluate(net, xs, true_idx, pool):
    """Per-sample cell logs, then (data loss sum, accuracy)."""
    def logs_of(x):
        return np.array([cell_log_forward(c, x) for c in net.cells])

    all_logs = list(pool.map(logs_of, xs)) if pool else [logs_of(x) for x in xs]
    loss, correct = 0.0, 0
    for logs, t in zip(all_logs, true_idx):
        sel = _select(net, logs)
        o, _ = normalize_log_outputs(np.array([l for _, _, l in sel]))
        loss += _data_loss(o, t)
        correct += int(np.argmax(o) == t)
    return loss, correct / len(xs)


def _sample_gradients(net, x, t):
    """Selected cell indices and their weighted ``ln z`` gradients for one sample."""
    if net.refs_per_category == 1:
        grads = [cell_gradients(c, x) for c in net.cells]
        chosen = list(range(len(net.cells)))
        cat_logs = np.array([g.log_z for g in grads])
    else:
        logs = np.array([cell_log_forward(c, x) for c in net.cells])
        sel = _select(net, logs)
        chosen = [i for _, i, _ in sel]
        grads = [cell_gradients(net.cells[i], x) for i in chosen]
        cat_logs = np.array([g.log_z for g in grads])
    o, degenerate = normalize_log_outputs(cat_logs)
    if degenerate:
        return []
    out = []
    for k, (i, g) in enumerate(zip(chosen, grads)):
        # d(-ln o_t)/d theta = (o_k - y_k) * d ln z_k / d theta
        w = o[k] - (1.0 if k == t else 0.0)
        if not np.isfinite(g.log_z):
            continue
        out.append((i, w, g))
    return out


def train(trainset, config: TrainConfig = None, network: TeNNNetwork = None,
          callback=None):
    """Stochastic gradient descent on the penalized cross entropy.

    Args:
        trainset: Dataset or list of labeled TimeSeries (equal lengths).
        config: meta-parameters; defaults to ``TrainConfig()``.
        network: optional starting network; built by ``init_network`` if None.
        callback: called as ``callback(epoch, report)`` after every epoch.

    Returns:
        ``(last_min_error_net, last_min_loss_net, report)``.
    """
    config = config or TrainConfig()
    items = _labelled(trainset)
    net = network.copy() if network is not None else init_network(trainset, config)
    xs = [pad_to_length(s, net.length).samples for s in items]
    true_idx = [net.categories.index(s.label) for s in items]
    N = len(xs)
    rng = np.random.default_rng(config.seed)
    nbatch = max(1, N // config.batch_size)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    report = TrainReport()
    data_loss, acc = _evaluate(net, xs, true_idx, pool)
    report.initial_loss = data_loss + _regularizer(net, config.lambda_t, config.lambda_a)
    report.initial_train_accuracy = acc
    # progress and the loss snapshot follow the cross-entropy alone: the L1
    # terms shrink almost every epoch and would count as endless progress
    best_acc, best_loss = acc, data_loss
    snap_err, snap_loss = net.copy(), net.copy()
    stall = 0
    eta = config.eta
    switches = (config.optimize_r, config.optimize_at, config.optimize_ac)

    try:
        for epoch in range(1, config.max_epoch + 1):
            for batch in np.array_split(rng.permutation(N), nbatch):
                GR = [np.zeros_like(c.R) for c in net.cells]
                GT = [np.zeros_like(c.At) for c in net.cells]
                GA = [np.zeros_like(c.Ac) for c in net.cells]
                touched = set()
                jobs = [(xs[b], true_idx[b]) for b in batch]
                if pool:
                    results = list(pool.map(lambda a: _sample_gradients(net, *a), jobs))
                else:
                    results = [_sample_gradients(net, *a) for a in jobs]
                for res in results:
                    for i, w, g in res:
                        touched.add(i)
                        GR[i] -= w * g.dR
                        GT[i] -= w * g.dAt
                        GA[i] -= w * g.dAc
                for i in sorted(touched):
                    cell = net.cells[i]
                    GT[i] -= config.lambda_t * np.sign(cell.At)
                    GA[i] -= config.lambda_a * np.sign(cell.Ac)
                    for on, G in zip(switches, (GR, GT, GA)):
                        if not on:
                            G[i][...] = 0.0
                    norm = (np.linalg.norm(GR[i]) + np.linalg.norm(GT[i])
                            + np.linalg.norm(GA[i]) + config.epsilon_norm) / config.per_cell_factor
                    step = eta / norm
                    cell.R += step * GR[i]
                    cell.At += step * GT[i]
                    cell.Ac += step * GA[i]
                    cell.project()

            data_loss, acc = _evaluate(net, xs, true_idx, pool)
            loss = data_loss + _regularizer(net, config.lambda_t, config.lambda_a)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss is {loss} at epoch {epoch}")
            report.loss.append(loss)
            report.data_loss.append(data_loss)
            report.train_accuracy.append(acc)
            report.eta.append(eta)
            progress = False
            if acc >= best_acc:
                progress = progress or acc > best_acc
                best_acc = acc
                report.best_by_train_error = epoch
                snap_err = net.copy()
            if data_loss <= best_loss:
                progress = progress or data_loss < best_loss
                best_loss = data_loss
                report.best_by_loss = epoch
                snap_loss = net.copy()
            stall = 0 if progress else stall + 1
            if stall >= config.patience:
                eta /= config.decay_factor
                stall = 0
            if callback is not None:
                callback(epoch, report)
            log.debug("epoch %d loss %.6g acc %.4f eta %.4g", epoch, loss, acc, eta)
    finally:
        if pool:
            pool.shutdown()
    return snap_err, snap_loss, report


def save_checkpoint(net: TeNNNetwork, path, config: TrainConfig, kind: str, epoch: int):
    """Network document with an embedded echo of the training configuration."""
    net.save(path, extra={"config": config.to_dict(), "selection": kind, "epoch": epoch})


def load_checkpoint(path):
    """``(network, config or None)`` from a checkpoint or plain network file."""
    with open(path) as fh:
        doc = json.load(fh)
    cfg = TrainConfig(**doc["config"]) if "config" in doc else None
    return TeNNNetwork.from_dict(doc), cfg
