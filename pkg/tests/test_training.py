import math

import numpy as np
import pytest

from tenn.cell import TeNNCell
from tenn.data import Dataset
from tenn.elastic import TimeSeries, kdtw
from tenn.network import TeNNNetwork, infer
from tenn.training import (
    InsufficientMembersError,
    TrainConfig,
    cce_loss,
    init_network,
    kdtw_centroid,
    kdtw_medoid,
    loss_grad_wrt_z,
    project_parameters,
    spectral_partition,
    train,
)


def bumps(rng, n_per=6, n=16):
    """Three classes: a bump at the start, the middle or the end, with jitter."""
    items = []
    t = np.arange(n)
    for lab, centre in (("begin", 3), ("middle", 8), ("end", 12)):
        for _ in range(n_per):
            c = centre + rng.integers(-1, 2)
            x = np.exp(-0.5 * (t - c) ** 2) + 0.05 * rng.normal(size=n)
            items.append(TimeSeries(x, lab))
    return Dataset(items)


def fast_config(**kw):
    base = dict(max_epoch=20, centroid_epochs=5, batch_size=64, nu0=0.5, seed=3)
    base.update(kw)
    return TrainConfig(**base)


# --- loss and its gradient ---------------------------------------------------

def test_config_defaults_and_validation():
    c = TrainConfig()
    assert (c.lambda_t, c.lambda_a, c.eta, c.batch_size, c.nu0, c.alpha0, c.refs_per_category) == \
        (1e-3, 1e-3, 0.1, 64, 1e-3, 1.0, 1)
    assert (c.patience, c.decay_factor, c.epsilon_norm, c.per_cell_factor) == (20, 1.05, 1e-12, 1.0)
    for bad in (dict(eta=0), dict(alpha0=1.5), dict(lambda_t=-1), dict(batch_size=0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def _net_from(outputs_per_category):
    # one-sample cells whose output is set by At: z = Ac*E/3 + Ac*E/3 with R = 0, x = 1
    cells = []
    for lab, z in outputs_per_category:
        cells.append(TeNNCell(np.zeros((1, 1)), np.array([[-math.log(1.5 * z)]]), np.ones((1, 1)), lab))
    return TeNNNetwork(cells, [l for l, _ in outputs_per_category])


def test_cce_loss_examples():
    x = TimeSeries(np.ones((1, 1)), "a")
    perfect = _net_from([("a", 0.5), ("b", 1e-320)])
    perfect.cells[1].Ac[:] = 0.0
    assert cce_loss(perfect, [x], 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    uniform = _net_from([("a", 0.2), ("b", 0.2), ("c", 0.2)])
    assert cce_loss(uniform, [x, x], 0.0, 0.0) == pytest.approx(2 * math.log(3), rel=1e-12)
    reg = cce_loss(uniform, [], 0.1, 0.01)
    expect = 0.1 * sum(abs(c.At).sum() for c in uniform.cells) + 0.01 * 3
    assert reg == pytest.approx(expect, rel=1e-12)


def test_cce_loss_guards_zero_output():
    x = TimeSeries(np.ones((1, 1)), "b")
    net = _net_from([("a", 0.5), ("b", 0.5)])
    net.cells[1].Ac[:] = 0.0
    assert cce_loss(net, [x], 0.0, 0.0) == pytest.approx(-math.log(1e-300))


def test_loss_grad_wrt_z():
    assert loss_grad_wrt_z([0.7], 0)[0] == 0.0
    g = loss_grad_wrt_z([0.2, 0.3, 0.5], 1)
    assert g[0] == g[2] == pytest.approx(1.0) and g[0] > 0
    assert g[1] == pytest.approx(1.0 - 1 / 0.3)
    with pytest.raises(ValueError):
        loss_grad_wrt_z([0.2, 0.0], 1)


def test_loss_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(10):
        z = rng.uniform(0.1, 2.0, size=4)
        t = int(rng.integers(0, 4))
        f = lambda v: -math.log(v[t] / v.sum())
        g = loss_grad_wrt_z(z, t)
        for k in range(4):
            h = 1e-6 * z[k]
            zp, zm = z.copy(), z.copy()
            zp[k] += h
            zm[k] -= h
            assert g[k] == pytest.approx((f(zp) - f(zm)) / (2 * h), rel=1e-6)


def test_project_parameters():
    c = TeNNCell(np.zeros((2, 1)), np.array([[-0.2], [0.3]]), np.array([[1.5, 0.5], [-1.0, 0.0]]))
    p = project_parameters(c)
    assert p.At.ravel().tolist() == [0.0, 0.3]
    assert p.Ac.ravel().tolist() == [1.0, 0.5, 0.0, 0.0]
    inside = TeNNCell(np.ones((2, 1)), np.full((2, 1), 0.7), np.full((2, 2), 0.25))
    q = project_parameters(inside)
    assert np.array_equal(q.At, inside.At) and np.array_equal(q.Ac, inside.Ac)


# --- medoid and centroid -----------------------------------------------------

def test_medoid_examples():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(5, 1))
    assert np.array_equal(kdtw_medoid([s], 1.0).samples, s)
    assert np.array_equal(kdtw_medoid([s, s, s], 1.0).samples, s)
    series = [rng.normal(size=(4, 1)) for _ in range(5)]
    sums = [sum(kdtw(a, b, 0.5) for b in series) for a in series]
    assert np.array_equal(kdtw_medoid(series, 0.5).samples, series[int(np.argmax(sums))])


def test_centroid_shape_and_singleton():
    rng = np.random.default_rng(2)
    s = rng.normal(size=(6, 2))
    res = kdtw_centroid([s], 0.5, max_epoch=0)
    assert np.array_equal(res.centroid.samples, s)
    res = kdtw_centroid([rng.normal(size=(6, 2)) for _ in range(4)], 0.5, max_epoch=5)
    assert res.centroid.samples.shape == (6, 2)


def test_centroid_never_worse_than_medoid():
    rng = np.random.default_rng(3)
    for _ in range(10):
        series = [rng.normal(size=(5, 1)) for _ in range(4)]
        res = kdtw_centroid(series, 0.5, max_epoch=15, eta=0.1)
        med = kdtw_medoid(series, 0.5).samples
        obj = lambda M: sum(kdtw(x, M, 0.5) for x in series)
        assert obj(res.centroid.samples) >= obj(med) - 1e-9
        assert res.objective[0] == pytest.approx(math.log(obj(med)), rel=1e-12)


# --- initialization ----------------------------------------------------------

def test_init_network_counts_and_values():
    rng = np.random.default_rng(4)
    ds = bumps(rng)
    net = init_network(ds, fast_config(nu0=0.01, alpha0=0.7))
    assert len(net.cells) == 3 and sorted(c.label for c in net.cells) == ds.categories
    for c in net.cells:
        assert np.all(c.At == 0.01) and np.all(c.Ac == 0.7)


def test_spectral_init_separates_two_level_clusters():
    rng = np.random.default_rng(5)
    items = [TimeSeries(rng.normal(lv, 0.1, size=12), "a") for lv in (0.0,) * 5 + (3.0,) * 5]
    items += [TimeSeries(rng.normal(-2, 0.1, size=12), "b") for _ in range(4)]
    labels = spectral_partition(items[:10], 2, 0.5, seed=0)
    assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1 and labels[0] != labels[5]
    net = init_network(Dataset(items), fast_config(refs_per_category=2))
    levels = sorted(net.cells[i].R.mean() for i in net.cell_indices("a"))
    assert -0.5 < levels[0] < 0.5 and 2.5 < levels[1] < 3.5


def test_insufficient_members():
    items = [TimeSeries(np.ones(4), "a"), TimeSeries(np.zeros(4), "b"), TimeSeries(np.ones(4), "b")]
    with pytest.raises(InsufficientMembersError):
        init_network(Dataset(items), fast_config(refs_per_category=2))


# --- training loop -----------------------------------------------------------

def test_zero_epochs_returns_initial_network():
    rng = np.random.default_rng(6)
    ds = bumps(rng)
    cfg = fast_config(max_epoch=0)
    lm, ml, rep = train(ds, cfg)
    init = init_network(ds, cfg)
    for a, b in zip(lm.cells, init.cells):
        assert np.array_equal(a.R, b.R) and np.array_equal(a.Ac, b.Ac)
    assert rep.loss == [] and rep.best_by_train_error == 0


def test_all_switches_off_keeps_parameters():
    rng = np.random.default_rng(7)
    ds = bumps(rng)
    cfg = fast_config(optimize_r=False, optimize_ac=False, optimize_at=False,
                      frozen_at_nu=0.5, max_epoch=5)
    init = init_network(ds, cfg)
    lm, ml, rep = train(ds, cfg, network=init)
    for a, b in zip(lm.cells, init.cells):
        assert np.array_equal(a.R, b.R) and np.array_equal(a.At, b.At) and np.array_equal(a.Ac, b.Ac)
    assert len(set(rep.loss)) == 1


def test_frozen_attention_uses_given_value():
    rng = np.random.default_rng(8)
    ds = bumps(rng)
    net = init_network(ds, fast_config(optimize_at=False, frozen_at_nu=0.25))
    assert all(np.all(c.At == 0.25) for c in net.cells)


def test_training_reduces_loss_and_fits():
    rng = np.random.default_rng(9)
    ds = bumps(rng)
    lm, ml, rep = train(ds, fast_config(max_epoch=40))
    assert rep.loss[-1] < rep.loss[0]
    assert max(rep.train_accuracy) == 1.0
    acc = np.mean([lm.categories[int(np.argmax(infer(lm, s).normalized))] == s.label for s in ds.items])
    assert acc == rep.train_accuracy[rep.best_by_train_error - 1]
    for c in lm.cells:
        assert np.all(c.Ac >= 0) and np.all(c.Ac <= 1) and np.all(c.At >= 0)


def test_deterministic_replay_and_threads():
    rng = np.random.default_rng(10)
    ds = bumps(rng)
    r1 = train(ds, fast_config(max_epoch=8, batch_size=6))[2]
    r2 = train(ds, fast_config(max_epoch=8, batch_size=6))[2]
    r3 = train(ds, fast_config(max_epoch=8, batch_size=6, threads=3))[2]
    assert r1.loss == r2.loss == r3.loss
    assert r1.train_accuracy == r3.train_accuracy


def test_eta_schedule_decays_by_factor():
    rng = np.random.default_rng(11)
    ds = bumps(rng)
    rep = train(ds, fast_config(max_epoch=40, patience=2, lambda_t=0, lambda_a=0))[2]
    etas = rep.eta
    assert all(b <= a for a, b in zip(etas, etas[1:]))
    for a, b in zip(etas, etas[1:]):
        if b < a:
            assert a / b == pytest.approx(1.05, rel=1e-12)


def test_unselected_cell_is_never_updated():
    rng = np.random.default_rng(12)
    ds = bumps(rng)
    cfg = fast_config(refs_per_category=2, max_epoch=5)
    net = init_network(ds, cfg)
    # push one reference of "end" far away so it never wins
    idx = net.cell_indices("end")[1]
    net.cells[idx].R[:] = 50.0
    frozen = net.cells[idx].copy()
    lm = train(ds, cfg, network=net)[0]
    assert np.array_equal(lm.cells[idx].R, frozen.R)
    assert np.array_equal(lm.cells[idx].Ac, frozen.Ac)


def test_report_csv(tmp_path):
    rng = np.random.default_rng(13)
    rep = train(bumps(rng), fast_config(max_epoch=3))[2]
    p = tmp_path / "r.csv"
    rep.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,loss,trainAccuracy,eta" and len(lines) == 4
