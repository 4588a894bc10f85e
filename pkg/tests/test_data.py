import os

import numpy as np
import pytest

from tenn.data import (
    DataFormatError,
    Dataset,
    load_csv,
    load_uea_ts,
    pad_to_length,
    save_uea_ts,
    znormalize,
)
from tenn.elastic import TimeSeries

DATA = os.path.join(os.path.dirname(__file__), "..", "data")

TS_TWO = """# comment
@problemName tiny
@timeStamps false
@missing false
@univariate true
@equalLength true
@seriesLength 3
@classLabel true a b
@data
1.0,2.0,3.0:a
4.0,5.0,6.0:b
"""


def _write(tmp_path, text, name="f.ts"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_tiny_ts(tmp_path):
    ds = load_uea_ts(_write(tmp_path, TS_TWO))
    assert len(ds) == 2 and ds.dimension == 1 and ds.max_length == 3
    assert ds.categories == ["a", "b"]
    assert ds.items[1].samples[:, 0].tolist() == [4.0, 5.0, 6.0]
    assert ds.name == "tiny"


@pytest.mark.parametrize("bad,needle", [
    (TS_TWO.replace("@seriesLength 3", "@seriesLength x"), "line 7"),
    (TS_TWO.replace("4.0,5.0,6.0:b", "4.0,5.0,6.0:c"), "unknown label"),
    (TS_TWO.replace("4.0,5.0,6.0:b", "4.0,?,6.0:b"), "missing"),
    (TS_TWO.replace("4.0,5.0,6.0:b", "4.0,5.0,6.0:1.0:b"), "ragged"),
    (TS_TWO.replace("@data\n", ""), "line 9"),
    (TS_TWO.replace("1.0,2.0,3.0:a", "1.0,2.0:a"), "line 10"),
])
def test_ts_errors_name_the_line(tmp_path, bad, needle):
    with pytest.raises(DataFormatError, match=needle):
        load_uea_ts(_write(tmp_path, bad))


def test_variable_length_ts_is_padded_and_keeps_lengths(tmp_path):
    text = TS_TWO.replace("@equalLength true\n@seriesLength 3\n", "@equalLength false\n")
    text = text.replace("4.0,5.0,6.0:b", "4.0,5.0:b")
    ds = load_uea_ts(_write(tmp_path, text))
    assert ds.lengths == [3, 2]
    assert ds.items[1].samples[:, 0].tolist() == [4.0, 5.0, 0.0]


def test_ts_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    items = [TimeSeries(rng.normal(size=(int(rng.integers(3, 7)), 3)), lab)
             for lab in ["x", "y", "x", "z"]]
    ds = Dataset(items, name="rt")
    p = tmp_path / "rt.ts"
    save_uea_ts(ds, p)
    ds2 = load_uea_ts(p)
    assert ds2.lengths == ds.lengths and ds2.categories == ds.categories
    for a, b in zip(ds.items, ds2.items):
        assert np.array_equal(a.samples, b.samples) and a.label == b.label


@pytest.mark.skipif(not os.path.exists(os.path.join(DATA, "BasicMotions_TRAIN.ts")),
                    reason="BasicMotions not present")
def test_basicmotions_shape():
    ds = load_uea_ts(os.path.join(DATA, "BasicMotions_TRAIN.ts"))
    assert (len(ds), ds.dimension, len(ds.categories), ds.max_length) == (40, 6, 4, 100)


def test_csv_examples(tmp_path):
    p = _write(tmp_path, "a,1,2,3\nb,4,5,6\na,7,8,9\n", "u.csv")
    ds = load_csv(p)
    assert len(ds) == 3 and ds.dimension == 1 and ds.categories == ["a", "b"]
    bad = _write(tmp_path, "a,1,x,3\n", "bad.csv")
    with pytest.raises(DataFormatError, match="row 1, column 2"):
        load_csv(bad)
    with pytest.raises(DataFormatError, match="empty"):
        load_csv(_write(tmp_path, "", "empty.csv"))


def test_csv_multivariate_groups(tmp_path):
    text = "s1,a,1,2,3\ns1,a,4,5,6\ns2,b,0,0,1\ns2,b,1,1,1\n"
    ds = load_csv(_write(tmp_path, text, "m.csv"), label_column=1, series_id_column=0)
    assert len(ds) == 2 and ds.dimension == 2
    assert ds.items[0].samples[:, 1].tolist() == [4.0, 5.0, 6.0]


def test_tab_separated_ucr_layout(tmp_path):
    ds = load_csv(_write(tmp_path, "1\t0.5\t0.25\n2\t1.0\t2.0\n", "t.tsv"))
    assert ds.categories == ["1", "2"] and ds.max_length == 2


def test_pad_to_length():
    x = TimeSeries(np.ones((3, 2)))
    assert pad_to_length(x, 3) is x
    p = pad_to_length(x, 5)
    assert p.samples[3:].tolist() == [[0, 0], [0, 0]]
    assert np.array_equal(p.samples[:3], x.samples)
    with pytest.raises(ValueError):
        pad_to_length(TimeSeries(np.ones(6)), 5)


def test_znormalize_modes():
    rng = np.random.default_rng(1)
    items = [TimeSeries(rng.normal(3, 2, size=(int(rng.integers(4, 9)), 2)), "a") for _ in range(6)]
    items.append(TimeSeries(np.full((5, 2), 7.0), "b"))
    ds = Dataset(items)
    assert znormalize(ds, "off") is ds
    ps = znormalize(ds, "per-series")
    assert np.all(ps.items[-1].samples == 0)
    pdim = znormalize(ds, "per-dimension")
    pooled = np.vstack([s.samples[:n] for s, n in zip(pdim.items, pdim.lengths)])
    assert np.all(np.abs(pooled.mean(axis=0)) <= 1e-10)
    assert np.all(np.abs(pooled.var(axis=0) - 1) <= 1e-8)
    # padding stays zero
    for s, n in zip(pdim.items, pdim.lengths):
        assert np.all(s.samples[n:] == 0)


def test_categories_are_lexicographic():
    ds = Dataset([TimeSeries(np.ones(2), lab) for lab in ["b", "a", "c", "a"]])
    assert ds.categories == ["a", "b", "c"]
