"""Dataset loading (UEA ``.ts`` and delimited text), padding and z-normalization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .elastic import TimeSeries, as_samples

__all__ = [
    "Dataset",
    "DataFormatError",
    "load_uea_ts",
    "save_uea_ts",
    "load_csv",
    "load_dataset",
    "pad_to_length",
    "znormalize",
]


class DataFormatError(ValueError):
    """Malformed input file; the message names the offending line or cell."""


def pad_to_length(x, n: int) -> TimeSeries:
    """Append null (all-zero) samples so that ``x`` has exactly ``n`` samples."""
    ts = x if isinstance(x, TimeSeries) else TimeSeries(x)
    if len(ts) > n:
        raise ValueError(f"series of length {len(ts)} is longer than {n}")
    if len(ts) == n:
        return ts
    pad = np.zeros((n - len(ts), ts.dimension))
    return TimeSeries(np.vstack([ts.samples, pad]), ts.label, ts.name)


@dataclass
class Dataset:
    """Labeled series padded to a common length.

    Attributes:
        items: series of identical shape ``(max_length, dimension)``.
        lengths: true (unpadded) length of each item.
        categories: distinct labels in lexicographic order.
        name: optional problem name.
    """

    items: List[TimeSeries]
    lengths: List[int] = field(default_factory=list)
    categories: List[str] = field(default_factory=list)
    name: Optional[str] = None

    def __post_init__(self):
        if not self.items:
            raise ValueError("dataset is empty")
        if not self.lengths:
            self.lengths = [len(s) for s in self.items]
        dims = {s.dimension for s in self.items}
        if len(dims) != 1:
            raise ValueError(f"items disagree on dimension: {sorted(dims)}")
        n = max(len(s) for s in self.items)
        self.items = [pad_to_length(s, n) for s in self.items]
        labels = sorted({s.label for s in self.items if s.label is not None})
        if not self.categories:
            self.categories = labels
        else:
            self.categories = list(self.categories)
            unknown = set(labels) - set(self.categories)
            if unknown:
                raise ValueError(f"labels {sorted(unknown)} are not declared categories")

    def __len__(self):
        return len(self.items)

    @property
    def max_length(self) -> int:
        return len(self.items[0])

    @property
    def dimension(self) -> int:
        return self.items[0].dimension

    @property
    def labels(self) -> List[str]:
        return [s.label for s in self.items]

    def array(self) -> np.ndarray:
        """Samples stacked into an ``(N, n, d)`` array."""
        return np.stack([s.samples for s in self.items])

    def by_category(self) -> Dict[str, List[int]]:
        out = {c: [] for c in self.categories}
        for i, s in enumerate(self.items):
            out[s.label].append(i)
        return out

    def padded_to(self, n: int) -> "Dataset":
        return Dataset([pad_to_length(s, n) for s in self.items], list(self.lengths),
                       list(self.categories), self.name)


def _parse_bool(v: str, lineno: int) -> bool:
    v = v.lower()
    if v not in ("true", "false"):
        raise DataFormatError(f"line {lineno}: expected true/false, got {v!r}")
    return v == "true"


def load_uea_ts(path) -> Dataset:
    """Read a UEA/UCR ``.ts`` file.

    Dimensions are separated by ``:``, values by ``,``, and the class label
    closes each line. Header metadata (dimensions, equal length, series length,
    class labels) is checked against the data. Missing values (``?``) are
    rejected.
    """
    header: dict = {}
    items: List[TimeSeries] = []
    lengths: List[int] = []
    in_data = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise DataFormatError(f"line {lineno}: expected a header line starting with '@'")
                key, _, rest = line[1:].partition(" ")
                key = key.lower()
                rest = rest.strip()
                if key == "data":
                    in_data = True
                elif key == "problemname":
                    header["name"] = rest
                elif key in ("timestamps", "univariate", "equallength", "missing"):
                    header[key] = _parse_bool(rest, lineno)
                elif key in ("dimensions", "dimension", "serieslength"):
                    try:
                        header["serieslength" if key == "serieslength" else "dimensions"] = int(rest)
                    except ValueError:
                        raise DataFormatError(f"line {lineno}: @{key} needs an integer") from None
                elif key == "classlabel":
                    parts = rest.split()
                    if not parts:
                        raise DataFormatError(f"line {lineno}: @classLabel needs true/false")
                    if _parse_bool(parts[0], lineno):
                        if len(parts) < 2:
                            raise DataFormatError(f"line {lineno}: @classLabel true lists no labels")
                        header["classes"] = parts[1:]
                    else:
                        raise DataFormatError(f"line {lineno}: unlabeled .ts files are not supported")
                else:
                    raise DataFormatError(f"line {lineno}: unknown header key @{key}")
                continue
            if header.get("timestamps"):
                raise DataFormatError(f"line {lineno}: timestamped .ts files are not supported")
            fields = line.split(":")
            if len(fields) < 2:
                raise DataFormatError(f"line {lineno}: expected dimensions followed by a label")
            label = fields[-1].strip()
            dims = fields[:-1]
            d_expect = header.get("dimensions", 1 if header.get("univariate", True) else None)
            if d_expect is not None and len(dims) != d_expect:
                raise DataFormatError(
                    f"line {lineno}: ragged dimensions, found {len(dims)} expected {d_expect}")
            rows = []
            for k, dim in enumerate(dims):
                vals = dim.split(",")
                if any(v.strip() == "?" for v in vals):
                    raise DataFormatError(f"line {lineno}: missing values are not supported")
                try:
                    rows.append([float(v) for v in vals])
                except ValueError:
                    raise DataFormatError(f"line {lineno}: non-numeric value in dimension {k}") from None
            n = len(rows[0])
            if any(len(r) != n for r in rows):
                raise DataFormatError(f"line {lineno}: dimensions have different lengths")
            if header.get("equallength") and "serieslength" in header and n != header["serieslength"]:
                raise DataFormatError(
                    f"line {lineno}: series length {n} differs from @seriesLength {header['serieslength']}")
            if "classes" in header and label not in header["classes"]:
                raise DataFormatError(f"line {lineno}: unknown label {label!r}")
            items.append(TimeSeries(np.array(rows).T, label))
            lengths.append(n)
    if not in_data:
        raise DataFormatError(f"{path}: no @data section")
    if not items:
        raise DataFormatError(f"{path}: no series after @data")
    cats = sorted(header.get("classes", []))
    return Dataset(items, lengths, cats, header.get("name"))


def _fmt(v: float) -> str:
    return repr(float(v))


def save_uea_ts(ds: Dataset, path):
    """Write ``ds`` as a ``.ts`` file (true lengths, no padding)."""
    equal = len(set(ds.lengths)) == 1
    with open(path, "w") as fh:
        fh.write(f"@problemName {ds.name or 'dataset'}\n")
        fh.write("@timeStamps false\n@missing false\n")
        fh.write(f"@univariate {'true' if ds.dimension == 1 else 'false'}\n")
        fh.write(f"@dimensions {ds.dimension}\n")
        fh.write(f"@equalLength {'true' if equal else 'false'}\n")
        if equal:
            fh.write(f"@seriesLength {ds.lengths[0]}\n")
        fh.write("@classLabel true " + " ".join(ds.categories) + "\n@data\n")
        for s, n in zip(ds.items, ds.lengths):
            dims = [",".join(_fmt(v) for v in s.samples[:n, k]) for k in range(ds.dimension)]
            fh.write(":".join(dims) + f":{s.label}\n")


def load_csv(path, label_column: int = 0, delimiter: Optional[str] = None,
             series_id_column: Optional[int] = None) -> Dataset:
    """Read one series per row, or one series per row group.

    Args:
        path: text file.
        label_column: column holding the class label.
        delimiter: field separator; sniffed among ``,``, tab and ``;`` when None.
        series_id_column: when given, rows sharing an id form one multivariate
            series, one row per dimension in file order.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    if not text.strip():
        raise DataFormatError(f"{path}: empty file")
    if delimiter is None:
        first = text.lstrip().splitlines()[0]
        delimiter = next((c for c in ("\t", ",", ";") if c in first), ",")
    groups: Dict[str, list] = {}
    order: List[str] = []
    for rowno, row in enumerate(csv.reader(text.splitlines(), delimiter=delimiter), 1):
        if not row or all(not c.strip() for c in row):
            continue
        special = {label_column % len(row)}
        if series_id_column is not None:
            special.add(series_id_column % len(row))
        label = row[label_column].strip()
        key = row[series_id_column].strip() if series_id_column is not None else str(rowno)
        vals = []
        for col, cell in enumerate(row):
            if col in special:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataFormatError(f"row {rowno}, column {col}: non-numeric value {cell!r}") from None
        if key not in groups:
            groups[key] = [label, []]
            order.append(key)
        elif groups[key][0] != label:
            raise DataFormatError(f"row {rowno}: label changes within series {key!r}")
        groups[key][1].append(vals)
    items = []
    for key in order:
        label, rows = groups[key]
        if len({len(r) for r in rows}) != 1:
            raise DataFormatError(f"series {key!r}: dimensions have different lengths")
        items.append(TimeSeries(np.array(rows).T, label))
    if not items:
        raise DataFormatError(f"{path}: no data rows")
    return Dataset(items)


def load_dataset(path) -> Dataset:
    """Dispatch on extension: ``.ts`` is UEA, anything else delimited text."""
    if str(path).lower().endswith(".ts"):
        return load_uea_ts(path)
    return load_csv(path)


def znormalize(ds: Dataset, mode: str = "off") -> Dataset:
    """Z-normalize over non-padded samples.

    ``mode`` is ``"off"``, ``"per-series"`` (each series and dimension on its
    own statistics) or ``"per-dimension"`` (statistics pooled over the whole
    dataset per dimension). Zero-variance groups map to zero.
    """
    if mode == "off":
        return ds
    if mode not in ("per-series", "per-dimension"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "per-dimension":
        pooled = np.vstack([s.samples[:n] for s, n in zip(ds.items, ds.lengths)])
        mu, sd = pooled.mean(axis=0), pooled.std(axis=0)
    out = []
    for s, n in zip(ds.items, ds.lengths):
        a = s.samples.copy()
        if mode == "per-series":
            mu, sd = a[:n].mean(axis=0), a[:n].std(axis=0)
        safe = np.where(sd > 0, sd, 1.0)
        a[:n] = np.where(sd > 0, (a[:n] - mu) / safe, 0.0)
        out.append(TimeSeries(a, s.label, s.name))
    return Dataset(out, list(ds.lengths), list(ds.categories), ds.name)
