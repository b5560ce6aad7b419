"""Datasets: representation, Adult ingestion, the 2-d toy problem, and
counterfactual copies used by the consistency metrics."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
ADULT_CONTINUOUS = ["age", "education-num", "capital-gain", "capital-loss", "hours-per-week"]
ADULT_ONEHOT = ["workclass", "marital-status", "occupation", "relationship"]
ADULT_CANONICAL_RAW = 48842
ADULT_CANONICAL_CLEAN = 45222


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class ColumnInfo:
    """One feature column. ``kind`` is continuous, binary or onehot; ``mean``
    and ``std`` map raw values to stored ones as ``(raw - mean) / std``."""

    name: str
    kind: str = "continuous"
    group: str | None = None
    category: str | None = None
    mean: float = 0.0
    std: float = 1.0

    def encode(self, raw):
        return (np.asarray(raw, dtype=np.float64) - self.mean) / self.std

    def decode(self, stored):
        return np.asarray(stored, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class FeatureMeta:
    columns: tuple

    @classmethod
    def plain(cls, names: Sequence[str]) -> "FeatureMeta":
        return cls(tuple(ColumnInfo(n) for n in names))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"no feature column named {name!r}") from None

    def group_columns(self, group: str) -> list[int]:
        cols = [i for i, c in enumerate(self.columns) if c.group == group]
        if not cols:
            raise DataError(f"no one-hot group named {group!r}")
        return cols

    def raw(self) -> "FeatureMeta":
        """Same layout with identity scalers."""
        return FeatureMeta(tuple(replace(c, mean=0.0, std=1.0) for c in self.columns))

    def standardize(self, X_raw):
        X = np.array(X_raw, dtype=np.float64, copy=True)
        for j, c in enumerate(self.columns):
            X[..., j] = c.encode(X[..., j])
        return X

    def to_json(self) -> list:
        return [c.__dict__ for c in self.columns]

    @classmethod
    def from_json(cls, obj) -> "FeatureMeta":
        return cls(tuple(ColumnInfo(**c) for c in obj))


@dataclass(frozen=True)
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    protected: dict = field(default_factory=dict)
    meta: FeatureMeta | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise DataError("features must be a non-empty 2-d array")
        if y.shape != (X.shape[0],):
            raise DataError("labels must have one entry per row")
        if np.any(y < 0):
            raise DataError("labels must be non-negative integers")
        if not np.all(np.isfinite(X)):
            raise DataError("features have non-finite entries")
        prot = {k: np.asarray(v, dtype=np.int64) for k, v in self.protected.items()}
        for k, v in prot.items():
            if v.shape != y.shape:
                raise DataError(f"protected column {k!r} has wrong length")
        meta = self.meta or FeatureMeta.plain([f"x{j}" for j in range(X.shape[1])])
        if len(meta.columns) != X.shape[1]:
            raise DataError("feature meta does not match feature count")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "protected", prot)
        object.__setattr__(self, "meta", meta)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def subset(self, idx) -> "TabularDataset":
        return TabularDataset(
            self.features[idx], self.labels[idx],
            {k: v[idx] for k, v in self.protected.items()}, self.meta,
        )

    def with_features(self, X) -> "TabularDataset":
        return replace(self, features=X)

    def save_csv(self, path) -> None:
        """Snapshot: feature columns, ``label``, ``protected_<name>`` columns;
        feature metadata goes to ``<path>.meta.json``."""
        path = Path(path)
        names = list(self.protected)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.meta.names + ["label"] + [f"protected_{k}" for k in names])
            for i in range(self.n):
                w.writerow([repr(v) for v in self.features[i].tolist()]
                           + [int(self.labels[i])] + [int(self.protected[k][i]) for k in names])
        Path(str(path) + ".meta.json").write_text(json.dumps(self.meta.to_json()))


def load_csv(path, label: str = "label", protected: Sequence[str] = (),
             drop_protected: bool = False) -> TabularDataset:
    """Generic loader: header row, numeric cells.

    ``label`` names the label column. Columns named in ``protected`` (or
    prefixed ``protected_``) are recorded as protected attributes; explicitly
    named ones also stay features unless ``drop_protected``. A sidecar
    ``<path>.meta.json`` written by :meth:`TabularDataset.save_csv` is used
    when present.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label not in header:
        raise DataError(f"{path}: no label column {label!r}")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric cell ({exc})") from None
    if body.ndim != 2 or body.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    prot = {}
    feat_cols = []
    for j, h in enumerate(header):
        if h == label:
            continue
        if h.startswith("protected_"):
            prot[h[len("protected_"):]] = body[:, j]
            continue
        if h in protected:
            prot[h] = body[:, j]
            if drop_protected:
                continue
        feat_cols.append(j)
    for p in protected:
        if p not in header:
            raise DataError(f"{path}: no protected column {p!r}")
    meta_path = Path(str(path) + ".meta.json")
    names = [header[j] for j in feat_cols]
    meta = FeatureMeta.from_json(json.loads(meta_path.read_text())) if meta_path.exists() \
        else FeatureMeta.plain(names)
    if meta.names != names:
        raise DataError(f"{meta_path}: column names do not match {path}")
    return TabularDataset(body[:, feat_cols], body[:, header.index(label)].astype(np.int64),
                          {k: v.astype(np.int64) for k, v in prot.items()}, meta)


def _read_adult_rows(path):
    rows = []
    raw = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("|"):
                continue
            fields = [f.strip() for f in s.split(",")]
            if len(fields) != len(ADULT_COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(ADULT_COLUMNS)} fields, got {len(fields)}")
            raw += 1
            if "?" in fields:
                continue
            rec = dict(zip(ADULT_COLUMNS, fields))
            try:
                for c in ADULT_CONTINUOUS:
                    rec[c] = float(int(rec[c]))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer numeric field") from None
            inc = rec["income"].rstrip(".")
            if inc not in (">50K", "<=50K"):
                raise DataError(f"{path}:{lineno}: unknown income label {rec['income']!r}")
            rec["income"] = int(inc == ">50K")
            rows.append(rec)
    return rows, raw


def load_adult(train_path, test_path=None, split_seed: int = 0, test_fraction: float = 0.2,
               standardize_onehot: bool = False):
    """Adult census income with the cleaning and encoding used for the
    fairness experiments; returns ``(train, test)`` datasets.

    The given files are pooled, rows with any missing field dropped, and a
    seeded random ``1 - test_fraction`` / ``test_fraction`` split taken.
    Features: the five continuous columns, binary ``sex`` (Male=1) and
    ``race`` (White=1), and one-hot workclass, marital-status, occupation and
    relationship. Continuous and binary columns are standardised with
    statistics from the training split (one-hot columns too if
    ``standardize_onehot``). Protected attributes ``gender`` and ``race`` are
    kept raw in 0/1.
    """
    rows, raw = _read_adult_rows(train_path)
    if test_path is not None:
        more, raw2 = _read_adult_rows(test_path)
        rows += more
        raw += raw2
    if not rows:
        raise DataError("no complete Adult rows found")
    if raw == ADULT_CANONICAL_RAW and len(rows) != ADULT_CANONICAL_CLEAN:
        warnings.warn(f"expected {ADULT_CANONICAL_CLEAN} complete rows, found {len(rows)}")
    log.info("adult: %d of %d rows complete", len(rows), raw)

    cols: list[ColumnInfo] = [ColumnInfo(c, "continuous") for c in ADULT_CONTINUOUS]
    values = [[r[c] for r in rows] for c in ADULT_CONTINUOUS]
    cols.append(ColumnInfo("sex", "binary", category="Male"))
    values.append([float(r["sex"] == "Male") for r in rows])
    cols.append(ColumnInfo("race", "binary", category="White"))
    values.append([float(r["race"] == "White") for r in rows])
    for g in ADULT_ONEHOT:
        for cat in sorted({r[g] for r in rows}):
            cols.append(ColumnInfo(f"{g}={cat}", "onehot", group=g, category=cat))
            values.append([float(r[g] == cat) for r in rows])
    X_raw = np.array(values, dtype=np.float64).T
    y = np.array([r["income"] for r in rows], dtype=np.int64)
    nc = len(ADULT_CONTINUOUS)
    prot = {"gender": X_raw[:, nc].astype(np.int64), "race": X_raw[:, nc + 1].astype(np.int64)}

    n = len(rows)
    perm = np.random.default_rng(split_seed).permutation(n)
    n_test = int(round(test_fraction * n))
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])

    fitted = []
    for j, c in enumerate(cols):
        if c.kind in ("continuous", "binary") or standardize_onehot:
            col = X_raw[train_idx, j]
            std = float(col.std())
            c = replace(c, mean=float(col.mean()), std=std if std > 0 else 1.0)
        fitted.append(c)
    meta = FeatureMeta(tuple(fitted))
    X = meta.standardize(X_raw)

    def part(idx):
        return TabularDataset(X[idx], y[idx], {k: v[idx] for k, v in prot.items()}, meta)

    return part(train_idx), part(test_idx)


def make_toy(seed: int = 0, n_major: int = 1000, n_minor: int = 100, separation: float = 4.0,
             noise: float = 0.5, shift: float = 1.0, prior: float = 0.8,
             spread: float = 1.0) -> TabularDataset:
    """Two horizontally offset groups with a vertically determined label.

    Majority (group 0) is centred at ``-separation/2``, minority (group 1) at
    ``+separation/2``, horizontal spread ``spread``. Within a group a fraction
    ``prior`` (majority) or ``1 - prior`` (minority) of rows are positive; the
    vertical coordinate is ``+shift`` for positives and ``-shift`` for
    negatives plus ``noise`` Gaussian noise. The class-conditional law of the
    vertical coordinate is the same in both groups, so a horizontal boundary
    treats them alike, while the group-dependent class mix makes the
    horizontal coordinate predictive and tilts an unconstrained classifier.
    Class counts per group are exact: ``round(n * prior)`` positives.
    """
    if not 0.0 < prior < 1.0:
        raise DataError("prior must be in (0, 1)")
    rng = np.random.default_rng(seed)
    xs, ys, gs = [], [], []
    for group, n, centre, p in ((0, n_major, -separation / 2, prior),
                                (1, n_minor, separation / 2, 1.0 - prior)):
        n_pos = int(round(n * p))
        if min(n_pos, n - n_pos) < 2:
            raise DataError(f"group {group}: need at least 2 samples per class, got {n_pos}/{n - n_pos}")
        label = (np.arange(n) < n_pos).astype(np.int64)
        v = np.where(label == 1, shift, -shift) + noise * rng.standard_normal(n)
        h = centre + spread * rng.standard_normal(n)
        xs.append(np.column_stack([h, v]))
        ys.append(label)
        gs.append(np.full(n, group, dtype=np.int64))
    return TabularDataset(np.vstack(xs), np.concatenate(ys), {"group": np.concatenate(gs)},
                          FeatureMeta.plain(["horizontal", "vertical"]))


def _set_onehot(X, meta: FeatureMeta, group: str, category: str):
    cols = meta.group_columns(group)
    hit = [j for j in cols if meta.columns[j].category == category]
    if not hit:
        raise DataError(f"group {group!r} has no category {category!r}")
    out = np.array(X, dtype=np.float64, copy=True)
    for j in cols:
        out[..., j] = meta.columns[j].encode(1.0 if j == hit[0] else 0.0)
    return out


def counterfactual_spouse(x, meta: FeatureMeta):
    """Copies of ``x`` with relationship set to Husband and to Wife."""
    return [_set_onehot(x, meta, "relationship", "Husband"),
            _set_onehot(x, meta, "relationship", "Wife")]


def counterfactual_gender_race(x, meta: FeatureMeta, gender: str = "sex", race: str = "race"):
    """The four gender x race combinations written into ``x``'s encoding,
    ordered (0,0), (0,1), (1,0), (1,1)."""
    gi, ri = meta.index(gender), meta.index(race)
    out = []
    for g in (0.0, 1.0):
        for r in (0.0, 1.0):
            c = np.array(x, dtype=np.float64, copy=True)
            c[..., gi] = meta.columns[gi].encode(g)
            c[..., ri] = meta.columns[ri].encode(r)
            out.append(c)
    return out
