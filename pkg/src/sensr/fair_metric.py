"""Fair Mahalanobis metrics and sensitive-subspace estimation.

The canonical quantity everywhere in this package is the squared fair
distance ``(x1 - x2)^T Sigma (x1 - x2)``; the transport cost between labelled
points is that quadratic form when the labels agree and ``INF_COST`` otherwise.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from sensr import linalg
from sensr.optim import Adam

log = logging.getLogger(__name__)

#: transport cost between points with different labels
INF_COST = float("inf")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class SensitiveSubspace:
    """Sensitive directions (``d x k``) plus an orthonormal basis of their span."""

    directions: np.ndarray
    basis: np.ndarray

    @classmethod
    def from_directions(cls, directions) -> "SensitiveSubspace":
        a = linalg.as_matrix(directions, "directions")
        basis = linalg.qr_orthonormal(a)
        if basis.shape[1] == 0:
            raise MetricError("sensitive directions are all zero")
        return cls(directions=a, basis=basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def with_axes(self, axes: Iterable[int]) -> "SensitiveSubspace":
        """Append coordinate axes (e.g. a gender or race column) as directions."""
        cols = [self.directions]
        for j in axes:
            e = np.zeros((self.dim, 1))
            e[j, 0] = 1.0
            cols.append(e)
        return SensitiveSubspace.from_directions(np.hstack(cols))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "directions": self.directions.tolist(),
            "basis": self.basis.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SensitiveSubspace":
        d = int(obj["dim"])
        directions = np.asarray(obj["directions"], dtype=np.float64).reshape(d, -1)
        basis = np.asarray(obj["basis"], dtype=np.float64).reshape(d, -1)
        return cls(directions=directions, basis=basis)


@dataclass(frozen=True)
class MahalanobisMetric:
    """PSD matrix ``sigma``; ``basis`` is set when built from a sensitive subspace."""

    sigma: np.ndarray
    basis: np.ndarray | None = None
    subspace: SensitiveSubspace | None = field(default=None, compare=False)

    def __post_init__(self):
        s = linalg.as_matrix(self.sigma, "sigma")
        if s.shape[0] != s.shape[1]:
            raise MetricError(f"sigma must be square, got {s.shape}")
        if np.max(np.abs(s - s.T), initial=0.0) > 1e-12 * max(1.0, np.abs(s).max(initial=0.0)):
            raise MetricError("sigma is not symmetric")
        object.__setattr__(self, "sigma", s)

    @classmethod
    def identity(cls, d: int) -> "MahalanobisMetric":
        return cls(np.eye(d))

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def distance_sq(self, x1, x2) -> np.ndarray | float:
        return distance_sq(self, x1, x2)

    def to_json(self) -> dict:
        if self.subspace is not None:
            return self.subspace.to_json()
        return {"dim": self.dim, "sigma": self.sigma.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "MahalanobisMetric":
        if "basis" in obj:
            return projection_complement(SensitiveSubspace.from_json(obj))
        return cls(np.asarray(obj["sigma"], dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "MahalanobisMetric":
        return cls.from_json(json.loads(Path(path).read_text()))


def projection_complement(subspace: SensitiveSubspace) -> MahalanobisMetric:
    """Projector ``I - Q Q^T`` onto the orthogonal complement of the subspace."""
    q = subspace.basis
    d, r = q.shape
    if r == 0:
        raise MetricError("subspace basis is empty")
    if r >= d:
        raise MetricError("subspace spans whole space")
    sigma = np.eye(d) - q @ q.T
    sigma = 0.5 * (sigma + sigma.T)
    return MahalanobisMetric(sigma=sigma, basis=q, subspace=subspace)


def distance_sq(metric: MahalanobisMetric, x1, x2):
    """Squared fair distance; accepts single points or row-aligned batches."""
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape[-1] != metric.dim or b.shape[-1] != metric.dim:
        raise MetricError(
            f"dimension mismatch: metric is {metric.dim}-d, got {a.shape} and {b.shape}"
        )
    diff = a - b
    out = np.einsum("...i,ij,...j->...", diff, metric.sigma, diff)
    # PSD up to rounding
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def transport_cost(metric: MahalanobisMetric, z1, z2) -> float:
    (x1, y1), (x2, y2) = z1, z2
    d2 = distance_sq(metric, x1, x2)
    if y1 != y2:
        return INF_COST
    return d2


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_softmax_regression(
    features,
    classes,
    l2_reg: float = 0.1,
    epochs: int = 2000,
    lr: float = 0.05,
    batch_size: int | None = None,
    seed: int = 0,
):
    """L2-penalised logistic (binary) or softmax regression.

    Returns ``(W, b)`` where ``W`` has one column for a binary target and
    ``k`` columns otherwise. Full-batch Adam when ``batch_size`` is None,
    otherwise seeded minibatches drawn without replacement per step.
    """
    X = linalg.as_matrix(features, "features")
    labels = np.asarray(classes)
    uniq, yi = np.unique(labels, return_inverse=True)
    k = uniq.size
    if k < 2:
        raise MetricError("need at least 2 protected classes")
    n, d = X.shape
    binary = k == 2
    cols = 1 if binary else k
    W = np.zeros((d, cols))
    b = np.zeros(cols)
    opt = Adam(lr=lr)
    rng = np.random.default_rng(seed)
    onehot = np.eye(k)[yi]
    for _ in range(epochs):
        if batch_size is None or batch_size >= n:
            idx = slice(None)
        else:
            idx = rng.choice(n, size=batch_size, replace=False)
        xb = X[idx]
        z = xb @ W + b
        if binary:
            p = 1.0 / (1.0 + np.exp(-z))
            r = p - yi[idx, None]
        else:
            r = _softmax_rows(z) - onehot[idx]
        m = xb.shape[0]
        gW = xb.T @ r / m + 2.0 * l2_reg * W
        gb = r.mean(axis=0)
        if not (np.all(np.isfinite(gW)) and np.all(np.isfinite(gb))):
            raise MetricError("diverged; reduce step size")
        W, b = opt.step({"W": W, "b": b}, {"W": gW, "b": gb}).values()
    return W, b


def learn_subspace_softmax(
    features,
    protected,
    l2_reg: float = 0.1,
    epochs: int = 2000,
    lr: float = 0.05,
    batch_size: int | None = None,
    seed: int = 0,
    zero_columns: Sequence[int] = (),
    extra_axes: Sequence[int] = (),
) -> SensitiveSubspace:
    """Sensitive subspace spanned by the coefficients of a protected-attribute classifier.

    ``zero_columns`` are blanked in the features before fitting (e.g. the
    protected column itself); ``extra_axes`` are appended as coordinate
    directions before orthonormalisation.
    """
    X = linalg.as_matrix(features, "features").copy()
    for j in zero_columns:
        X[:, j] = 0.0
    W, _ = fit_softmax_regression(
        X, protected, l2_reg=l2_reg, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed
    )
    norm = np.linalg.norm(W)
    log.info("softmax subspace: coefficient norm %.4g", norm)
    directions = W
    if extra_axes:
        axes = np.zeros((X.shape[1], len(extra_axes)))
        for c, j in enumerate(extra_axes):
            axes[j, c] = 1.0
        directions = np.hstack([W, axes])
    return SensitiveSubspace.from_directions(directions)


def learn_subspace_factor(groups: Sequence, k: int) -> SensitiveSubspace:
    """Estimate the sensitive span from groups of comparable samples.

    Each group (rows = representations) is de-meaned; the stacked centred rows
    are factorised and the top ``k`` right singular vectors are the estimated
    sensitive directions.
    """
    centred = []
    for g, members in enumerate(groups):
        m = linalg.as_matrix(members, f"group {g}")
        if m.shape[0] < 2:
            raise MetricError(f"group {g} has fewer than 2 members")
        centred.append(m - m.mean(axis=0, keepdims=True))
    if not centred:
        raise MetricError("no comparable groups given")
    dims = {c.shape[1] for c in centred}
    if len(dims) != 1:
        raise MetricError(f"groups disagree on dimension: {sorted(dims)}")
    stacked = np.vstack(centred)
    d = stacked.shape[1]
    if k < 1 or k > d:
        raise MetricError(f"k={k} must be in [1, {d}]")
    rank = linalg.numerical_rank(stacked)
    if k > rank:
        raise MetricError(f"k={k} exceeds rank {rank} of the centred groups")
    _, v = linalg.truncated_svd(stacked, k)
    return SensitiveSubspace.from_directions(v)
