"""Auditing a classifier for violations of individual fairness.

The auditor's worst case over an ``epsilon`` fair-Wasserstein ball is computed
through its one-dimensional dual::

    inf_{lam >= 0}  lam * epsilon + mean_i  sup_x [ loss(x, y_i) - lam * d^2(x, x_i) ]

The inner sup (the c-transform) is approximated by a two-phase ascent: first
along the sensitive subspace, then over the full input space. Its argmax is
the unfair map. ``solve_dual`` runs stochastic projected gradient steps on
``lam``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from sensr import models
from sensr.fair_metric import MahalanobisMetric
from sensr.optim import Adam

log = logging.getLogger(__name__)


class AttackDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    """Step sizes and step counts of the two ascent phases (Adam for both)."""

    subspace_step: float = 10.0
    subspace_epochs: int = 50
    full_step: float = 1e-4
    full_epochs: int = 40
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.subspace_epochs < 0 or self.full_epochs < 0:
            raise ValueError("attack step counts must be >= 0")
        if self.subspace_step <= 0 or self.full_step <= 0:
            raise ValueError("attack step sizes must be positive")

    def check_budget(self, epsilon: float) -> None:
        if epsilon > 0 and self.full_epochs > 0 and self.full_step >= epsilon:
            warnings.warn(
                f"full_step={self.full_step} is not below epsilon={epsilon}", stacklevel=3
            )


@dataclass(frozen=True)
class AuditConfig:
    epsilon: float
    lambda_init: float = 1.0
    lambda_step: float = 0.01
    batch_size: int = 1000
    max_iters: int = 1000
    seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    tol: float = 1e-4
    window: int = 50

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_init < 0 or self.lambda_step <= 0:
            raise ValueError("need lambda_init >= 0 and lambda_step > 0")
        self.attack.check_budget(self.epsilon)


@dataclass(frozen=True)
class CTransformResult:
    """Per-sample results of the penalised inner maximisation.

    ``value`` is the c-transform estimate, ``x_star`` the unfair-map image,
    ``loss`` the loss at ``x_star`` and ``cost`` its squared fair distance from
    the start. Scalars/vectors for a single point, arrays for a batch.
    """

    value: np.ndarray
    x_star: np.ndarray
    loss: np.ndarray
    cost: np.ndarray


def _objective(model, sigma, X0, y, lam, X):
    losses, gx = models.loss_and_grad_input(model, X, y)
    diff = X - X0
    sd = diff @ sigma
    cost = np.maximum(np.einsum("ij,ij->i", diff, sd), 0.0)
    value = losses - lam * cost
    if not np.all(np.isfinite(value)):
        raise AttackDiverged("attack diverged")
    return value, losses, cost, gx - 2.0 * lam * sd


def c_transform_batch(
    model,
    metric: MahalanobisMetric,
    X,
    y,
    lam: float,
    attack: AttackConfig,
    full: bool = True,
) -> CTransformResult:
    """Approximate ``sup_x loss(x, y_i) - lam * d^2(x, x_i)`` for every row.

    Phase 1 ascends coefficients on the metric's sensitive basis (skipped if
    the metric has none), phase 2 ascends an unrestricted perturbation started
    from the best phase-1 point (skipped when ``full`` is False). Perturbations
    start at zero; the best iterate of either phase is returned, the start
    point included, so ``value >= loss(x_i)``.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X0 = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X0.shape
    if d != metric.dim:
        raise ValueError(f"metric is {metric.dim}-d but inputs are {d}-d")
    y = np.broadcast_to(np.asarray(y), (n,))
    sigma = metric.sigma

    value, losses, cost, grad = _objective(model, sigma, X0, y, lam, X0)
    best = {"value": value, "x": X0.copy(), "loss": losses, "cost": cost}

    def keep(Xc, v, l, c):
        better = v > best["value"]
        if np.any(better):
            best["value"] = np.where(better, v, best["value"])
            best["loss"] = np.where(better, l, best["loss"])
            best["cost"] = np.where(better, c, best["cost"])
            best["x"] = np.where(better[:, None], Xc, best["x"])

    opt_kw = dict(beta1=attack.adam_beta1, beta2=attack.adam_beta2, eps=attack.adam_eps)

    if metric.basis is not None and attack.subspace_epochs > 0:
        Q = metric.basis
        w = np.zeros((n, Q.shape[1]))
        opt = Adam(attack.subspace_step, **opt_kw)
        for _ in range(attack.subspace_epochs):
            w = opt.step({"w": w}, {"w": -(grad @ Q)})["w"]
            Xc = X0 + w @ Q.T
            v, l, c, grad = _objective(model, sigma, X0, y, lam, Xc)
            keep(Xc, v, l, c)

    if full and attack.full_epochs > 0:
        start = best["x"].copy()
        delta = np.zeros_like(X0)
        opt = Adam(attack.full_step, **opt_kw)
        _, _, _, grad = _objective(model, sigma, X0, y, lam, start)
        for _ in range(attack.full_epochs):
            delta = opt.step({"d": delta}, {"d": -grad})["d"]
            Xc = start + delta
            v, l, c, grad = _objective(model, sigma, X0, y, lam, Xc)
            keep(Xc, v, l, c)

    return CTransformResult(best["value"], best["x"], best["loss"], best["cost"])


def c_transform(model, metric, x, y, lam, attack: AttackConfig, full: bool = True) -> CTransformResult:
    """Single-point version of :func:`c_transform_batch`."""
    r = c_transform_batch(model, metric, np.asarray(x, dtype=np.float64)[None, :], [y], lam, attack, full)
    return CTransformResult(float(r.value[0]), r.x_star[0], float(r.loss[0]), float(r.cost[0]))


def dual_value(model, metric, X, y, lam, epsilon, attack: AttackConfig) -> float:
    """``lam * epsilon + mean c-transform`` at a fixed ``lam``."""
    r = c_transform_batch(model, metric, X, y, lam, attack, full=epsilon > 0)
    return float(lam * epsilon + r.value.mean())


def _xy(dataset):
    if isinstance(dataset, tuple):
        X, y = dataset
    else:
        X, y = dataset.features, dataset.labels
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    return X, np.asarray(y)


def solve_dual(model, metric, dataset, cfg: AuditConfig):
    """Stochastic projected gradient on the dual variable.

    Returns ``(lam, trajectory)``; stops after ``max_iters`` steps or when
    ``|lam change| < tol`` for ``window`` consecutive steps.
    """
    if cfg.epsilon <= 0:
        raise ValueError("solve_dual needs epsilon > 0")
    X, y = _xy(dataset)
    rng = np.random.default_rng(cfg.seed)
    lam = float(cfg.lambda_init)
    trajectory = [lam]
    calm = 0
    for it in range(cfg.max_iters):
        idx = rng.integers(0, X.shape[0], size=cfg.batch_size)
        r = c_transform_batch(model, metric, X[idx], y[idx], lam, cfg.attack)
        new = max(0.0, lam - cfg.lambda_step * (cfg.epsilon - float(r.cost.mean())))
        calm = calm + 1 if abs(new - lam) < cfg.tol else 0
        lam = new
        trajectory.append(lam)
        if calm >= cfg.window:
            log.debug("dual converged after %d steps, lambda=%.6g", it + 1, lam)
            break
    return lam, trajectory


@dataclass(frozen=True)
class AuditReport:
    lambda_final: float
    robust_loss: float
    clean_loss: float
    certificate_gap: float
    mean_perturbation_cost: float
    epsilon: float
    n_samples: int
    trajectory: list = field(repr=False)
    x_star: np.ndarray = field(repr=False)
    loss_gain: np.ndarray = field(repr=False)

    @property
    def per_sample(self):
        return [(i, self.x_star[i], float(self.loss_gain[i])) for i in range(self.n_samples)]

    def to_json(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("x_star", "loss_gain")}
        d["trajectory"] = [float(t) for t in self.trajectory]
        return d

    def write_csv(self, path, features) -> None:
        import csv

        features = np.asarray(features)
        d = features.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["index"] + [f"x{j}" for j in range(d)] + [f"x_star{j}" for j in range(d)] + ["loss_gain"]
            )
            for i in range(self.n_samples):
                w.writerow([i, *map(repr, features[i].tolist()), *map(repr, self.x_star[i].tolist()),
                            repr(float(self.loss_gain[i]))])


def audit(model, metric, dataset, cfg: AuditConfig) -> AuditReport:
    """Solve the dual, then evaluate robust and clean loss on the whole dataset."""
    X, y = _xy(dataset)
    clean = models.loss_and_grad_input(model, X, y)[0]
    if cfg.epsilon == 0:
        # zero budget: the ball is {P_n}
        return AuditReport(0.0, float(clean.mean()), float(clean.mean()), 0.0, 0.0, 0.0,
                           X.shape[0], [], X.copy(), np.zeros(X.shape[0]))
    lam, traj = solve_dual(model, metric, (X, y), cfg)
    r = c_transform_batch(model, metric, X, y, lam, cfg.attack)
    robust = lam * cfg.epsilon + float(r.value.mean())
    clean_loss = float(clean.mean())
    return AuditReport(
        lambda_final=lam,
        robust_loss=robust,
        clean_loss=clean_loss,
        certificate_gap=robust - clean_loss,
        mean_perturbation_cost=float(r.cost.mean()),
        epsilon=cfg.epsilon,
        n_samples=X.shape[0],
        trajectory=traj,
        x_star=r.x_star,
        loss_gain=r.loss - clean,
    )


def lipschitz_estimate(model, dataset, metric, samples: int, seed: int = 0) -> float:
    """Largest ``|loss_1 - loss_2| / d(x_1, x_2)`` over random same-label pairs."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    X, y = _xy(dataset)
    losses = models.loss_and_grad_input(model, X, y)[0]
    rng = np.random.default_rng(seed)
    i = rng.integers(0, X.shape[0], size=samples)
    j = rng.integers(0, X.shape[0], size=samples)
    ok = (y[i] == y[j]) & (i != j)
    i, j = i[ok], j[ok]
    if i.size == 0:
        return 0.0
    d2 = metric.distance_sq(X[i], X[j])
    pos = d2 > 1e-24
    if not np.any(pos):
        return 0.0
    return float(np.max(np.abs(losses[i][pos] - losses[j][pos]) / np.sqrt(d2[pos])))
