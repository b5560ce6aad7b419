"""SenSR minimax training and the two reference trainers (Baseline, Project).

One "epoch" is one class-balanced minibatch step. Each SenSR step attacks the
batch at the current dual variable, takes a projected step on the dual
variable, then an Adam step on the parameters using the attacked inputs.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from sensr import models
from sensr.auditor import AttackConfig, AttackDiverged, c_transform_batch
from sensr.fair_metric import MahalanobisMetric
from sensr.optim import Adam

log = logging.getLogger(__name__)

MODES = ("sensr", "baseline", "project")


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, last_good: models.ModelParams, epoch: int):
        super().__init__(msg)
        self.last_good = last_good
        self.epoch = epoch


@dataclass(frozen=True)
class ArchSpec:
    arch: str = "mlp"
    hidden: int = 100
    activation: str = "relu"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12000
    batch_size: int = 1000
    epsilon: float = 1e-3
    lambda_step: float = 0.01
    theta_step: float = 1e-3
    attack: AttackConfig = field(default_factory=AttackConfig)
    seed: int = 0
    mode: str = "sensr"
    lambda_init: float = 1.0
    checkpoint_every: int = 500

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("need epochs >= 0 and batch_size >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.lambda_step <= 0 or self.theta_step <= 0:
            raise ValueError("step sizes must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "sensr":
            self.attack.check_budget(self.epsilon)


# Reference hyperparameters for Adult and the sentiment task.
ADULT_CONFIG = TrainConfig(
    epochs=12000, batch_size=1000, epsilon=1e-3,
    attack=AttackConfig(subspace_step=10.0, subspace_epochs=50, full_step=1e-4, full_epochs=40),
)
SENTIMENT_CONFIG = TrainConfig(
    epochs=4000, batch_size=1000, epsilon=0.1,
    attack=AttackConfig(subspace_step=0.1, subspace_epochs=10, full_step=0.01, full_epochs=10),
)


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    COLUMNS = ("epoch", "lambda", "clean_loss", "robust_loss", "mean_cost")

    def append(self, *row):
        self.records.append(tuple(row))

    def column(self, name):
        return np.array([r[self.COLUMNS.index(name)] for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.records:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def balanced_minibatch(labels, batch_size: int, rng, n_classes: int | None = None) -> np.ndarray:
    """``batch_size`` indices with (near) equal counts per class, sampled with
    replacement within each class; the remainder goes to randomly chosen classes."""
    labels = np.asarray(labels)
    C = int(labels.max()) + 1 if n_classes is None else n_classes
    if batch_size < C:
        raise ValueError(f"batch_size={batch_size} is smaller than the class count {C}")
    members = [np.flatnonzero(labels == c) for c in range(C)]
    for c, m in enumerate(members):
        if m.size == 0:
            raise ValueError(f"class {c} has no examples")
    counts = np.full(C, batch_size // C)
    extra = batch_size % C
    if extra:
        counts[rng.choice(C, size=extra, replace=False)] += 1
    return np.concatenate([m[rng.integers(0, m.size, size=k)] for m, k in zip(members, counts)])


def _run(dataset, metric, params, cfg: TrainConfig, attack_on: bool):
    X, y = dataset.features, dataset.labels
    C = params.n_classes
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    opt = Adam(cfg.theta_step)
    lam = float(cfg.lambda_init)
    log_ = TrainLog()
    last_good, last_epoch = params, 0
    for epoch in range(cfg.epochs):
        if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            last_good, last_epoch = params, epoch
        idx = balanced_minibatch(y, cfg.batch_size, rng, C)
        xb, yb = X[idx], y[idx]
        try:
            if attack_on:
                r = c_transform_batch(params, metric, xb, yb, lam, cfg.attack, full=cfg.epsilon > 0)
                x_star, mean_cost = r.x_star, float(r.cost.mean())
                lam = max(0.0, lam - cfg.lambda_step * (cfg.epsilon - mean_cost))
                clean = float(models.loss(params, xb, yb).mean())
            else:
                x_star, mean_cost = xb, 0.0
            losses, grads, _ = models.loss_and_grads(params, x_star, yb, want_input=False)
        except AttackDiverged as exc:
            raise TrainingDiverged(f"training diverged at epoch {epoch}: {exc}", last_good, last_epoch) from exc
        robust = float(losses.mean())
        if not attack_on:
            clean = robust
        if not (np.isfinite(robust) and all(np.all(np.isfinite(g)) for g in grads.values())):
            raise TrainingDiverged(f"training diverged at epoch {epoch}", last_good, last_epoch)
        params = params.with_weights(opt.step(params.weights, grads))
        log_.append(epoch, lam, clean, robust, mean_cost)
    return params, log_


def _init(dataset, arch: ArchSpec, cfg: TrainConfig, projection=None):
    p = models.init_params(arch.arch, dataset.dim, max(dataset.n_classes, 2), hidden=arch.hidden,
                           seed=cfg.seed, activation=arch.activation)
    return replace(p, input_projection=projection)


def train_sensr(dataset, metric: MahalanobisMetric, arch: ArchSpec, cfg: TrainConfig):
    """Returns ``(params, TrainLog)``."""
    if cfg.mode != "sensr":
        raise ValueError("train_sensr needs cfg.mode == 'sensr'")
    if metric.dim != dataset.dim:
        raise ValueError(f"metric is {metric.dim}-d but features are {dataset.dim}-d")
    return _run(dataset, metric, _init(dataset, arch, cfg), cfg, attack_on=True)


def train_baseline(dataset, arch: ArchSpec, cfg: TrainConfig):
    """Plain ERM with the same balanced batches and Adam updates."""
    return _run(dataset, None, _init(dataset, arch, cfg), cfg, attack_on=False)


def train_project(dataset, metric: MahalanobisMetric, arch: ArchSpec, cfg: TrainConfig):
    """ERM on inputs multiplied by the metric's projector; the projector is
    stored in the returned model so evaluation inputs get the same treatment."""
    if metric.basis is None:
        warnings.warn("metric is not a subspace projector; projecting with sigma anyway")
    if metric.dim != dataset.dim:
        raise ValueError(f"metric is {metric.dim}-d but features are {dataset.dim}-d")
    return _run(dataset, None, _init(dataset, arch, cfg, projection=metric.sigma.copy()), cfg, attack_on=False)


def train(dataset, metric, arch: ArchSpec, cfg: TrainConfig):
    if cfg.mode == "sensr":
        return train_sensr(dataset, metric, arch, cfg)
    if cfg.mode == "project":
        return train_project(dataset, metric, arch, cfg)
    return train_baseline(dataset, arch, cfg)
