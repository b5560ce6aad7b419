"""Adult income experiment: learn the metric, train each mode, evaluate.

One seed fixes the train/test split, the metric fit and the training runs, so
``run(cfg, seeds=(0, 1, 2))`` gives three independent replicates.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from sensr import data, metrics, trainer
from sensr.fair_metric import learn_subspace_softmax, projection_complement

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubspaceFit:
    l2_reg: float = 0.1
    epochs: int = 5000
    batch_size: int = 5000
    lr: float = 1e-3


@dataclass(frozen=True)
class AdultExperiment:
    data_dir: str = "data/adult"
    # the attack makes SenSR ~60x slower per step, so only it runs shortened
    sensr_epochs: int = 4000
    arch: trainer.ArchSpec = field(default_factory=trainer.ArchSpec)
    train: trainer.TrainConfig = trainer.ADULT_CONFIG
    subspace: SubspaceFit = field(default_factory=SubspaceFit)
    modes: tuple = ("sensr", "baseline", "project")


def load(cfg: AdultExperiment, seed: int):
    root = Path(cfg.data_dir)
    return data.load_adult(root / "adult.data", root / "adult.test", split_seed=seed)


def fit_metric(cfg: AdultExperiment, train_ds, seed: int):
    """Complement of the span of a gender classifier's coefficients plus the
    ``sex`` and ``race`` coordinate axes; the classifier never sees ``sex``."""
    sex, race = train_ds.meta.index("sex"), train_ds.meta.index("race")
    s = cfg.subspace
    sub = learn_subspace_softmax(
        train_ds.features, train_ds.protected["gender"], l2_reg=s.l2_reg, epochs=s.epochs,
        batch_size=s.batch_size, lr=s.lr, seed=seed, zero_columns=[sex], extra_axes=[sex, race],
    )
    return projection_complement(sub)


def run_seed(cfg: AdultExperiment, seed: int) -> dict:
    """``{mode: EvalReport.to_json() + {"seconds": ...}}`` for one replicate."""
    train_ds, test_ds = load(cfg, seed)
    metric = fit_metric(cfg, train_ds, seed)
    out = {}
    for mode in cfg.modes:
        epochs = cfg.sensr_epochs if mode == "sensr" else cfg.train.epochs
        tcfg = replace(cfg.train, epochs=epochs, mode=mode, seed=seed)
        t = time.perf_counter()
        params, _ = trainer.train(train_ds, metric, cfg.arch, tcfg)
        rep = metrics.evaluate(params, test_ds, attributes=("gender", "race"), spouse=True, gender_race=True)
        out[mode] = {**rep.to_json(), "seconds": time.perf_counter() - t}
        log.info("seed %d %s: B-Acc %.3f S-Con %.3f GR-Con %.3f", seed, mode,
                 rep.balanced_accuracy, rep.s_con, rep.gr_con)
    return out


def run(cfg: AdultExperiment, seeds=(0, 1, 2)) -> dict:
    """``{mode: {seed: report}}`` across seeds."""
    rows = {m: {} for m in cfg.modes}
    for seed in seeds:
        for mode, rep in run_seed(cfg, seed).items():
            rows[mode][seed] = rep
    return rows
