"""End-to-end toy demonstration: two groups, one horizontal sensitive axis.

The baseline logistic model picks up the group offset and tilts its boundary;
the unfair map of its audit pushes points sideways across groups. SenSR trained
against the horizontal axis keeps a flat boundary and a small certificate gap.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from sensr import auditor, data, models, trainer
from sensr.auditor import AttackConfig, AuditConfig
from sensr.fair_metric import SensitiveSubspace, projection_complement
from sensr.raster import Box, Canvas

log = logging.getLogger(__name__)

HORIZONTAL = 0


@dataclass(frozen=True)
class ToyDemoConfig:
    seed: int = 0
    n_major: int = 1000
    n_minor: int = 100
    test_major: int = 10000
    test_minor: int = 1000
    arch: trainer.ArchSpec = field(default_factory=lambda: trainer.ArchSpec("logistic"))
    train: trainer.TrainConfig = field(default_factory=lambda: trainer.TrainConfig(
        epochs=2000, batch_size=200, epsilon=0.05, lambda_step=1.0, theta_step=0.01,
        attack=AttackConfig(subspace_step=0.5, subspace_epochs=20, full_step=0.01, full_epochs=20),
    ))
    audit: AuditConfig = field(default_factory=lambda: AuditConfig(
        epsilon=0.05, lambda_step=1.0, batch_size=200, max_iters=300,
        attack=AttackConfig(subspace_step=0.5, subspace_epochs=20, full_step=0.01, full_epochs=50),
    ))
    image_size: int = 320

    def with_seed(self, seed: int) -> "ToyDemoConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed), audit=replace(self.audit, seed=seed))

    def with_epochs(self, epochs: int) -> "ToyDemoConfig":
        return replace(self, train=replace(self.train, epochs=epochs))


def toy_metric():
    """Fair metric that ignores the horizontal coordinate."""
    return projection_complement(SensitiveSubspace.from_directions([[1.0], [0.0]]))


def _margin(params, X):
    z = models.forward(params, X)
    return z[:, 1] - z[:, 0]


def _score(params):
    return lambda P: 1.0 / (1.0 + np.exp(-np.clip(_margin(params, P), -500, 500)))


def horizontal_sensitivity(params, X, width: float, steps: int = 21) -> float:
    """Largest change in logit margin when sliding test points horizontally
    by at most ``width``."""
    base = _margin(params, X)
    worst = 0.0
    for t in np.linspace(-width, width, steps):
        worst = max(worst, float(np.max(np.abs(_margin(params, X + [t, 0.0]) - base))))
    return worst


def group_accuracy(params, ds):
    preds = models.predict(params, ds.features)
    g = ds.protected["group"]
    return {int(k): float(np.mean(preds[g == k] == ds.labels[g == k])) for k in (0, 1)}


def run(out_dir, cfg: ToyDemoConfig = ToyDemoConfig()) -> dict:
    """Writes everything under ``out_dir`` and returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = data.make_toy(cfg.seed, cfg.n_major, cfg.n_minor)
    test_ds = data.make_toy(cfg.seed + 1, cfg.test_major, cfg.test_minor)
    train_ds.save_csv(out / "toy_train.csv")
    test_ds.save_csv(out / "toy_test.csv")
    metric = toy_metric()
    metric.save(out / "metric.json")

    base_cfg = replace(cfg.train, mode="baseline", epsilon=0.0, seed=cfg.seed)
    sensr_cfg = replace(cfg.train, mode="sensr", seed=cfg.seed)
    fitted = {
        "baseline": trainer.train_baseline(train_ds, cfg.arch, base_cfg),
        "sensr": trainer.train_sensr(train_ds, metric, cfg.arch, sensr_cfg),
    }
    audit_cfg = replace(cfg.audit, seed=cfg.seed)
    width = float(np.ptp(train_ds.features[:, HORIZONTAL]))
    summary = {"config": _jsonable(asdict(cfg)), "models": {}}
    reports = {}
    for name, (params, tlog) in fitted.items():
        params.save(out / f"{name}.json")
        tlog.write_csv(out / f"{name}_log.csv")
        rep = auditor.audit(params, metric, test_ds, audit_cfg)
        reports[name] = rep
        (out / f"audit_{name}.json").write_text(json.dumps(rep.to_json(), indent=2))
        rep.write_csv(out / f"audit_{name}.csv", test_ds.features)
        disp = np.abs(rep.x_star - test_ds.features)
        summary["models"][name] = {
            "certificate_gap": rep.certificate_gap,
            "lambda_final": rep.lambda_final,
            "group_accuracy": group_accuracy(params, test_ds),
            "mean_horizontal_displacement": float(disp[:, 0].mean()),
            "mean_vertical_displacement": float(disp[:, 1].mean()),
            "horizontal_sensitivity": horizontal_sensitivity(params, test_ds.features, width),
        }

    box = Box.around(train_ds.features)
    size = cfg.image_size
    base_p, sensr_p = fitted["baseline"][0], fitted["sensr"][0]
    Canvas(box, size, size).heatmap(_score(base_p)).points(train_ds.features, train_ds.labels) \
        .save(out / "baseline_heatmap.png")
    # unfair map on a readable subsample of the training points
    pick = np.random.default_rng(cfg.seed).choice(train_ds.n, size=min(150, train_ds.n), replace=False)
    moved = auditor.c_transform_batch(base_p, metric, train_ds.features[pick], train_ds.labels[pick],
                                      reports["baseline"].lambda_final, audit_cfg.attack).x_star
    wide = Box.around(np.vstack([train_ds.features, moved]))
    Canvas(wide, size, size).heatmap(_score(base_p)) \
        .segments(train_ds.features[pick], moved).points(moved, train_ds.labels[pick]) \
        .save(out / "unfair_map.png")
    Canvas(box, size, size).heatmap(_score(sensr_p)).points(train_ds.features, train_ds.labels) \
        .save(out / "sensr_heatmap.png")

    b, s = summary["models"]["baseline"], summary["models"]["sensr"]
    summary["checks"] = {
        "sensr_gap_below_baseline": s["certificate_gap"] < b["certificate_gap"],
        "gap_ratio": s["certificate_gap"] / b["certificate_gap"] if b["certificate_gap"] > 0 else None,
        "baseline_displacement_ratio": b["mean_horizontal_displacement"] / max(b["mean_vertical_displacement"], 1e-300),
        "sensr_group_accuracy_gap": abs(s["group_accuracy"][0] - s["group_accuracy"][1]),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj
