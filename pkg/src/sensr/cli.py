"""Command-line entry point: ``sensr metric|train|audit|eval|demo-toy|prepare-adult``.

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O error.

Run configs are JSON; every section is optional and unknown keys are errors::

    {
      "seed": 0,
      "arch":  {"arch": "mlp", "hidden": 100, "activation": "relu"},
      "train": {"epochs": 4000, "batch_size": 1000, "epsilon": 0.001, "mode": "sensr",
                "attack": {"subspace_step": 10, "subspace_epochs": 50,
                           "full_step": 0.0001, "full_epochs": 40}},
      "audit": {"epsilon": 0.001, "max_iters": 200, "attack": {...}},
      "data":  {"path": "adult_train.csv", "label": "label", "protected": ["gender"]},
      "metric": "metric.json",
      "eval":  {"attributes": ["gender", "race"], "spouse": true, "gender_race": true}
    }

Relative paths inside a config are taken relative to the config file.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sensr import auditor, data, demo, metrics, models, trainer
from sensr.fair_metric import (MahalanobisMetric, MetricError, learn_subspace_factor,
                               learn_subspace_softmax, projection_complement)

log = logging.getLogger("sensr")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class DataSpec:
    path: str | None = None
    label: str = "label"
    protected: tuple = ()


@dataclasses.dataclass(frozen=True)
class EvalSpec:
    attributes: tuple = ()
    spouse: bool = False
    gender_race: bool = False


@dataclasses.dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    arch: trainer.ArchSpec = trainer.ArchSpec()
    train: trainer.TrainConfig = trainer.ADULT_CONFIG
    audit: auditor.AuditConfig = auditor.AuditConfig(epsilon=1e-3, attack=trainer.ADULT_CONFIG.attack)
    data: DataSpec = DataSpec()
    metric: str | None = None
    eval: EvalSpec = EvalSpec()


def _build(cls, obj, where, nested=None):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = dict(obj)
    for key, sub in (nested or {}).items():
        if key in kw:
            kw[key] = _build(sub, kw[key], f"{where}.{key}")
    for key in ("protected", "attributes"):
        if key in kw:
            kw[key] = tuple(kw[key])
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _resolve(path, base: Path) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else base / p)


def parse_run_config(path) -> RunConfig:
    """Load and validate a RunConfig; referenced files must exist."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(obj) - {f.name for f in dataclasses.fields(RunConfig)})
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    base = path.parent
    kw = {}
    if "seed" in obj:
        if not isinstance(obj["seed"], int):
            raise ConfigError(f"{path}: seed must be an integer")
        kw["seed"] = obj["seed"]
    if "arch" in obj:
        kw["arch"] = _build(trainer.ArchSpec, obj["arch"], "arch")
    if "train" in obj:
        kw["train"] = _build(trainer.TrainConfig, obj["train"], "train", {"attack": auditor.AttackConfig})
    if "audit" in obj:
        kw["audit"] = _build(auditor.AuditConfig, obj["audit"], "audit", {"attack": auditor.AttackConfig})
    if "data" in obj:
        spec = _build(DataSpec, obj["data"], "data")
        if spec.path is not None:
            spec = dataclasses.replace(spec, path=_resolve(spec.path, base))
        kw["data"] = spec
    if "metric" in obj and obj["metric"] is not None:
        kw["metric"] = _resolve(obj["metric"], base)
    if "eval" in obj:
        kw["eval"] = _build(EvalSpec, obj["eval"], "eval")
    cfg = RunConfig(**kw)
    for what, p in (("data.path", cfg.data.path), ("metric", cfg.metric)):
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{path}: {what} {p} does not exist")
    return cfg


# ---------------------------------------------------------------- helpers


def _out(args, name) -> Path:
    p = Path(name)
    if not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _run_config(args) -> RunConfig:
    cfg = parse_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _need(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required (flag or config)")
    return value


def _load_data(path, spec: DataSpec):
    return data.load_csv(path, label=spec.label, protected=spec.protected)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def cmd_prepare_adult(args) -> int:
    tr, te = data.load_adult(args.train, args.test, split_seed=args.seed or 0)
    tr.save_csv(_out(args, "adult_train.csv"))
    te.save_csv(_out(args, "adult_test.csv"))
    print(f"adult: {tr.n} train / {te.n} test rows, {tr.dim} features")
    return EXIT_OK


def cmd_learn_metric(args) -> int:
    cfg = _run_config(args)
    path = _need(args.data or cfg.data.path, "--data")
    if args.mode == "softmax":
        name = _need(args.protected or (cfg.data.protected[0] if cfg.data.protected else None), "--protected")
        ds = data.load_csv(path, label=cfg.data.label)
        if name not in ds.protected:
            # a plain column rather than a protected_<name> one
            ds = data.load_csv(path, label=cfg.data.label, protected=[name])
        idx = lambda names: [ds.meta.index(n) for n in names]
        sub = learn_subspace_softmax(
            ds.features, ds.protected[name], l2_reg=args.l2, epochs=args.epochs, lr=args.lr,
            batch_size=args.batch_size, seed=cfg.seed,
            zero_columns=idx(args.zero_columns), extra_axes=idx(args.axes),
        )
    else:
        groups_path = _need(args.groups, "--groups")
        try:
            spec = json.loads(Path(groups_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{groups_path}: invalid JSON ({exc})") from None
        if not isinstance(spec, list) or not spec:
            raise ConfigError("groups file must be a non-empty JSON list")
        if all(isinstance(g, list) and g and all(isinstance(i, int) for i in g) for g in spec):
            X = _load_data(path, cfg.data).features
            groups = [X[g] for g in spec]
        else:
            groups = [np.asarray(g, dtype=np.float64) for g in spec]
        sub = learn_subspace_factor(groups, _need(args.k, "--k"))
    metric = projection_complement(sub)
    out = _out(args, args.out)
    metric.save(out)
    print(f"metric: rank {sub.rank} sensitive subspace in {sub.dim} dims -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    tcfg = cfg.train
    over = {"seed": cfg.seed}
    if args.mode:
        over["mode"] = args.mode
    if args.epochs is not None:
        over["epochs"] = args.epochs
    try:
        tcfg = dataclasses.replace(tcfg, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds = _load_data(_need(args.data or cfg.data.path, "--data"), cfg.data)
    metric = None
    if tcfg.mode != "baseline":
        metric = MahalanobisMetric.load(_need(args.metric or cfg.metric, "--metric"))
    try:
        params, tlog = trainer.train(ds, metric, cfg.arch, tcfg)
    except trainer.TrainingDiverged as exc:
        exc.last_good.save(_out(args, "last_good.json"))
        raise
    out = _out(args, args.out)
    params.save(out)
    tlog.write_csv(_out(args, args.log))
    last = tlog.records[-1] if tlog.records else None
    print(f"train[{tcfg.mode}]: {tcfg.epochs} epochs -> {out}"
          + (f" (lambda {last[1]:.4g}, robust loss {last[3]:.4g})" if last else ""))
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _run_config(args)
    acfg = dataclasses.replace(cfg.audit, seed=cfg.seed)
    if args.epsilon is not None:
        try:
            acfg = dataclasses.replace(acfg, epsilon=args.epsilon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    params = models.ModelParams.load(_need(args.model, "--model"))
    ds = _load_data(_need(args.data or cfg.data.path, "--data"), cfg.data)
    metric = MahalanobisMetric.load(_need(args.metric or cfg.metric, "--metric"))
    rep = auditor.audit(params, metric, ds, acfg)
    out = _out(args, args.out)
    _write_json(out, rep.to_json())
    if args.csv:
        rep.write_csv(_out(args, args.csv), ds.features)
    print(f"audit: lambda {rep.lambda_final:.4g}, clean {rep.clean_loss:.4g}, "
          f"robust {rep.robust_loss:.4g}, gap {rep.certificate_gap:.4g} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    spec = cfg.eval
    attrs = tuple(args.attributes) if args.attributes else spec.attributes
    ds = data.load_csv(_need(args.data or cfg.data.path, "--data"), label=cfg.data.label,
                       protected=cfg.data.protected)
    params = models.ModelParams.load(_need(args.model, "--model"))
    rep = metrics.evaluate(params, ds, attributes=attrs, spouse=args.spouse or spec.spouse,
                           gender_race=args.gender_race or spec.gender_race)
    out = _out(args, args.out)
    _write_json(out, rep.to_json())
    table = rep.table()
    out.with_suffix(".txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_demo_toy(args) -> int:
    cfg = demo.ToyDemoConfig().with_seed(args.seed if args.seed is not None else 0)
    if args.epochs is not None:
        if args.epochs < 0:
            raise ConfigError("--epochs must be >= 0")
        cfg = cfg.with_epochs(args.epochs)
    out = Path(args.out_dir)
    summary = demo.run(out, cfg)
    for name, m in summary["models"].items():
        print(f"{name:8s} gap {m['certificate_gap']:.4f}  accuracy "
              f"{m['group_accuracy'][0]:.3f}/{m['group_accuracy'][1]:.3f} (majority/minority)")
    print(f"outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    common.add_argument("--config", default=None, help="RunConfig JSON file")
    common.add_argument("--out-dir", default=".", help="directory for every output file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sensr", description="Sensitive-subspace robust training and auditing.")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("metric", parents=[common], help="learn a fair metric")
    m.add_argument("--mode", choices=("softmax", "factor"), default="softmax")
    m.add_argument("--data")
    m.add_argument("--protected", help="protected column to predict (softmax)")
    m.add_argument("--zero-columns", nargs="*", default=[], help="feature names blanked before fitting")
    m.add_argument("--axes", nargs="*", default=[], help="feature names appended as sensitive axes")
    m.add_argument("--l2", type=float, default=0.1)
    m.add_argument("--epochs", type=int, default=2000)
    m.add_argument("--lr", type=float, default=0.05)
    m.add_argument("--batch-size", type=int, default=None)
    m.add_argument("--groups", help="JSON list of row-index lists or vector lists (factor)")
    m.add_argument("--k", type=int, help="subspace rank (factor)")
    m.add_argument("--out", default="metric.json")
    m.set_defaults(func=cmd_learn_metric)

    t = sub.add_parser("train", parents=[common], help="train a classifier")
    t.add_argument("--mode", choices=trainer.MODES)
    t.add_argument("--data")
    t.add_argument("--metric")
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", default="checkpoint.json")
    t.add_argument("--log", default="train_log.csv")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("audit", parents=[common], help="audit a classifier")
    a.add_argument("--model", required=True)
    a.add_argument("--data")
    a.add_argument("--metric")
    a.add_argument("--epsilon", type=float)
    a.add_argument("--out", default="audit.json")
    a.add_argument("--csv", help="per-sample perturbation CSV")
    a.set_defaults(func=cmd_audit)

    e = sub.add_parser("eval", parents=[common], help="accuracy and fairness metrics")
    e.add_argument("--model", required=True)
    e.add_argument("--data")
    e.add_argument("--attributes", nargs="*")
    e.add_argument("--spouse", action="store_true", help="spouse consistency (Adult)")
    e.add_argument("--gender-race", action="store_true", help="gender and race consistency (Adult)")
    e.add_argument("--out", default="eval.json")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("demo-toy", parents=[common], help="two-group toy demonstration")
    d.add_argument("--epochs", type=int)
    d.set_defaults(func=cmd_demo_toy)

    pa = sub.add_parser("prepare-adult", parents=[common], help="clean and split the Adult files into CSVs")
    pa.add_argument("--train", required=True, help="adult.data")
    pa.add_argument("--test", help="adult.test")
    pa.set_defaults(func=cmd_prepare_adult)
    return p


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads(args.threads):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (trainer.TrainingDiverged, auditor.AttackDiverged, FloatingPointError) as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MetricError as exc:
        if "diverged" in str(exc):
            print(f"diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, data.DataError, models.ModelError, json.JSONDecodeError, KeyError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
