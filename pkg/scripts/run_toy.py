"""Two-group toy demo: trains baseline and SenSR, audits both, writes heatmaps.

    python3 scripts/run_toy.py --out runs/toy [--seed 0] [--epochs 2000]

Same as ``sensr demo-toy``; prints the summary checks.
"""
import argparse
import json

from threadpoolctl import threadpool_limits

from sensr import demo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None)
    args = ap.parse_args()
    cfg = demo.ToyDemoConfig().with_seed(args.seed)
    if args.epochs is not None:
        cfg = cfg.with_epochs(args.epochs)
    with threadpool_limits(1):
        summary = demo.run(args.out, cfg)
    print(json.dumps(summary["checks"], indent=2))


if __name__ == "__main__":
    main()
