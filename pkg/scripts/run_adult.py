"""Adult experiment over several seeds; writes adult_results.json and prints a table.

    python3 scripts/run_adult.py --seeds 0 1 2 --out runs/adult
"""
import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from sensr import adult

KEYS = ("balanced_accuracy", "s_con", "gr_con")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default=str(Path(__file__).resolve().parents[1] / "data" / "adult"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--sensr-epochs", type=int, default=4000)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", default="runs/adult")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = replace(adult.AdultExperiment(data_dir=args.data_dir), sensr_epochs=args.sensr_epochs)
    with threadpool_limits(args.threads):
        rows = adult.run(cfg, seeds=args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "adult_results.json").write_text(json.dumps(rows, indent=2))

    print(f"{'mode':10s}" + "".join(f"{k:>20s}" for k in KEYS))
    for mode, per_seed in rows.items():
        cells = []
        for k in KEYS:
            v = np.array([r[k] for r in per_seed.values()])
            cells.append(f"{v.mean():.3f} +- {v.std():.3f}".rjust(20))
        print(f"{mode:10s}" + "".join(cells))


if __name__ == "__main__":
    main()
