"""Run Setups 1-3 with the default configuration and print the normalized rates.

    python3 scripts/run_all_setups.py --out runs/all [--n-train 1000 --n-test 1000]

Each setup writes its result files to ``<out>/setup<N>/results``.
"""

import argparse
import logging
from pathlib import Path

from risphase.cli import main as cli_main
from risphase.harness import APPROACHES, read_summary


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", type=Path, default=Path("runs/all"))
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    extra = []
    for flag in ("n_train", "n_test", "seed", "config"):
        value = getattr(args, flag)
        if value is not None:
            extra += [f"--{flag.replace('_', '-')}", str(value)]
    for s in (1, 2, 3):
        cli_main(["run-setup", "--setup", str(s), "--out", str(args.out / f"setup{s}"), *extra])

    rows = {s: read_summary(args.out / f"setup{s}" / "results") for s in (1, 2, 3)}
    print(f"\n{'normalized rate':<16}" + "".join(f"{'setup ' + str(s):>10}" for s in rows))
    for a in APPROACHES:
        print(f"{a:<16}" + "".join(f"{rows[s][a]['normalized_rate']:>10.4f}" for s in rows))


if __name__ == "__main__":
    main()
