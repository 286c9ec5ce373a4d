"""Crossed-slab fraction and mean crossings per slab against slab width.

    python3 scripts/highway_crossings.py --kappa 1 2 3 --n 2500 10000 --seeds 20
"""

import argparse

from capnet.acceptance import highway_stats


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--kappa", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    p.add_argument("--n", type=int, nargs="+", default=[2500, 5000, 10000])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--cell-side", type=float, default=1.5)
    args = p.parse_args()
    print("kappa,n,crossed_fraction,mean_crossings")
    for kappa in args.kappa:
        for n in args.n:
            frac, mean = highway_stats(n, range(args.seeds), kappa, args.cell_side)
            print(f"{kappa},{n},{frac:.4f},{mean:.3f}")


if __name__ == "__main__":
    main()
