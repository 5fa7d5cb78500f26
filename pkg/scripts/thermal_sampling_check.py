"""Sanity check of the thermal coherent-state sampler: the sampled mean
occupation per mode must reproduce the Bose-Einstein distribution.

Example:
    python3 scripts/thermal_sampling_check.py --kt 0.2 --draws 100000
"""

import argparse
import math

import numpy as np

from spinboson.model import SpectralDensityParams, discretize_bath
from spinboson.sampler import sample_alpha, thermal_sample_config, trajectory_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kt", type=float, default=0.2)
    ap.add_argument("--s", type=float, default=1.0)
    ap.add_argument("--n-b", type=int, default=10)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    beta = math.inf if args.kt == 0 else 1.0 / args.kt
    bath = discretize_bath(SpectralDensityParams(s=args.s, alpha=0.05, n_b=args.n_b))
    cfg = thermal_sample_config(beta=beta, bath=bath, n_s=1, master_seed=args.seed)
    rng = trajectory_rng(args.seed, 0)
    occ = np.zeros(args.n_b)
    occ2 = np.zeros(args.n_b)
    for _ in range(args.draws):
        mag2 = np.abs(sample_alpha(rng, cfg)) ** 2
        occ += mag2
        occ2 += mag2**2
    mean = occ / args.draws
    stderr = np.sqrt(np.maximum(occ2 / args.draws - mean**2, 0.0) / args.draws)
    target = np.where(
        np.isinf(beta), 0.0, 1.0 / np.expm1(np.minimum(beta * bath.omegas, 700.0))
    )

    print(f"{'omega':>10} {'sampled':>12} {'stderr':>10} {'bose':>12} {'pull':>7}")
    for w, m, se, t in zip(bath.omegas, mean, stderr, target):
        pull = (m - t) / se if se > 0 else 0.0
        print(f"{w:10.4f} {m:12.6e} {se:10.2e} {t:12.6e} {pull:7.2f}")


if __name__ == "__main__":
    main()
