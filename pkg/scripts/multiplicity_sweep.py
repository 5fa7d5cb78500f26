"""Convergence of the ensemble mean with the number of trial-state branches.

Runs the same thermal ensemble (shared master seed, so the trajectory draws
are paired) at increasing multiplicity and reports the successive deviations.

Example:
    python3 scripts/multiplicity_sweep.py --values 1,2,3 --kt 0.2
"""

import argparse
import json

from spinboson.cli import parse_config_dict, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--values", default="1,2,3", help="comma-separated multiplicities")
    ap.add_argument("--s", type=float, default=1.0)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--kt", type=float, default=0.2)
    ap.add_argument("--n-b", type=int, default=50)
    ap.add_argument("--n-s", type=int, default=50)
    ap.add_argument("--variant", choices=["D1", "D2"], default="D2")
    ap.add_argument("--t-final", type=float, default=20.0)
    ap.add_argument("--dt", type=float, default=0.0625)
    ap.add_argument("--seed", type=int, default=12345)
    ap.add_argument("--threshold", type=float, default=1e-3)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = parse_config_dict(
        {
            "bath": {"s": args.s, "alpha": args.alpha, "n_b": args.n_b},
            "temperature": args.kt,
            "ansatz": {"variant": args.variant, "m": 1},
            "sampling": {"n_s": args.n_s, "master_seed": args.seed},
            "integrator": {"scheme": "etdrk4", "dt": args.dt, "t_final": args.t_final},
        }
    )
    values = [int(v) for v in args.values.split(",")]
    report, _ = sweep(cfg, "m", values, n_workers=args.workers, threshold=args.threshold)
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
