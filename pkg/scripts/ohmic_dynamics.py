"""Run a finite-temperature Ohmic ensemble and write the population table.

Example:
    python3 scripts/ohmic_dynamics.py --alpha 0.05 --kt 0.2 --m 2 --outdir out/ohmic
"""

import argparse

from spinboson.cli import parse_config_dict, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--s", type=float, default=1.0, help="spectral exponent")
    ap.add_argument("--alpha", type=float, default=0.05, help="coupling strength")
    ap.add_argument("--kt", type=float, default=0.2, help="temperature k_B T (0 for T=0)")
    ap.add_argument("--epsilon", type=float, default=0.0)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--n-b", type=int, default=100, help="number of bath modes")
    ap.add_argument("--n-s", type=int, default=100, help="Monte Carlo samples")
    ap.add_argument("--m", type=int, default=2, help="ansatz multiplicity")
    ap.add_argument("--variant", choices=["D1", "D2"], default="D1")
    ap.add_argument("--t-final", type=float, default=50.0)
    ap.add_argument("--dt", type=float, default=0.0625, help="etdrk4 step")
    ap.add_argument("--seed", type=int, default=12345)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--outdir", default="out/ohmic")
    args = ap.parse_args()

    cfg = parse_config_dict(
        {
            "system": {"epsilon": args.epsilon, "delta": args.delta},
            "bath": {"s": args.s, "alpha": args.alpha, "n_b": args.n_b},
            "temperature": args.kt,
            "ansatz": {"variant": args.variant, "m": args.m},
            "sampling": {"n_s": args.n_s, "master_seed": args.seed},
            "integrator": {"scheme": "etdrk4", "dt": args.dt, "t_final": args.t_final},
        }
    )
    result, table_path = run(cfg, args.outdir, n_workers=args.workers)
    print(f"wrote {table_path}")
    print(f"trajectories: {result.n_effective}/{cfg.n_s}")
    print(f"max norm drift:   {result.norm_drift_max.max():.3e}")
    print(f"max energy drift: {result.energy_drift_max.max():.3e}")


if __name__ == "__main__":
    main()
