"""Batch front end: config parsing, ensemble runs, convergence sweeps.

Configs are YAML documents with the sections system, bath, temperature,
ansatz, sampling, integrator, output. Unknown keys are rejected. A run writes
a delimited results table plus a JSON manifest (normalized config + seeds +
versions) that can be fed back in for a bit-exact replay.
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .ansatz import AnsatzVariant
from .eom import IntegratorConfig
from .model import SpectralDensityParams, SystemParams, discretize_bath
from .oracle import analytic_two_level
from .sampler import ExcessiveAbortError, run_ensemble, thermal_sample_config

_DEFAULTS = {
    "system": {"epsilon": 0.0, "delta": 0.1},
    "bath": {"s": 1.0, "alpha": 0.05, "omega_max": 10.0, "n_b": 250},
    "temperature": 0.2,
    "ansatz": {"variant": "D1", "m": 2},
    "sampling": {"n_s": 400, "noise_amp": 1e-2, "master_seed": 12345},
    "integrator": {
        "scheme": "adaptive",
        "dt": 0.05,
        "t_final": 50.0,
        "tol_rel": 1e-8,
        "tol_abs": 1e-10,
        "reg_eps": 1e-10,
    },
    "output": {"grid_dt": 0.5, "format": "tsv"},
}

RESULT_COLUMNS = ("t", "pz_mean", "pz_stderr", "norm_drift_max", "energy_drift_max", "n_effective")


class ConfigError(ValueError):
    """Config document failed validation; message names the offending field."""


@dataclass(frozen=True, eq=False)
class RunConfig:
    system: SystemParams
    bath: SpectralDensityParams
    temperature: float
    variant: AnsatzVariant
    m: int
    n_s: int
    noise_amp: float
    master_seed: int
    integrator: IntegratorConfig
    grid_dt: float
    output_format: str

    @property
    def beta(self) -> float:
        return math.inf if self.temperature == 0.0 else 1.0 / self.temperature

    @property
    def t_grid(self) -> np.ndarray:
        n = int(round(self.integrator.t_final / self.grid_dt))
        return np.linspace(0.0, n * self.grid_dt, n + 1)


def _merge_section(name: str, raw: dict) -> dict:
    defaults = _DEFAULTS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(raw) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    return {**defaults, **raw}


def parse_config_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    if "config" in doc:  # manifest replay: use its normalized config verbatim
        doc = doc["config"]
    unknown = set(doc) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    system = _merge_section("system", doc.get("system"))
    bath = _merge_section("bath", doc.get("bath"))
    ansatz = _merge_section("ansatz", doc.get("ansatz"))
    sampling = _merge_section("sampling", doc.get("sampling"))
    integrator = _merge_section("integrator", doc.get("integrator"))
    output = _merge_section("output", doc.get("output"))
    temperature = doc.get("temperature", _DEFAULTS["temperature"])

    if not isinstance(temperature, (int, float)) or temperature < 0:
        raise ConfigError(f"temperature must be a number >= 0, got {temperature!r}")
    try:
        sys_params = SystemParams(epsilon=float(system["epsilon"]), delta=float(system["delta"]))
    except ValueError as exc:
        raise ConfigError(f"system: {exc}") from exc
    try:
        if not isinstance(bath["n_b"], int):
            raise ValueError(f"n_b must be an integer, got {bath['n_b']!r}")
        bath_params = SpectralDensityParams(
            s=float(bath["s"]),
            alpha=float(bath["alpha"]),
            omega_max=float(bath["omega_max"]),
            n_b=bath["n_b"],
        )
    except ValueError as exc:
        raise ConfigError(f"bath: {exc}") from exc
    try:
        variant = AnsatzVariant(ansatz["variant"])
    except ValueError as exc:
        raise ConfigError(f"ansatz.variant must be D1 or D2, got {ansatz['variant']!r}") from exc
    if not isinstance(ansatz["m"], int) or ansatz["m"] < 1:
        raise ConfigError(f"ansatz.m must be a positive integer, got {ansatz['m']!r}")
    if not isinstance(sampling["n_s"], int) or sampling["n_s"] < 1:
        raise ConfigError(f"sampling.n_s must be a positive integer, got {sampling['n_s']!r}")
    if sampling["noise_amp"] < 0:
        raise ConfigError(f"sampling.noise_amp must be >= 0, got {sampling['noise_amp']!r}")
    if not isinstance(sampling["master_seed"], int):
        raise ConfigError(f"sampling.master_seed must be an integer, got {sampling['master_seed']!r}")
    try:
        integ = IntegratorConfig(
            dt=float(integrator["dt"]),
            t_final=float(integrator["t_final"]),
            scheme=integrator["scheme"],
            tol_rel=float(integrator["tol_rel"]),
            tol_abs=float(integrator["tol_abs"]),
            reg_eps=float(integrator["reg_eps"]),
        )
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from exc
    if not (isinstance(output["grid_dt"], (int, float)) and output["grid_dt"] > 0):
        raise ConfigError(f"output.grid_dt must be positive, got {output['grid_dt']!r}")
    if output["format"] not in ("tsv", "csv"):
        raise ConfigError(f"output.format must be tsv or csv, got {output['format']!r}")
    if output["grid_dt"] > integ.t_final and integ.t_final > 0:
        raise ConfigError("output.grid_dt must not exceed integrator.t_final")
    return RunConfig(
        system=sys_params,
        bath=bath_params,
        temperature=float(temperature),
        variant=variant,
        m=ansatz["m"],
        n_s=sampling["n_s"],
        noise_amp=float(sampling["noise_amp"]),
        master_seed=sampling["master_seed"],
        integrator=integ,
        grid_dt=float(output["grid_dt"]),
        output_format=output["format"],
    )


def parse_config(text: str) -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_config_dict(doc if doc is not None else {})


def normalize_config(cfg: RunConfig) -> dict:
    """Canonical fully-populated config dict; parse(normalize(c)) == c."""
    return {
        "system": {"epsilon": cfg.system.epsilon, "delta": cfg.system.delta},
        "bath": {
            "s": cfg.bath.s,
            "alpha": cfg.bath.alpha,
            "omega_max": cfg.bath.omega_max,
            "n_b": cfg.bath.n_b,
        },
        "temperature": cfg.temperature,
        "ansatz": {"variant": cfg.variant.value, "m": cfg.m},
        "sampling": {
            "n_s": cfg.n_s,
            "noise_amp": cfg.noise_amp,
            "master_seed": cfg.master_seed,
        },
        "integrator": {
            "scheme": cfg.integrator.scheme,
            "dt": cfg.integrator.dt,
            "t_final": cfg.integrator.t_final,
            "tol_rel": cfg.integrator.tol_rel,
            "tol_abs": cfg.integrator.tol_abs,
            "reg_eps": cfg.integrator.reg_eps,
        },
        "output": {"grid_dt": cfg.grid_dt, "format": cfg.output_format},
    }


def execute(cfg: RunConfig, n_workers: int = 1):
    """Run the configured ensemble and return its EnsembleResult."""
    bath = discretize_bath(cfg.bath)
    sampler_cfg = thermal_sample_config(
        beta=cfg.beta,
        bath=bath,
        n_s=cfg.n_s,
        noise_amp=cfg.noise_amp,
        master_seed=cfg.master_seed,
    )
    return run_ensemble(
        cfg.system,
        bath,
        sampler_cfg,
        cfg.variant,
        cfg.m,
        cfg.integrator,
        cfg.t_grid,
        n_workers=n_workers,
    )


def _format_table(result, cfg: RunConfig, oracle_compare: bool) -> str:
    sep = "\t" if cfg.output_format == "tsv" else ","
    columns = list(RESULT_COLUMNS)
    if oracle_compare:
        columns.append("pz_analytic")
    lines = [sep.join(columns)]
    analytic = analytic_two_level(cfg.system, result.times) if oracle_compare else None
    for k in range(result.times.size):
        row = [
            f"{result.times[k]:.17g}",
            f"{result.pz_mean[k]:.17g}",
            f"{result.pz_stderr[k]:.17g}",
            f"{result.norm_drift_max[k]:.17g}",
            f"{result.energy_drift_max[k]:.17g}",
            str(result.n_effective),
        ]
        if oracle_compare:
            row.append(f"{analytic[k]:.17g}")
        lines.append(sep.join(row))
    return "\n".join(lines) + "\n"


def write_manifest(cfg: RunConfig, path: Path):
    manifest = {
        "format_version": 1,
        "config": normalize_config(cfg),
        "versions": {
            "spinboson": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": _sys.version.split()[0],
        },
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def run(cfg: RunConfig, outdir, n_workers: int = 1, oracle_compare: bool = False):
    """Execute a run and write results table + manifest into outdir."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    result = execute(cfg, n_workers=n_workers)
    ext = "tsv" if cfg.output_format == "tsv" else "csv"
    table_path = outdir / f"results.{ext}"
    table_path.write_text(_format_table(result, cfg, oracle_compare))
    write_manifest(cfg, outdir / "manifest.json")
    return result, table_path


def _with_axis_value(cfg: RunConfig, axis: str, value):
    doc = normalize_config(cfg)
    if axis == "m":
        doc["ansatz"]["m"] = int(value)
    elif axis == "n_s":
        doc["sampling"]["n_s"] = int(value)
    elif axis == "n_b":
        doc["bath"]["n_b"] = int(value)
    elif axis == "dt":
        doc["integrator"]["dt"] = float(value)
    else:
        raise ConfigError(f"sweep axis must be one of m, n_s, n_b, dt; got {axis!r}")
    return parse_config_dict(doc)


def sweep(
    cfg: RunConfig,
    axis: str,
    values,
    n_workers: int = 1,
    threshold: float = 1e-3,
):
    """Run the config across axis values and report the max-over-time P_z
    deviation between successive values."""
    values = list(values)
    if len(values) < 2:
        raise ConfigError("sweep needs at least two axis values")
    results = []
    for v in values:
        sub = _with_axis_value(cfg, axis, v)
        results.append(execute(sub, n_workers=n_workers))
    deviations = []
    for prev, nxt in zip(results, results[1:]):
        deviations.append(float(np.max(np.abs(nxt.pz_mean - prev.pz_mean))))
    report = {
        "axis": axis,
        "values": values,
        "deviations": deviations,
        "threshold": threshold,
        "converged": bool(deviations[-1] < threshold),
    }
    return report, results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spinboson",
        description="Finite-temperature variational spin-boson dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one ensemble run")
    p_run.add_argument("config", help="path to a YAML config or a manifest.json")
    p_run.add_argument("--outdir", default="out", help="output directory")
    p_run.add_argument("--workers", type=int, default=1, help="parallel trajectory workers")
    p_run.add_argument("--seed", type=int, default=None, help="override sampling.master_seed")
    p_run.add_argument(
        "--oracle-compare",
        action="store_true",
        help="append the analytic decoupled-bath P_z column to the table",
    )

    p_sweep = sub.add_parser("sweep", help="convergence sweep over one axis")
    p_sweep.add_argument("config", help="path to a YAML config or a manifest.json")
    p_sweep.add_argument("--axis", required=True, choices=["m", "n_s", "n_b", "dt"])
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--outdir", default="out", help="output directory")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--threshold", type=float, default=1e-3)

    args = parser.parse_args(argv)
    text = Path(args.config).read_text()
    if args.config.endswith(".json"):
        cfg = parse_config_dict(json.loads(text))
    else:
        cfg = parse_config(text)
    if getattr(args, "seed", None) is not None:
        doc = normalize_config(cfg)
        doc["sampling"]["master_seed"] = args.seed
        cfg = parse_config_dict(doc)

    try:
        if args.command == "run":
            result, table_path = run(
                cfg, args.outdir, n_workers=args.workers, oracle_compare=args.oracle_compare
            )
            print(f"wrote {table_path} ({result.n_effective}/{cfg.n_s} trajectories)")
            return 0
        report, _ = sweep(
            cfg,
            args.axis,
            [float(v) if args.axis == "dt" else int(v) for v in args.values.split(",")],
            n_workers=args.workers,
            threshold=args.threshold,
        )
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "sweep.json").write_text(json.dumps(report, indent=2) + "\n")
        print(json.dumps(report, indent=2))
        return 0
    except ExcessiveAbortError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
