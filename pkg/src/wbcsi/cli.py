"""Command-line front end: experiment families and result emission.

Three subcommands share a config file and an output directory:

* ``rank-check``     - closed-form rank ratios vs. the eigen-spectrum of
                       the analytic covariance, per dimension step.
* ``codebook-eval``  - feedback-scheme NMSE/SE evaluation on channel drops.
* ``sweep``          - same pipeline, intended for SNR sweeps; kept as a
                       separate command so result directories stay tidy.

Every run writes ``results.csv`` plus ``manifest.json`` (the fully resolved
config, seed, and code version); rerunning from the manifest reproduces the
CSV byte for byte.  On failure partial outputs are removed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from . import __version__
from .arrays import UpaConfig
from .config import ExperimentConfig, parse_config
from .covariance import (
    analytic_frequency_covariance,
    analytic_spatial_covariance,
    effective_rank,
    eigendecompose,
)
from .linklevel import SWEEP_COLUMNS, run_sweep
from .rank_laws import rho_frequency, rho_spatial

RANK_CHECK_COLUMNS = (
    "domain",
    "size",
    "dimension",
    "closed_form_rho",
    "effective_rank",
    "empirical_ratio",
    "rel_gap",
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except Exception as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
        cfg.seed = args.seed
        cfg.scenario.master_seed = args.seed
    if getattr(args, "drops", None) is not None:
        cfg.raw["scenario"]["drops"] = args.drops
        cfg.scenario.n_drops = args.drops

    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    manifest_path = os.path.join(out_dir, "manifest.json")
    try:
        if args.command == "rank-check":
            columns = RANK_CHECK_COLUMNS
            _write_manifest(manifest_path, args.command, cfg, columns)
            _cmd_rank_check(cfg, csv_path)
        else:
            columns = SWEEP_COLUMNS
            _write_manifest(manifest_path, args.command, cfg, columns)
            _cmd_sweep(cfg, csv_path, workers=args.workers)
    except Exception as exc:
        for path in (csv_path, manifest_path):
            if os.path.exists(path):
                os.remove(path)
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {csv_path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wbcsi",
        description="Wideband CSI feedback experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "rank-check": "validate covariance rank laws against eigen-spectra",
        "codebook-eval": "evaluate feedback-scheme NMSE and spectral efficiency",
        "sweep": "run the multi-UE SNR sweep",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="TOML config path")
        p.add_argument("--out-dir", default="results", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        if name != "rank-check":
            p.add_argument("--drops", type=int, default=None,
                           help="drop count override")
            p.add_argument("--workers", type=int, default=1,
                           help="parallel drop workers")
        else:
            p.set_defaults(workers=1)
    return parser


def _write_manifest(path: str, command: str, cfg: ExperimentConfig, columns):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "csv_columns": list(columns),
        "config": cfg.raw,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def _cmd_rank_check(cfg: ExperimentConfig, csv_path: str):
    """Convergence table: closed-form rho vs. effective-rank ratio."""
    if cfg.support is None:
        raise ValueError("rank-check needs a support section")
    lam = cfg.grid.wavelength("DL")
    sh, sv = cfg.rank_spacings_wl
    rows = []
    for size in cfg.rank_sizes:
        upa = UpaConfig(n_rows=size, n_cols=size, n_pol=1,
                        spacing_h=sh * lam, spacing_v=sv * lam)
        rho = rho_spatial(cfg.support, upa, lam, order=cfg.quadrature_order)
        cov = analytic_spatial_covariance(
            cfg.support, upa, lam, quadrature_order=cfg.quadrature_order
        )
        rank = effective_rank(eigendecompose(cov), cfg.energy_fraction)
        dim = upa.n_elements
        ratio = rank / dim
        gap = abs(ratio - rho) / rho if rho > 0 else math.inf
        rows.append(["spatial", size, dim, rho, rank, ratio, gap])
    if cfg.delay_intervals:
        dfe = cfg.grid.subband_spacing_hz
        rho = rho_frequency(cfg.delay_intervals, dfe)
        for size in cfg.rank_sizes:
            n_f = size * size  # match the spatial dimension growth
            cov = analytic_frequency_covariance(cfg.delay_intervals, n_f, dfe)
            rank = effective_rank(eigendecompose(cov), cfg.energy_fraction)
            ratio = rank / n_f
            gap = abs(ratio - rho) / rho if rho > 0 else math.inf
            rows.append(["frequency", size, n_f, rho, rank, ratio, gap])
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RANK_CHECK_COLUMNS)
        for domain, size, dim, rho, rank, ratio, gap in rows:
            writer.writerow(
                [domain, size, dim, _fmt(rho), rank, _fmt(ratio), _fmt(gap)]
            )


def _cmd_sweep(cfg: ExperimentConfig, csv_path: str, workers: int = 1):
    result = run_sweep(
        cfg.scenario,
        cfg.upa,
        cfg.grid,
        schemes=tuple(cfg.schemes),
        n_ports_list=tuple(cfg.n_ports_list),
        quantizer=cfg.quantizer,
        measurement=cfg.measurement,
        workers=max(1, workers),
    )
    result.to_csv(csv_path)


if __name__ == "__main__":
    sys.exit(main())
