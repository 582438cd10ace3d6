"""Multi-UE downlink evaluation of the feedback schemes.

Per drop: draw independent per-UE path sets, estimate covariances from
phase-redrawn downlink samples (the base station is assumed to know the
downlink statistics; an uplink-substitution variant skips that), select
per-scheme port precoders, measure and feed back the downlink channel,
reconstruct, zero-force across UEs on the reconstructed estimates, and
score the true-channel SINR after interference-aware combining.

Drops are independent work units seeded from a master seed, so results are
identical for any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .arrays import CarrierConfig, UpaConfig, frequency_dft_basis, spatial_dft_basis
from .channel import (
    PathSet,
    generate_cdl_paths,
    redraw_phases,
    rotate_paths,
    synthesize_channel,
    vectorize,
)
from .codebooks import (
    SCHEME_BASELINE,
    MeasurementConfig,
    QuantizerConfig,
    baseline_etype2,
    baseline_reconstruct,
    feedback_bits,
    nmse,
    pcr_precoders,
    pcrd_select,
    pcre_select,
    quantize,
    reconstruct,
    ue_measure,
)
from .covariance import eigenbasis_from_samples, eigendecompose

__all__ = [
    "ScenarioConfig",
    "SweepResult",
    "SWEEP_COLUMNS",
    "SWEEP_SCHEMES",
    "build_scenario",
    "ezf_precoder",
    "mmse_irc_sinr",
    "spectral_efficiency",
    "run_sweep",
]

SWEEP_SCHEMES = ("perfect", "pcr", "pcr_e", "pcr_d", "baseline", "pcr_e_ul")

SWEEP_COLUMNS = (
    "snr_db",
    "scheme",
    "n_ports",
    "feedback_bits",
    "mean_nmse",
    "mean_se_bps_hz",
    "drops",
)


@dataclass
class ScenarioConfig:
    """Multi-UE drop generation and evaluation parameters."""

    n_ues: int = 8
    channel_model: str = "CDL-A"
    delay_spread: float = 300e-9
    ue_antennas: int = 2
    streams_per_ue: int = 1
    snr_db: tuple = (0.0, 10.0, 20.0)
    n_drops: int = 200
    master_seed: int = 0
    n_cov_samples: int = 128
    n_sel_samples: int = 10
    total_power: float = 1.0
    ue_speed: float = 0.0
    field_pattern: str = "isotropic"

    def __post_init__(self):
        if self.n_ues < 1:
            raise ValueError("need at least one UE")
        if self.streams_per_ue not in (1, 2):
            raise ValueError("streams_per_ue must be 1 or 2")
        if self.streams_per_ue > self.ue_antennas:
            raise ValueError("cannot send more streams than UE antennas")
        if self.n_drops < 1 or self.n_cov_samples < 1 or self.n_sel_samples < 1:
            raise ValueError("sample and drop counts must be >= 1")

    def validate_against(self, upa: UpaConfig):
        if self.n_ues * self.streams_per_ue > upa.n_antennas:
            raise ValueError("total stream count exceeds the BS antenna count")


@dataclass
class SweepResult:
    """Aggregated sweep rows, one per (snr, scheme, port count)."""

    rows: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        _fmt(row["snr_db"]),
                        row["scheme"],
                        row["n_ports"],
                        row["feedback_bits"],
                        _fmt(row["mean_nmse"]),
                        _fmt(row["mean_se_bps_hz"]),
                        row["drops"],
                    ]
                )

    def filtered(self, **criteria):
        out = self.rows
        for key, val in criteria.items():
            out = [r for r in out if r[key] == val]
        return out


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def build_scenario(cfg: ScenarioConfig, rng) -> list:
    """Independent per-UE path sets (each carrying both link ends).

    Every UE gets a fresh table expansion (own ratios and phases) plus a
    random reorientation of the departure and arrival angles, so no two
    UEs share path geometry.
    """
    rng = np.random.default_rng(rng)
    sets = []
    for _ in range(cfg.n_ues):
        base = generate_cdl_paths(
            cfg.channel_model, cfg.delay_spread, rng, ue_speed=cfg.ue_speed,
            field_pattern=cfg.field_pattern,
        )
        sets.append(rotate_paths(base, rng))
    return sets


def ezf_precoder(channel_estimates, streams: int, total_power: float):
    """Eigen zero-forcing across all UEs' streams, per subband.

    For each UE the per-subband estimate is reduced to its dominant left
    singular directions (one per stream); the resulting effective rows are
    jointly pseudo-inverted so every stream nulls every other, then columns
    are scaled to equal per-stream power within the total budget.
    """
    if not channel_estimates:
        raise ValueError("need estimates for at least one UE")
    n_sub = channel_estimates[0].shape[0]
    n_t = channel_estimates[0].shape[2]
    n_streams = streams * len(channel_estimates)
    if n_streams > n_t:
        raise ValueError("total stream count exceeds the antenna count")
    w = np.empty((n_sub, n_t, n_streams), dtype=complex)
    per_stream = total_power / n_streams
    for k in range(n_sub):
        rows = []
        for est in channel_estimates:
            m = est[k]
            if streams == 1 and m.shape[0] == 1:
                rows.append(m[0])
            else:
                u, _, _ = np.linalg.svd(m, full_matrices=False)
                eff = u[:, :streams].conj().T @ m
                rows.extend(eff)
        stack = np.asarray(rows)
        gram = stack @ stack.conj().T
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > 1e8:
            # Near-colinear streams: ridge keeps the inverse stable.
            ridge = 1e-8 * np.trace(gram).real / n_streams
            wk = stack.conj().T @ np.linalg.inv(
                gram + ridge * np.eye(n_streams)
            )
        else:
            wk = np.linalg.pinv(stack)
        norms = np.linalg.norm(wk, axis=0)
        norms[norms == 0] = 1.0
        w[k] = wk * (math.sqrt(per_stream) / norms)
    return w


def mmse_irc_sinr(true_channels, precoders, noise_power: float,
                  streams_per_ue: int = 1):
    """Post-combining SINR per (UE, stream, subband).

    The combiner whitens the interference-plus-noise covariance seen at the
    UE antennas before matched filtering; its SINR has the closed form
    h^H R^{-1} h with h the effective desired vector.
    """
    if noise_power <= 0:
        raise ValueError("noise power must be > 0")
    n_ues = len(true_channels)
    n_sub = precoders.shape[0]
    sinr = np.empty((n_ues, streams_per_ue, n_sub))
    for u, chan in enumerate(true_channels):
        n_rx = chan.shape[1]
        own = slice(u * streams_per_ue, (u + 1) * streams_per_ue)
        for k in range(n_sub):
            eff = chan[k] @ precoders[k]  # (n_rx, total_streams)
            total = eff @ eff.conj().T
            for s_local in range(streams_per_ue):
                s = own.start + s_local
                h_d = eff[:, s]
                r_int = total - np.outer(h_d, h_d.conj()) + noise_power * np.eye(n_rx)
                sinr[u, s_local, k] = max(
                    float(np.real(h_d.conj() @ np.linalg.solve(r_int, h_d))), 0.0
                )
    return sinr


def spectral_efficiency(sinrs) -> float:
    """Sum rate over UEs and streams, averaged over subbands."""
    s = np.asarray(sinrs, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINRs must be >= 0")
    if s.ndim == 0:
        s = s.reshape(1, 1, 1)
    per_stream = np.log2(1.0 + s).mean(axis=-1)
    return float(per_stream.sum())


def _scheme_estimates(scheme, n_ports, ctx, quantizer, measurement, rng):
    """Per-UE channel estimates and NMSE for one scheme at one port count."""
    upa, grid = ctx["upa"], ctx["grid"]
    estimates, nmses, bits = [], [], 0
    for u in range(len(ctx["true"])):
        true_mats = ctx["true"][u]  # (n_rx, n_ant, n_sub)
        if scheme == "perfect":
            est_mats = [m.copy() for m in true_mats]
            nmses.append(0.0)
            estimates.append(_stack_subband(est_mats))
            continue
        if scheme == "pcr":
            ports = pcr_precoders(
                ctx["joint_eigs"][u].top(n_ports), n_ports,
                upa.n_antennas, grid.n_subbands,
            )
        elif scheme == "pcr_e":
            ports = pcre_select(
                ctx["spatial_eigs"][u], ctx["freq_eigs"][u],
                ctx["ul_samples"][u], n_ports,
            )
        elif scheme == "pcr_e_ul":
            ports = pcre_select(
                ctx["ul_spatial_eigs"][u], ctx["ul_freq_eigs"][u],
                ctx["ul_samples"][u], n_ports,
            )
        elif scheme == "pcr_d":
            ports = pcrd_select(
                ctx["s_dft"], ctx["f_dft"], ctx["ul_samples"][u], n_ports
            )
        elif scheme == "baseline":
            ports = None
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        est_mats = []
        for ant, h_true in enumerate(true_mats):
            if scheme == "baseline":
                report = baseline_etype2(
                    h_true, ctx["s_dft"], ctx["f_dft"], n_ports, quantizer
                )
                est = baseline_reconstruct(report, ctx["s_dft"], ctx["f_dft"])
            else:
                g = ue_measure(h_true, ports, measurement, rng)
                report = quantize(
                    g, quantizer, scheme=ports.scheme,
                    dims=(upa.n_antennas, grid.n_subbands),
                )
                est = reconstruct(report, ports)
            bits += feedback_bits(report)
            est_mats.append(est)
        nmses.append(
            nmse(np.concatenate(true_mats, axis=0), np.concatenate(est_mats, axis=0))
        )
        estimates.append(_stack_subband(est_mats))
    return estimates, float(np.mean(nmses)), bits // len(ctx["true"])


def _stack_subband(mats):
    """Per-antenna (n_ant, n_sub) matrices -> per-subband (n_sub, n_rx, n_ant)."""
    return np.stack([m.T for m in mats], axis=1)


def _run_drop(seed, cfg: ScenarioConfig, upa: UpaConfig, grid: CarrierConfig,
              schemes, n_ports_list, quantizer: QuantizerConfig,
              measurement: MeasurementConfig):
    rng = np.random.default_rng(seed)
    pathsets = build_scenario(cfg, rng)
    max_ports = max(n_ports_list)

    ctx = {
        "upa": upa,
        "grid": grid,
        "s_dft": spatial_dft_basis(upa),
        "f_dft": frequency_dft_basis(grid),
        "true": [],
        "ul_samples": [],
        "joint_eigs": [],
        "spatial_eigs": [],
        "freq_eigs": [],
        "ul_spatial_eigs": [],
        "ul_freq_eigs": [],
    }
    needs_ul_cov = "pcr_e_ul" in schemes

    for ps in pathsets:
        dl_mats, dl_vecs = _covariance_samples(
            ps, "DL", cfg.n_cov_samples, cfg.ue_antennas, upa, grid, rng
        )
        ctx["joint_eigs"].append(
            eigenbasis_from_samples(dl_vecs, k=min(max_ports, dl_vecs.shape[1]))
        )
        r_s, r_f = _factor_covariances(dl_mats)
        ctx["spatial_eigs"].append(eigendecompose(r_s))
        ctx["freq_eigs"].append(eigendecompose(r_f))
        ul_sel, _ = _covariance_samples(
            ps, "UL", cfg.n_sel_samples, cfg.ue_antennas, upa, grid, rng
        )
        ctx["ul_samples"].append(ul_sel)
        if needs_ul_cov:
            ul_mats, _ = _covariance_samples(
                ps, "UL", cfg.n_cov_samples, cfg.ue_antennas, upa, grid, rng
            )
            r_s, r_f = _factor_covariances(ul_mats)
            ctx["ul_spatial_eigs"].append(eigendecompose(r_s))
            ctx["ul_freq_eigs"].append(eigendecompose(r_f))
        test = redraw_phases(ps, "DL", rng)
        ctx["true"].append(
            [
                synthesize_channel(test, "DL", 0.0, upa, grid, a).matrix
                for a in range(cfg.ue_antennas)
            ]
        )

    mean_gain = float(
        np.mean([np.mean(np.abs(m) ** 2) for mats in ctx["true"] for m in mats])
    )
    true_stacked = [_stack_subband(mats) for mats in ctx["true"]]

    out = {}
    for scheme in schemes:
        for n_ports in n_ports_list:
            estimates, mean_nmse, bits = _scheme_estimates(
                scheme, n_ports, ctx, quantizer, measurement, rng
            )
            w = ezf_precoder(estimates, cfg.streams_per_ue, cfg.total_power)
            se_per_snr = []
            for snr_db in cfg.snr_db:
                sigma2 = cfg.total_power * mean_gain / (10.0 ** (snr_db / 10.0))
                sinr = mmse_irc_sinr(true_stacked, w, sigma2, cfg.streams_per_ue)
                se_per_snr.append(spectral_efficiency(sinr))
            out[(scheme, n_ports)] = (mean_nmse, bits, se_per_snr)
    return out


def _covariance_samples(ps: PathSet, link_end, n_redraws, n_ants, upa, grid, rng):
    mats, vecs = [], []
    for _ in range(n_redraws):
        redrawn = redraw_phases(ps, link_end, rng)
        for a in range(n_ants):
            h = synthesize_channel(redrawn, link_end, 0.0, upa, grid, a).matrix
            mats.append(h)
            vecs.append(vectorize(h))
    return mats, np.asarray(vecs).T


def _factor_covariances(mats):
    n_ant, n_sub = mats[0].shape
    r_s = np.zeros((n_ant, n_ant), dtype=complex)
    r_f = np.zeros((n_sub, n_sub), dtype=complex)
    for m in mats:
        r_s += m @ m.conj().T
        r_f += m.T @ m.conj()
    r_s /= len(mats)
    r_f /= len(mats)
    return 0.5 * (r_s + r_s.conj().T), 0.5 * (r_f + r_f.conj().T)


def run_sweep(cfg: ScenarioConfig, upa: UpaConfig, grid: CarrierConfig,
              schemes=("perfect", "pcr", "pcr_e", "baseline", "pcr_d"),
              n_ports_list=(16,), quantizer: QuantizerConfig = None,
              measurement: MeasurementConfig = None,
              workers: int = 1) -> SweepResult:
    """Full evaluation pipeline over drops, schemes, and port counts.

    Per-drop seeds are spawned from the master seed and results are reduced
    in drop order, so the outcome does not depend on the worker count.
    """
    for s in schemes:
        if s not in SWEEP_SCHEMES:
            raise ValueError(f"unknown scheme {s!r} (have {SWEEP_SCHEMES})")
    cfg.validate_against(upa)
    quantizer = quantizer or QuantizerConfig(mode="exact")
    measurement = measurement or MeasurementConfig(noiseless=True)
    max_ports = max(n_ports_list)
    if max_ports > upa.n_antennas * grid.n_subbands:
        raise ValueError("port count exceeds the joint dimension")
    if max_ports > cfg.n_cov_samples * cfg.ue_antennas:
        raise ValueError(
            "covariance sample count too small for the requested port count"
        )

    seeds = np.random.SeedSequence(cfg.master_seed).spawn(cfg.n_drops)
    args = [
        (seed, cfg, upa, grid, tuple(schemes), tuple(n_ports_list),
         quantizer, measurement)
        for seed in seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            drop_results = list(pool.map(_run_drop_star, args))
    else:
        drop_results = [_run_drop_star(a) for a in args]

    result = SweepResult()
    for scheme in schemes:
        for n_ports in n_ports_list:
            nmses = [dr[(scheme, n_ports)][0] for dr in drop_results]
            bits = drop_results[0][(scheme, n_ports)][1]
            ses = np.asarray(
                [dr[(scheme, n_ports)][2] for dr in drop_results]
            )  # (drops, n_snr)
            for i, snr_db in enumerate(cfg.snr_db):
                result.rows.append(
                    {
                        "snr_db": float(snr_db),
                        "scheme": scheme,
                        "n_ports": int(n_ports),
                        "feedback_bits": int(bits),
                        "mean_nmse": float(np.mean(nmses)),
                        "mean_se_bps_hz": float(ses[:, i].mean()),
                        "drops": cfg.n_drops,
                        "nmse_per_drop": [float(x) for x in nmses],
                        "se_per_drop": [float(x) for x in ses[:, i]],
                    }
                )
    return result


def _run_drop_star(args):
    return _run_drop(*args)
