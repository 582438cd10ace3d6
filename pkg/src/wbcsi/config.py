"""Experiment configuration: strict parsing, defaults, unit conversion.

Configs are TOML with nested sections; every key is validated against the
schema below and unknown keys are rejected with their full path.  Human
units (degrees, nanoseconds or microseconds, GHz/kHz, spacings in carrier
wavelengths) are converted to SI internally; spacings refer to the
downlink wavelength.

Defaults reproduce the standard urban-macro evaluation setup: 3.5/3.4 GHz
carriers at 30 kHz subcarrier spacing, 51 resource blocks grouped into 13
subbands, an 8-column dual-polarized panel with (0.5, 0.8) wavelength
spacing, 8 UEs on CDL-A with 300 ns delay spread.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .arrays import CarrierConfig, UpaConfig
from .codebooks import MeasurementConfig, QuantizerConfig
from .linklevel import SWEEP_SCHEMES, ScenarioConfig
from .rank_laws import (
    AngularDelaySubSupport,
    AngularDelaySupport,
    AngularSubSupport,
    AngularSupport,
    PiecewiseLinear,
    full_range_support,
)

__all__ = ["ExperimentConfig", "parse_config", "config_from_dict", "DEFAULT_CONFIG"]

COMMANDS = ("rank-check", "codebook-eval", "sweep")

DEFAULT_CONFIG = {
    "seed": 1,
    "carrier": {
        "dl_center_ghz": 3.5,
        "ul_center_ghz": 3.4,
        "subcarrier_spacing_khz": 30.0,
        "n_subbands": 13,
        "subband_width": 48,
    },
    "array": {
        "rows": 2,
        "cols": 8,
        "polarizations": 2,
        "spacing_h_wl": 0.5,
        "spacing_v_wl": 0.8,
        "pol_slant_deg": [45.0, -45.0],
    },
    "scenario": {
        "n_ues": 8,
        "channel_model": "CDL-A",
        "delay_spread_ns": 300.0,
        "ue_antennas": 2,
        "streams_per_ue": 1,
        "snr_db": [0.0, 10.0, 20.0],
        "drops": 200,
        "covariance_samples": 128,
        "selection_samples": 10,
        "total_power": 1.0,
        "ue_speed_mps": 0.0,
        "field_pattern": "isotropic",
    },
    "schemes": {
        "run": ["perfect", "pcr", "pcr_e", "baseline", "pcr_d"],
        "n_ports": [16],
    },
    "quantizer": {
        "mode": "exact",
        "amp_bits": 4,
        "phase_bits": 4,
    },
    "measurement": {
        "pilot_length": 4,
        "pilot_snr_db": 20.0,
        "noiseless": True,
    },
    "rank_check": {
        "sizes": [8, 16, 32],
        "energy_fraction": 0.99,
        "quadrature_order": 64,
        "spacing_h_wl": 0.5,
        "spacing_v_wl": 0.5,
    },
    "support": {
        "full_range": True,
        "subs": [],
        "delay_intervals_us": [],
    },
}


class ConfigError(ValueError):
    """Schema violation with the offending field path."""


@dataclass
class ExperimentConfig:
    """Fully validated experiment setup with SI-unit objects."""

    raw: dict
    seed: int
    upa: UpaConfig
    grid: CarrierConfig
    scenario: ScenarioConfig
    schemes: list
    n_ports_list: list
    quantizer: QuantizerConfig
    measurement: MeasurementConfig
    rank_sizes: list
    energy_fraction: float
    quadrature_order: int
    rank_spacings_wl: tuple
    support: object = None            # AngularSupport or None (full range)
    delay_support: object = None      # AngularDelaySupport or None
    delay_intervals: list = field(default_factory=list)


def parse_config(source=None) -> ExperimentConfig:
    """Parse TOML text or a file path; None means all defaults."""
    if source is None:
        data = {}
    elif hasattr(source, "read"):
        data = tomllib.loads(source.read())
    else:
        text = str(source)
        if "\n" in text or "=" in text:
            data = tomllib.loads(text)
        else:
            with open(text, "rb") as fh:
                data = tomllib.load(fh)
    return config_from_dict(data)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a raw mapping against the schema and apply defaults."""
    merged = _merge_validate(data)
    c = merged["carrier"]
    grid = CarrierConfig(
        dl_center_hz=c["dl_center_ghz"] * 1e9,
        ul_center_hz=c["ul_center_ghz"] * 1e9,
        scs_hz=c["subcarrier_spacing_khz"] * 1e3,
        n_subbands=c["n_subbands"],
        subband_width=c["subband_width"],
    )
    lam = grid.wavelength("DL")
    a = merged["array"]
    if len(a["pol_slant_deg"]) != a["polarizations"]:
        raise ConfigError("array.pol_slant_deg: need one slant per polarization")
    upa = UpaConfig(
        n_rows=a["rows"],
        n_cols=a["cols"],
        n_pol=a["polarizations"],
        spacing_h=a["spacing_h_wl"] * lam,
        spacing_v=a["spacing_v_wl"] * lam,
        pol_slants=tuple(math.radians(x) for x in a["pol_slant_deg"]),
    )
    s = merged["scenario"]
    scenario = ScenarioConfig(
        n_ues=s["n_ues"],
        channel_model=s["channel_model"],
        delay_spread=s["delay_spread_ns"] * 1e-9,
        ue_antennas=s["ue_antennas"],
        streams_per_ue=s["streams_per_ue"],
        snr_db=tuple(s["snr_db"]),
        n_drops=s["drops"],
        master_seed=merged["seed"],
        n_cov_samples=s["covariance_samples"],
        n_sel_samples=s["selection_samples"],
        total_power=s["total_power"],
        ue_speed=s["ue_speed_mps"],
        field_pattern=s["field_pattern"],
    )
    sch = merged["schemes"]
    for name in sch["run"]:
        if name not in SWEEP_SCHEMES:
            raise ConfigError(
                f"schemes.run: unknown scheme {name!r} (have {SWEEP_SCHEMES})"
            )
    if any(n < 0 for n in sch["n_ports"]):
        raise ConfigError("schemes.n_ports: port counts must be >= 0")
    if any(n == 0 for n in sch["n_ports"]):
        raise ConfigError("schemes.n_ports: port counts must be >= 1")
    q = merged["quantizer"]
    quantizer = QuantizerConfig(
        mode=q["mode"], amp_bits=q["amp_bits"], phase_bits=q["phase_bits"]
    )
    m = merged["measurement"]
    measurement = MeasurementConfig(
        n_pilot=m["pilot_length"],
        pilot_snr=10.0 ** (m["pilot_snr_db"] / 10.0),
        noiseless=m["noiseless"],
    )
    rc = merged["rank_check"]
    if not (0.0 < rc["energy_fraction"] < 1.0):
        raise ConfigError("rank_check.energy_fraction: must be in (0, 1)")

    support, delay_support = _build_supports(merged["support"])
    delay_intervals = [
        (lo * 1e-6, hi * 1e-6) for lo, hi in merged["support"]["delay_intervals_us"]
    ]
    return ExperimentConfig(
        raw=merged,
        seed=merged["seed"],
        upa=upa,
        grid=grid,
        scenario=scenario,
        schemes=list(sch["run"]),
        n_ports_list=list(sch["n_ports"]),
        quantizer=quantizer,
        measurement=measurement,
        rank_sizes=list(rc["sizes"]),
        energy_fraction=rc["energy_fraction"],
        quadrature_order=rc["quadrature_order"],
        rank_spacings_wl=(rc["spacing_h_wl"], rc["spacing_v_wl"]),
        support=support,
        delay_support=delay_support,
        delay_intervals=delay_intervals,
    )


def _build_supports(sup_cfg: dict):
    """Angular and angle-delay supports from the config section."""
    if sup_cfg["full_range"] and sup_cfg["subs"]:
        raise ConfigError("support: give full_range or subs, not both")
    if sup_cfg["full_range"]:
        return full_range_support(), None
    if not sup_cfg["subs"]:
        return None, None
    ang_subs, joint_subs = [], []
    has_delay = any("tau_us" in sub for sub in sup_cfg["subs"])
    for i, sub in enumerate(sup_cfg["subs"]):
        path = f"support.subs[{i}]"
        theta = sub["theta_deg"]
        phi_lo, phi_hi = _phi_bounds(sub, path)
        ang = AngularSubSupport(
            math.radians(theta[0]), math.radians(theta[1]), phi_lo, phi_hi
        )
        ang_subs.append(ang)
        if has_delay:
            if "tau_us" not in sub:
                raise ConfigError(f"{path}: all sub-supports need tau_us or none")
            tau = sub["tau_us"]
            joint_subs.append(
                AngularDelaySubSupport(ang, tau[0] * 1e-6, tau[1] * 1e-6)
            )
    angular = AngularSupport(ang_subs)
    joint = AngularDelaySupport(joint_subs) if joint_subs else None
    return angular, joint


def _phi_bounds(sub: dict, path: str):
    if "phi_deg" in sub and "phi_deg_knots" in sub:
        raise ConfigError(f"{path}: give phi_deg or phi_deg_knots, not both")
    if "phi_deg" in sub:
        lo, hi = sub["phi_deg"]
        return math.radians(lo), math.radians(hi)
    if "phi_deg_knots" in sub:
        knots = sub["phi_deg_knots"]
        thetas = [math.radians(k[0]) for k in knots]
        lows = [math.radians(k[1]) for k in knots]
        highs = [math.radians(k[2]) for k in knots]
        return PiecewiseLinear(thetas, lows), PiecewiseLinear(thetas, highs)
    raise ConfigError(f"{path}: missing phi bounds")


# ---------------------------------------------------------------------------
# Strict schema walk
# ---------------------------------------------------------------------------

_SUB_SUPPORT_KEYS = {"theta_deg", "phi_deg", "phi_deg_knots", "tau_us"}


def _merge_validate(data: dict) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a table")
    merged = copy.deepcopy(DEFAULT_CONFIG)
    _walk(data, merged, "")
    _typecheck(merged)
    return merged


def _walk(src: dict, dst: dict, prefix: str):
    for key, val in src.items():
        path = f"{prefix}{key}"
        if key not in dst:
            raise ConfigError(f"{path}: unknown key")
        if isinstance(dst[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}: expected a table")
            _walk(val, dst[key], path + ".")
        elif key == "subs":
            dst[key] = _validate_subs(val, path)
        else:
            dst[key] = val


def _validate_subs(val, path: str):
    if not isinstance(val, list):
        raise ConfigError(f"{path}: expected an array of tables")
    out = []
    for i, sub in enumerate(val):
        if not isinstance(sub, dict):
            raise ConfigError(f"{path}[{i}]: expected a table")
        extra = set(sub) - _SUB_SUPPORT_KEYS
        if extra:
            raise ConfigError(f"{path}[{i}].{sorted(extra)[0]}: unknown key")
        if "theta_deg" not in sub:
            raise ConfigError(f"{path}[{i}]: missing theta_deg")
        out.append(copy.deepcopy(sub))
    return out


def _typecheck(cfg: dict):
    checks = [
        ("seed", cfg["seed"], int, lambda v: v >= 0, ">= 0"),
        ("carrier.dl_center_ghz", cfg["carrier"]["dl_center_ghz"], (int, float),
         lambda v: v > 0, "> 0"),
        ("carrier.ul_center_ghz", cfg["carrier"]["ul_center_ghz"], (int, float),
         lambda v: v > 0, "> 0"),
        ("carrier.subcarrier_spacing_khz", cfg["carrier"]["subcarrier_spacing_khz"],
         (int, float), lambda v: v > 0, "> 0"),
        ("carrier.n_subbands", cfg["carrier"]["n_subbands"], int,
         lambda v: v >= 1, ">= 1"),
        ("carrier.subband_width", cfg["carrier"]["subband_width"], int,
         lambda v: v >= 1, ">= 1"),
        ("array.rows", cfg["array"]["rows"], int, lambda v: v >= 1, ">= 1"),
        ("array.cols", cfg["array"]["cols"], int, lambda v: v >= 1, ">= 1"),
        ("array.polarizations", cfg["array"]["polarizations"], int,
         lambda v: v in (1, 2), "1 or 2"),
        ("array.spacing_h_wl", cfg["array"]["spacing_h_wl"], (int, float),
         lambda v: v > 0, "> 0"),
        ("array.spacing_v_wl", cfg["array"]["spacing_v_wl"], (int, float),
         lambda v: v > 0, "> 0"),
        ("scenario.n_ues", cfg["scenario"]["n_ues"], int, lambda v: v >= 1, ">= 1"),
        ("scenario.delay_spread_ns", cfg["scenario"]["delay_spread_ns"],
         (int, float), lambda v: v > 0, "> 0"),
        ("scenario.ue_antennas", cfg["scenario"]["ue_antennas"], int,
         lambda v: v in (1, 2), "1 or 2"),
        ("scenario.streams_per_ue", cfg["scenario"]["streams_per_ue"], int,
         lambda v: v in (1, 2), "1 or 2"),
        ("scenario.drops", cfg["scenario"]["drops"], int, lambda v: v >= 1, ">= 1"),
        ("scenario.covariance_samples", cfg["scenario"]["covariance_samples"], int,
         lambda v: v >= 1, ">= 1"),
        ("scenario.selection_samples", cfg["scenario"]["selection_samples"], int,
         lambda v: v >= 1, ">= 1"),
        ("scenario.total_power", cfg["scenario"]["total_power"], (int, float),
         lambda v: v > 0, "> 0"),
        ("scenario.ue_speed_mps", cfg["scenario"]["ue_speed_mps"], (int, float),
         lambda v: v >= 0, ">= 0"),
        ("quantizer.amp_bits", cfg["quantizer"]["amp_bits"], int,
         lambda v: v >= 1, ">= 1"),
        ("quantizer.phase_bits", cfg["quantizer"]["phase_bits"], int,
         lambda v: v >= 1, ">= 1"),
        ("measurement.pilot_length", cfg["measurement"]["pilot_length"], int,
         lambda v: v >= 1, ">= 1"),
        ("rank_check.quadrature_order", cfg["rank_check"]["quadrature_order"], int,
         lambda v: v >= 2, ">= 2"),
    ]
    for path, val, typ, ok, what in checks:
        if isinstance(val, bool) or not isinstance(val, typ):
            raise ConfigError(f"{path}: expected {_typename(typ)}")
        if not ok(val):
            raise ConfigError(f"{path}: must be {what}")
    if cfg["scenario"]["field_pattern"] not in ("isotropic", "element3gpp"):
        raise ConfigError(
            "scenario.field_pattern: expected 'isotropic' or 'element3gpp'"
        )
    if not isinstance(cfg["measurement"]["noiseless"], bool):
        raise ConfigError("measurement.noiseless: expected a boolean")
    if not isinstance(cfg["support"]["full_range"], bool):
        raise ConfigError("support.full_range: expected a boolean")
    for name in ("snr_db",):
        vals = cfg["scenario"][name]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"scenario.{name}: expected a non-empty array")
    if not isinstance(cfg["schemes"]["n_ports"], list) or not cfg["schemes"]["n_ports"]:
        raise ConfigError("schemes.n_ports: expected a non-empty array")
    for n in cfg["schemes"]["n_ports"]:
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError("schemes.n_ports: expected integers")
    sizes = cfg["rank_check"]["sizes"]
    if not isinstance(sizes, list) or not sizes or any(
        isinstance(v, bool) or not isinstance(v, int) or v < 1 for v in sizes
    ):
        raise ConfigError("rank_check.sizes: expected positive integers")


def _typename(typ) -> str:
    if typ is int:
        return "an integer"
    return "a number"
