"""Multipath parameter sets and wideband channel synthesis.

A :class:`PathSet` carries the slow parameters shared by the two duplex
directions (angles, delays, powers, cross-polarization ratios) together
with one independent set of random initial phases per link end; selecting
``"UL"`` or ``"DL"`` at synthesis time realizes the duplex split.

Synthesis builds the antenna-by-subband matrix as a product of three
factors: a block of steering vectors (one column per path, repeated per
polarization), a diagonal of per-path polarization/Doppler coefficients,
and a stack of delay phase ramps.  The per-element sum over paths is never
formed explicitly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .arrays import CarrierConfig, UpaConfig, steering_matrix
from .rank_laws import AngularDelaySupport

__all__ = [
    "Path",
    "PathSet",
    "WidebandChannel",
    "UE_POL_SLANTS",
    "generate_cdl_paths",
    "sample_support_paths",
    "rotate_paths",
    "redraw_phases",
    "path_coefficient",
    "synthesize_channel",
    "vectorize",
    "unvectorize",
    "load_cdl_table",
]

# Co-located dual-polarized UE antennas at 0 and 90 degrees.
UE_POL_SLANTS = (0.0, math.pi / 2)

# Environment override for the clustered-delay-line table directory.
DATA_DIR_ENV = "WBCSI_DATA_DIR"

_PHASE_KEYS = ("tt", "tp", "pt", "pp")


@dataclass(frozen=True)
class Path:
    """One propagation path (angles in radians, delay in seconds)."""

    zod: float
    aod: float
    zoa: float
    aoa: float
    delay: float
    power: float
    xpr: float
    phases_ul: tuple
    phases_dl: tuple
    los: bool = False

    def __post_init__(self):
        if self.power < 0 or self.delay < 0:
            raise ValueError("power and delay must be >= 0")
        if not self.xpr > 0:
            raise ValueError("cross-polarization ratio must be > 0")

    def phases(self, link_end: str) -> tuple:
        return self.phases_ul if link_end == "UL" else self.phases_dl


class PathSet:
    """Structure-of-arrays container for a set of multipath components."""

    def __init__(self, zod, aod, zoa, aoa, delay, power, xpr,
                 phases_ul, phases_dl, los=None,
                 velocity=(0.0, 0.0, math.pi / 2), field_pattern="isotropic"):
        self.zod = np.asarray(zod, dtype=float)
        self.aod = np.asarray(aod, dtype=float)
        self.zoa = np.asarray(zoa, dtype=float)
        self.aoa = np.asarray(aoa, dtype=float)
        self.delay = np.asarray(delay, dtype=float)
        self.power = np.asarray(power, dtype=float)
        self.xpr = np.asarray(xpr, dtype=float)
        self.phases_ul = np.asarray(phases_ul, dtype=float)
        self.phases_dl = np.asarray(phases_dl, dtype=float)
        m = self.zod.size
        if m < 1:
            raise ValueError("a path set needs at least one path")
        for name in ("aod", "zoa", "aoa", "delay", "power", "xpr"):
            if getattr(self, name).shape != (m,):
                raise ValueError(f"field {name} has inconsistent length")
        if self.phases_ul.shape != (m, 4) or self.phases_dl.shape != (m, 4):
            raise ValueError("phase arrays must have shape (n_paths, 4)")
        if np.any(self.power < 0) or np.any(self.delay < 0):
            raise ValueError("powers and delays must be >= 0")
        if not np.all(self.xpr > 0):
            raise ValueError("cross-polarization ratios must be > 0")
        if not np.isfinite(self.power.sum()):
            raise ValueError("total power must be finite")
        self.los = (
            np.zeros(m, dtype=bool) if los is None else np.asarray(los, dtype=bool)
        )
        self.velocity = tuple(float(v) for v in velocity)
        self.field_pattern = field_pattern

    def __len__(self) -> int:
        return self.zod.size

    def path(self, m: int) -> Path:
        """Materialize path m as a record."""
        return Path(
            zod=float(self.zod[m]), aod=float(self.aod[m]),
            zoa=float(self.zoa[m]), aoa=float(self.aoa[m]),
            delay=float(self.delay[m]), power=float(self.power[m]),
            xpr=float(self.xpr[m]),
            phases_ul=tuple(self.phases_ul[m]),
            phases_dl=tuple(self.phases_dl[m]),
            los=bool(self.los[m]),
        )

    def phases(self, link_end: str) -> np.ndarray:
        if link_end == "UL":
            return self.phases_ul
        if link_end == "DL":
            return self.phases_dl
        raise ValueError(f"unknown link end {link_end!r}")

    def copy(self) -> "PathSet":
        return PathSet(
            self.zod.copy(), self.aod.copy(), self.zoa.copy(), self.aoa.copy(),
            self.delay.copy(), self.power.copy(), self.xpr.copy(),
            self.phases_ul.copy(), self.phases_dl.copy(), self.los.copy(),
            self.velocity, self.field_pattern,
        )

    @property
    def velocity_vector(self) -> np.ndarray:
        """Cartesian UE velocity from (speed, travel azimuth, travel zenith)."""
        v, az, zen = self.velocity
        return v * np.array(
            [np.sin(zen) * np.cos(az), np.sin(zen) * np.sin(az), np.cos(zen)]
        )


@dataclass
class WidebandChannel:
    """Channel matrix over (BS antenna, subband) for one UE antenna."""

    matrix: np.ndarray
    link_end: str
    t: float = 0.0
    ue_antenna: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("channel matrix entries must be finite")

    @property
    def n_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_subbands(self) -> int:
        return self.matrix.shape[1]


def _matrix_of(h) -> np.ndarray:
    return h.matrix if isinstance(h, WidebandChannel) else np.asarray(h)


def vectorize(h) -> np.ndarray:
    """Column-stack a channel matrix into a vector."""
    return _matrix_of(h).reshape(-1, order="F")


def unvectorize(vec, n_antennas: int, n_subbands: int = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec)
    if vec.size % n_antennas:
        raise ValueError("vector length is not a multiple of the antenna count")
    if n_subbands is None:
        n_subbands = vec.size // n_antennas
    if n_antennas * n_subbands != vec.size:
        raise ValueError("dimensions do not match the vector length")
    return vec.reshape(n_antennas, n_subbands, order="F")


def _data_path(filename: str):
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        return os.path.join(override, filename)
    return resources.files("wbcsi.data").joinpath(filename)


def load_cdl_table(model: str) -> dict:
    """Load a clustered-delay-line table asset by model name."""
    key = model.upper().replace("_", "-")
    names = {"CDL-A": "cdl_a.json", "CDL-D": "cdl_d.json"}
    if key not in names:
        raise ValueError(f"unknown channel model {model!r} (have {sorted(names)})")
    path = _data_path(names[key])
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _draw_phases(rng: np.random.Generator, m: int) -> np.ndarray:
    """Uniform initial phases on (-pi, pi] for the four coupling terms."""
    return -rng.uniform(-math.pi, math.pi, size=(m, 4))


def _los_phases(rng: np.random.Generator) -> np.ndarray:
    """Specular-component phases: co-polar terms pi apart, no cross terms."""
    u = -rng.uniform(-math.pi, math.pi)
    v = u + math.pi
    if v > math.pi:
        v -= 2 * math.pi
    return np.array([u, 0.0, 0.0, v])


def generate_cdl_paths(model: str, delay_spread: float, rng,
                       ue_speed: float = 0.0,
                       ue_direction=(0.0, math.pi / 2),
                       field_pattern: str = "isotropic") -> PathSet:
    """Expand a clustered-delay-line table into a full path set.

    Cluster rays are placed at the tabulated cluster angles plus the
    standard offsets scaled by the per-cluster spreads; delays scale with
    ``delay_spread``; per-ray cross-polarization ratios are log-normal
    around the tabulated mean; initial phases are drawn independently for
    the two link ends.  Total power is normalized to 1.
    """
    if delay_spread <= 0:
        raise ValueError("delay_spread must be > 0")
    rng = np.random.default_rng(rng)
    table = load_cdl_table(model)

    offsets = np.asarray(table["ray_offsets"], dtype=float)
    spreads = table["cluster_spread_deg"]
    include_centroid = bool(table["include_centroid_ray"])
    los_info = table["los"]
    k_lin = 10.0 ** (los_info["k_factor_db"] / 10.0) if los_info else None

    zod, aod, zoa, aoa = [], [], [], []
    delays, powers, los_flags = [], [], []
    for ci, cl in enumerate(table["clusters"]):
        ray_offsets = offsets
        if include_centroid:
            ray_offsets = np.concatenate([[0.0], offsets])
        n_rays = ray_offsets.size
        p_cluster = 10.0 ** (cl["power_db"] / 10.0)
        p_rays = np.full(n_rays, p_cluster / n_rays)
        is_los = np.zeros(n_rays, dtype=bool)
        if los_info and ci == los_info["cluster_index"]:
            # Center ray carries the specular share, offsets split the rest.
            p_rays = np.empty(n_rays)
            p_rays[0] = p_cluster * k_lin / (1.0 + k_lin)
            p_rays[1:] = p_cluster / (1.0 + k_lin) / (n_rays - 1)
            is_los[0] = True
        aod.append(cl["aod_deg"] + spreads["aod"] * ray_offsets)
        aoa.append(cl["aoa_deg"] + spreads["aoa"] * ray_offsets)
        zod.append(cl["zod_deg"] + spreads["zod"] * ray_offsets)
        zoa.append(cl["zoa_deg"] + spreads["zoa"] * ray_offsets)
        delays.append(np.full(n_rays, cl["delay"] * delay_spread))
        powers.append(p_rays)
        los_flags.append(is_los)

    aod = _wrap_deg_to_rad(np.concatenate(aod))
    aoa = _wrap_deg_to_rad(np.concatenate(aoa))
    zod = _fold_zenith_deg_to_rad(np.concatenate(zod))
    zoa = _fold_zenith_deg_to_rad(np.concatenate(zoa))
    delays = np.concatenate(delays)
    powers = np.concatenate(powers)
    los_flags = np.concatenate(los_flags)
    powers = powers / powers.sum()

    m = powers.size
    xpr_db = rng.normal(table["xpr_mean_db"], table["xpr_std_db"], size=m)
    xpr = 10.0 ** (xpr_db / 10.0)
    xpr[los_flags] = np.inf

    phases_ul = _draw_phases(rng, m)
    phases_dl = _draw_phases(rng, m)
    for idx in np.flatnonzero(los_flags):
        phases_ul[idx] = _los_phases(rng)
        phases_dl[idx] = _los_phases(rng)

    return PathSet(
        zod, aod, zoa, aoa, delays, powers, xpr, phases_ul, phases_dl,
        los=los_flags, velocity=(ue_speed, ue_direction[0], ue_direction[1]),
        field_pattern=field_pattern,
    )


def _wrap_deg_to_rad(deg: np.ndarray) -> np.ndarray:
    rad = np.deg2rad(deg)
    wrapped = np.mod(rad + math.pi, 2 * math.pi) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped)


def _fold_zenith_deg_to_rad(deg: np.ndarray) -> np.ndarray:
    """Mirror zenith angles into [0, 180] degrees, then convert."""
    d = np.mod(deg, 360.0)
    d = np.where(d > 180.0, 360.0 - d, d)
    return np.deg2rad(d)


def sample_support_paths(support: AngularDelaySupport, n_paths: int, rng) -> PathSet:
    """Draw equal-power paths uniformly from an angle-delay support.

    Arrival angles mirror the departure angles (same zenith, azimuth turned
    half a circle); scattering is purely co-polarized.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    rng = np.random.default_rng(rng)
    theta, phi, tau = support.sample(rng, n_paths)
    aoa = np.mod(phi + math.pi + math.pi, 2 * math.pi) - math.pi
    return PathSet(
        zod=theta, aod=phi, zoa=theta, aoa=aoa, delay=tau,
        power=np.full(n_paths, 1.0 / n_paths),
        xpr=np.full(n_paths, np.inf),
        phases_ul=_draw_phases(rng, n_paths),
        phases_dl=_draw_phases(rng, n_paths),
    )


def rotate_paths(paths: PathSet, rng, max_zenith_shift: float = math.pi / 12) -> PathSet:
    """Randomly reorient a path set (per-UE drop decorrelation).

    Azimuths get a common uniform rotation per dimension; zeniths a common
    shift bounded by ``max_zenith_shift``, mirrored back into [0, pi].
    """
    rng = np.random.default_rng(rng)
    out = paths.copy()
    out.aod = _rotate_azimuth(paths.aod, rng.uniform(-math.pi, math.pi))
    out.aoa = _rotate_azimuth(paths.aoa, rng.uniform(-math.pi, math.pi))
    out.zod = _shift_zenith(paths.zod, rng.uniform(-max_zenith_shift, max_zenith_shift))
    out.zoa = _shift_zenith(paths.zoa, rng.uniform(-max_zenith_shift, max_zenith_shift))
    return out


def _rotate_azimuth(a: np.ndarray, shift: float) -> np.ndarray:
    w = np.mod(a + shift + math.pi, 2 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


def _shift_zenith(z: np.ndarray, shift: float) -> np.ndarray:
    s = np.mod(z + shift, 2 * math.pi)
    s = np.where(s > math.pi, 2 * math.pi - s, s)
    return s


def redraw_phases(paths: PathSet, link_end: str, rng) -> PathSet:
    """Copy with fresh initial phases on one link end only.

    Successive redraws of the same path set are the ergodic surrogate for
    time averaging when estimating covariances.
    """
    rng = np.random.default_rng(rng)
    out = paths.copy()
    fresh = _draw_phases(rng, len(paths))
    for idx in np.flatnonzero(paths.los):
        fresh[idx] = _los_phases(rng)
    if link_end == "UL":
        out.phases_ul = fresh
    elif link_end == "DL":
        out.phases_dl = fresh
    else:
        raise ValueError(f"unknown link end {link_end!r}")
    return out


def _field_pattern_gain(pattern: str, zenith, azimuth):
    """Element amplitude gain(s) for the given direction(s)."""
    if pattern == "isotropic":
        return np.ones_like(np.asarray(zenith, dtype=float))
    if pattern == "element3gpp":
        # Single sector element: 65-degree 3 dB beamwidths, 30 dB floors,
        # 8 dBi peak gain.
        zen_deg = np.rad2deg(np.asarray(zenith, dtype=float))
        az_deg = np.rad2deg(np.asarray(azimuth, dtype=float))
        att_v = np.minimum(12.0 * ((zen_deg - 90.0) / 65.0) ** 2, 30.0)
        att_h = np.minimum(12.0 * (az_deg / 65.0) ** 2, 30.0)
        gain_db = 8.0 - np.minimum(att_v + att_h, 30.0)
        return 10.0 ** (gain_db / 20.0)
    raise ValueError(f"unknown field pattern {pattern!r}")


def _coupling(paths: PathSet, link_end: str, bs_slant: float, ue_slant: float,
              bs_is_tx: bool) -> np.ndarray:
    """Per-path polarization coupling between one BS element and one UE element.

    Evaluates the field-pattern / XPR-matrix / field-pattern product of the
    channel coefficient with the element patterns factored out of the array
    phase (they are direction- but not element-index-dependent here).
    """
    phases = paths.phases(link_end)
    inv_xpr = np.sqrt(1.0 / paths.xpr)
    m = np.empty((len(paths), 2, 2), dtype=complex)
    m[:, 0, 0] = np.exp(1j * phases[:, 0])
    m[:, 0, 1] = inv_xpr * np.exp(1j * phases[:, 1])
    m[:, 1, 0] = inv_xpr * np.exp(1j * phases[:, 2])
    m[:, 1, 1] = np.exp(1j * phases[:, 3])

    bs_amp = _field_pattern_gain(paths.field_pattern, paths.zod, paths.aod)
    f_bs = np.stack(
        [bs_amp * math.cos(bs_slant), bs_amp * math.sin(bs_slant)], axis=-1
    )
    f_ue = np.array([math.cos(ue_slant), math.sin(ue_slant)])
    if bs_is_tx:
        f_rx = np.broadcast_to(f_ue, (len(paths), 2))
        f_tx = f_bs
    else:
        f_rx = f_bs
        f_tx = np.broadcast_to(f_ue, (len(paths), 2))
    return np.einsum("mi,mij,mj->m", f_rx, m, f_tx)


def _doppler(paths: PathSet, link_end: str, t: float,
             grid: CarrierConfig) -> np.ndarray:
    """Doppler rotation from the UE motion along the UE-side ray directions."""
    if t == 0.0 or paths.velocity[0] == 0.0:
        return np.ones(len(paths), dtype=complex)
    zen, az = paths.zoa, paths.aoa
    r_hat = np.stack(
        [np.sin(zen) * np.cos(az), np.sin(zen) * np.sin(az), np.cos(zen)], axis=-1
    )
    lam = grid.wavelength(link_end)
    return np.exp(2j * np.pi * (r_hat @ paths.velocity_vector) * t / lam)


def path_coefficient(path: Path, link_end: str, t: float, grid: CarrierConfig,
                     upa: UpaConfig, ue_antenna: int = 0,
                     velocity=(0.0, 0.0, math.pi / 2),
                     field_pattern: str = "isotropic") -> np.ndarray:
    """Complex coefficient of one path, one entry per BS polarization."""
    single = PathSet(
        [path.zod], [path.aod], [path.zoa], [path.aoa], [path.delay],
        [path.power], [path.xpr], [path.phases_ul], [path.phases_dl],
        los=[path.los], velocity=velocity, field_pattern=field_pattern,
    )
    return _coefficients(single, link_end, t, grid, upa, ue_antenna)[:, 0]


def _coefficients(paths: PathSet, link_end: str, t: float, grid: CarrierConfig,
                  upa: UpaConfig, ue_antenna: int) -> np.ndarray:
    """Per-path coefficients for all BS polarizations, shape (n_pol, n_paths)."""
    bs_is_tx = link_end == "DL"
    ue_slant = UE_POL_SLANTS[ue_antenna % len(UE_POL_SLANTS)]
    dopp = _doppler(paths, link_end, t, grid)
    amp = np.sqrt(paths.power)
    rows = []
    for slant in upa.pol_slants:
        rows.append(_coupling(paths, link_end, slant, ue_slant, bs_is_tx) * amp * dopp)
    return np.asarray(rows)


def synthesize_channel(paths: PathSet, link_end: str, t: float, upa: UpaConfig,
                       grid: CarrierConfig, ue_antenna: int = 0) -> WidebandChannel:
    """Build the wideband channel matrix for one UE antenna at time t.

    The result is the steering-block / coefficient-diagonal / delay-ramp
    product; UE antennas are co-located, so they differ only through their
    polarization coupling.
    """
    if link_end not in ("UL", "DL"):
        raise ValueError(f"unknown link end {link_end!r}")
    lam = grid.wavelength(link_end)
    freqs = grid.subband_frequencies(link_end)
    steer = steering_matrix(paths.zod, paths.aod, upa, lam)  # (n_elem, M)
    ramps = np.exp(-2j * np.pi * np.outer(paths.delay, freqs))  # (M, n_subbands)
    coeff = _coefficients(paths, link_end, t, grid, upa, ue_antenna)  # (n_pol, M)
    blocks = [steer @ (coeff[i][:, None] * ramps) for i in range(upa.n_pol)]
    return WidebandChannel(np.vstack(blocks), link_end, t, ue_antenna)
