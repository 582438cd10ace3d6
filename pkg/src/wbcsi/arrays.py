"""Uniform planar array geometry and frequency-grid response vectors.

The base station array is a rectangular grid of ``n_rows x n_cols`` elements
in the YZ plane with the first element at the origin, optionally duplicated
for a second polarization.  Antennas are ordered column by column, with the
two polarization blocks contiguous (all slant-A elements first, then all
slant-B elements).  Under that convention the array phase response to a
plane wave factorizes into a horizontal and a vertical phase ramp, so no
explicit element coordinates are materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

__all__ = [
    "SPEED_OF_LIGHT",
    "UpaConfig",
    "CarrierConfig",
    "steering_h",
    "steering_v",
    "steering_3d",
    "steering_matrix",
    "delay_response",
    "dft_basis",
    "spatial_dft_basis",
    "frequency_dft_basis",
]


@dataclass(frozen=True)
class UpaConfig:
    """Geometry of the base-station uniform planar array.

    Parameters
    ----------
    n_rows, n_cols : int
        Vertical and horizontal element counts of the panel.
    n_pol : int
        1 for co-polarized, 2 for cross-polarized panels.
    spacing_h, spacing_v : float
        Element spacings in meters.
    pol_slants : tuple of float
        Polarization slant angles in radians, one per polarization.
    """

    n_rows: int
    n_cols: int
    n_pol: int = 1
    spacing_h: float = 0.5
    spacing_v: float = 0.5
    pol_slants: tuple = field(default=None)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("n_rows and n_cols must be >= 1")
        if self.n_pol not in (1, 2):
            raise ValueError("n_pol must be 1 or 2")
        if not (self.spacing_h > 0 and self.spacing_v > 0):
            raise ValueError("antenna spacings must be > 0")
        slants = self.pol_slants
        if slants is None:
            slants = (0.0,) if self.n_pol == 1 else (math.pi / 4, -math.pi / 4)
        slants = tuple(float(s) for s in slants)
        if len(slants) != self.n_pol:
            raise ValueError("need one polarization slant per polarization")
        object.__setattr__(self, "pol_slants", slants)

    @property
    def n_elements(self) -> int:
        """Antennas per polarization block."""
        return self.n_rows * self.n_cols

    @property
    def n_antennas(self) -> int:
        """Total antenna count across polarizations."""
        return self.n_rows * self.n_cols * self.n_pol


@dataclass(frozen=True)
class CarrierConfig:
    """Duplex carrier frequencies and the subband frequency grid.

    ``n_subbands`` entries spaced by ``subband_width`` subcarriers are
    centered on the carrier of the requested link end.  One channel
    coefficient is modeled per subband (the channel is taken flat within a
    subband).
    """

    dl_center_hz: float
    ul_center_hz: float
    scs_hz: float
    n_subbands: int
    subband_width: int = 1

    def __post_init__(self):
        if min(self.dl_center_hz, self.ul_center_hz, self.scs_hz) <= 0:
            raise ValueError("frequencies must be > 0")
        if self.n_subbands < 1:
            raise ValueError("n_subbands must be >= 1")
        if self.subband_width < 1:
            raise ValueError("subband_width must be >= 1")

    @property
    def subband_spacing_hz(self) -> float:
        """Spacing of the subband grid: subband_width * scs."""
        return self.subband_width * self.scs_hz

    def center_hz(self, link_end: str) -> float:
        if link_end == "DL":
            return self.dl_center_hz
        if link_end == "UL":
            return self.ul_center_hz
        raise ValueError(f"unknown link end {link_end!r}")

    def wavelength(self, link_end: str) -> float:
        return SPEED_OF_LIGHT / self.center_hz(link_end)

    def subband_frequencies(self, link_end: str) -> np.ndarray:
        """Absolute frequencies of the subband grid for one link end."""
        df = self.subband_spacing_hz
        k = np.arange(self.n_subbands)
        return self.center_hz(link_end) + (k - (self.n_subbands - 1) / 2.0) * df


def _check_angles(*angles):
    for a in angles:
        if not np.all(np.isfinite(a)):
            raise ValueError("angles must be finite")


def steering_h(theta: float, phi: float, upa: UpaConfig, wavelength: float) -> np.ndarray:
    """Horizontal steering phase ramp for departure direction (theta, phi).

    Entry n is exp(j*2*pi*n*D_h*sin(theta)*sin(phi)/wavelength); the first
    entry is 1.
    """
    _check_angles(theta, phi)
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    n = np.arange(upa.n_cols)
    phase = 2.0 * np.pi * upa.spacing_h * np.sin(theta) * np.sin(phi) / wavelength
    return np.exp(1j * phase * n)


def steering_v(theta: float, upa: UpaConfig, wavelength: float) -> np.ndarray:
    """Vertical steering phase ramp: entry n is exp(j*2*pi*n*D_v*cos(theta)/wavelength)."""
    _check_angles(theta)
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    n = np.arange(upa.n_rows)
    phase = 2.0 * np.pi * upa.spacing_v * np.cos(theta) / wavelength
    return np.exp(1j * phase * n)


def steering_3d(theta: float, phi: float, upa: UpaConfig, wavelength: float) -> np.ndarray:
    """Panel steering vector: Kronecker product of the horizontal and vertical ramps.

    Covers one polarization block (length n_cols * n_rows), ordered column by
    column to match the antenna indexing.
    """
    return np.kron(
        steering_h(theta, phi, upa, wavelength), steering_v(theta, upa, wavelength)
    )


def steering_matrix(
    theta: np.ndarray, phi: np.ndarray, upa: UpaConfig, wavelength: float
) -> np.ndarray:
    """Steering vectors for many directions at once, one column per direction."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    _check_angles(theta, phi)
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    cols = np.arange(upa.n_cols)[:, None]
    rows = np.arange(upa.n_rows)[:, None]
    ah = np.exp(
        2j * np.pi * upa.spacing_h / wavelength * cols * (np.sin(theta) * np.sin(phi))
    )
    av = np.exp(2j * np.pi * upa.spacing_v / wavelength * rows * np.cos(theta))
    # Kronecker per column: entry (c*n_rows + v) = ah[c] * av[v]
    return (ah[:, None, :] * av[None, :, :]).reshape(upa.n_elements, -1)


def delay_response(tau: float, grid: CarrierConfig, link_end: str) -> np.ndarray:
    """Frequency-domain phase ramp of a path delay on one link end's subband grid.

    Entry k is exp(-j*2*pi*f_k*tau) with f_k the absolute subband frequency.
    """
    if not np.isfinite(tau):
        raise ValueError("delay must be finite")
    if tau < 0:
        raise ValueError("delay must be >= 0")
    f = grid.subband_frequencies(link_end)
    return np.exp(-2j * np.pi * f * tau)


def dft_basis(size: int) -> np.ndarray:
    """Unitary DFT matrix: entry (m, n) = exp(-2*pi*j*m*n/size)/sqrt(size)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    mn = np.outer(np.arange(size), np.arange(size))
    return np.exp(-2j * np.pi * mn / size) / np.sqrt(size)


def spatial_dft_basis(upa: UpaConfig) -> np.ndarray:
    """Orthogonal beam basis for the panel: E(n_cols) kron E(n_rows).

    For cross-polarized panels the basis is block diagonal, one copy per
    polarization block, matching the polarization-major antenna ordering.
    """
    panel = np.kron(dft_basis(upa.n_cols), dft_basis(upa.n_rows))
    if upa.n_pol == 1:
        return panel
    return np.kron(np.eye(upa.n_pol), panel)


def frequency_dft_basis(grid: CarrierConfig) -> np.ndarray:
    """Unitary DFT basis over the subband grid."""
    return dft_basis(grid.n_subbands)
