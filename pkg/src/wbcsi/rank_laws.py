"""Closed-form rank ratios of wideband channel covariance matrices.

For a large planar array the steering vector depends on the departure
direction only through the pair (sin(theta)*sin(phi), cos(theta)), so the
dimension of the subspace spanned by a set of directions is proportional to
the area its image covers in that plane.  The ratios computed here are the
asymptotic rank of the spatial / frequency / joint covariance divided by the
matrix dimension; they are exact in the limit of large panels and wide
grids, and finite instances approach them from above.

Azimuth handling: the mapping phi -> sin(phi) is two-to-one over a full
turn, so a support reaching behind the panel folds onto the front.  Per
zenith angle the spatial ratio integrates the length of the *union* of the
sine images of all sub-supports, which reduces to the plain additive sum
whenever the images are disjoint and handles full-circle azimuth ranges
without double counting.

These laws assume a density that fills its support; tabulated models with
a fixed finite set of directions and delays occupy sets of measure zero,
so their rank ratios drift to zero with growing dimensions instead.
Validate the laws on synthetic supports, not on cluster tables.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .arrays import CarrierConfig, UpaConfig

__all__ = [
    "PiecewiseLinear",
    "AngularSubSupport",
    "AngularSupport",
    "AngularDelaySubSupport",
    "AngularDelaySupport",
    "full_range_support",
    "box_support",
    "rho_spatial",
    "rank_spatial_fullrange",
    "rho_frequency",
    "rho_joint",
    "feedback_bound",
]

_TWO_PI = 2.0 * math.pi


class PiecewiseLinear:
    """Piecewise-linear scalar function given by (x, value) knots."""

    def __init__(self, knots_x, knots_y):
        x = np.asarray(knots_x, dtype=float)
        y = np.asarray(knots_y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("need matching 1-D knot arrays with >= 2 knots")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knot abscissae must be strictly increasing")
        self.x = x
        self.y = y

    def __call__(self, t):
        return np.interp(t, self.x, self.y)

    @property
    def min(self) -> float:
        return float(self.y.min())

    @property
    def max(self) -> float:
        return float(self.y.max())


def _as_bound(b):
    """Normalize a bound spec (number or PiecewiseLinear) to a callable pair."""
    if isinstance(b, PiecewiseLinear):
        return b
    return float(b)


def _bound_value(b, t):
    if isinstance(b, PiecewiseLinear):
        return b(t)
    return np.full_like(np.asarray(t, dtype=float), b)


def _bound_min(b) -> float:
    return b.min if isinstance(b, PiecewiseLinear) else float(b)


def _bound_max(b) -> float:
    return b.max if isinstance(b, PiecewiseLinear) else float(b)


def _bound_breakpoints(b):
    return list(b.x) if isinstance(b, PiecewiseLinear) else []


def _wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, _TWO_PI) - np.pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass
class AngularSubSupport:
    """One convex departure-angle region.

    theta bounds are constants in [0, pi]; phi bounds may be constants or
    piecewise-linear functions of theta.  phi_min <= phi_max is required
    pointwise and the phi extent must not exceed a full turn; values outside
    (-pi, pi] are allowed so that ranges crossing the wrap point can be
    written as a single interval.
    """

    theta_min: float
    theta_max: float
    phi_min: object
    phi_max: object

    def __post_init__(self):
        if not (0.0 <= self.theta_min <= self.theta_max <= math.pi):
            raise ValueError("theta bounds must satisfy 0 <= min <= max <= pi")
        self.phi_min = _as_bound(self.phi_min)
        self.phi_max = _as_bound(self.phi_max)
        probe = np.linspace(self.theta_min, self.theta_max, 33)
        lo = _bound_value(self.phi_min, probe)
        hi = _bound_value(self.phi_max, probe)
        if np.any(hi - lo < -1e-12):
            raise ValueError("phi_min must not exceed phi_max")
        if np.any(hi - lo > _TWO_PI + 1e-12):
            raise ValueError("phi extent must not exceed a full turn")

    def theta_breakpoints(self):
        pts = {self.theta_min, self.theta_max}
        for b in (self.phi_min, self.phi_max):
            pts.update(
                t for t in _bound_breakpoints(b) if self.theta_min < t < self.theta_max
            )
        return sorted(pts)

    def sine_image(self, theta):
        """Range [lo, hi] of sin(phi) over the phi interval at each theta."""
        theta = np.asarray(theta, dtype=float)
        a = _bound_value(self.phi_min, theta)
        b = _bound_value(self.phi_max, theta)
        sa, sb = np.sin(a), np.sin(b)
        lo = np.minimum(sa, sb)
        hi = np.maximum(sa, sb)
        # A peak of sine inside the interval pushes the image to +/-1.
        hi = np.where(_crosses(a, b, math.pi / 2), 1.0, hi)
        lo = np.where(_crosses(a, b, -math.pi / 2), -1.0, lo)
        return lo, hi

    def contains(self, theta, phi) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        ok_t = (theta >= self.theta_min) & (theta <= self.theta_max)
        lo = _bound_value(self.phi_min, theta)
        hi = _bound_value(self.phi_max, theta)
        # Compare on the wrapped circle: offset from phi_min, modulo a turn.
        off = np.mod(phi - lo, _TWO_PI)
        return ok_t & (off <= hi - lo + 1e-12)

    def bounding_box(self):
        return (
            self.theta_min,
            self.theta_max,
            _bound_min(self.phi_min),
            _bound_max(self.phi_max),
        )


def _crosses(a, b, point) -> np.ndarray:
    """True where the interval [a, b] contains point modulo 2*pi."""
    return np.mod(point - a, _TWO_PI) <= b - a


@dataclass
class AngularDelaySubSupport:
    """An angular sub-support extended with a delay interval.

    Delay bounds are constants or piecewise-linear functions of theta, in
    seconds, with 0 <= tau_min <= tau_max pointwise.
    """

    angular: AngularSubSupport
    tau_min: object
    tau_max: object

    def __post_init__(self):
        self.tau_min = _as_bound(self.tau_min)
        self.tau_max = _as_bound(self.tau_max)
        if _bound_min(self.tau_min) < 0:
            raise ValueError("delays must be >= 0")
        probe = np.linspace(self.angular.theta_min, self.angular.theta_max, 33)
        if np.any(
            _bound_value(self.tau_max, probe) - _bound_value(self.tau_min, probe)
            < -1e-18
        ):
            raise ValueError("tau_min must not exceed tau_max")
        if isinstance(self.tau_min, PiecewiseLinear) or isinstance(
            self.tau_max, PiecewiseLinear
        ):
            warnings.warn(
                "theta-dependent delay bounds may describe a non-convex "
                "angle-delay region; rank formulas are validated for convex "
                "sub-supports only",
                stacklevel=2,
            )

    def theta_breakpoints(self):
        pts = set(self.angular.theta_breakpoints())
        for b in (self.tau_min, self.tau_max):
            pts.update(
                t
                for t in _bound_breakpoints(b)
                if self.angular.theta_min < t < self.angular.theta_max
            )
        return sorted(pts)


class AngularSupport:
    """Union of pairwise-disjoint angular sub-supports."""

    def __init__(self, subs, validate: bool = True):
        subs = list(subs)
        if not subs:
            raise ValueError("support must contain at least one sub-support")
        self.subs = subs
        if validate and len(subs) > 1:
            self._validate_disjoint()

    def _validate_disjoint(self, n: int = 4096):
        rng = np.random.default_rng(0x5EED)
        for q, sub in enumerate(self.subs):
            t0, t1, p0, p1 = sub.bounding_box()
            if t1 <= t0 or p1 <= p0:
                continue
            theta = rng.uniform(t0, t1, n)
            phi = rng.uniform(p0, p1, n)
            inside = sub.contains(theta, phi)
            for r, other in enumerate(self.subs):
                if r == q:
                    continue
                both = inside & other.contains(theta, _wrap_angle(phi))
                if np.any(both):
                    raise ValueError(f"sub-supports {q} and {r} overlap")

    def contains(self, theta, phi):
        phi = _wrap_angle(phi)
        out = np.zeros(np.broadcast(np.asarray(theta), phi).shape, dtype=bool)
        for sub in self.subs:
            out |= sub.contains(theta, phi)
        return out

    def volumes(self, order: int = 64) -> np.ndarray:
        """Coordinate volume integral (phi extent over theta) per sub-support."""
        vols = []
        for sub in self.subs:
            def width(theta, sub=sub):
                return _bound_value(sub.phi_max, theta) - _bound_value(
                    sub.phi_min, theta
                )

            vols.append(_integrate_theta(sub.theta_breakpoints(), width, order))
        return np.asarray(vols)

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        """Draw (theta, phi) uniformly over the support, phi wrapped to (-pi, pi]."""
        vols = self.volumes()
        total = vols.sum()
        if total <= 0:
            # Degenerate (zero-measure) support: emit the corner point(s).
            sub = self.subs[0]
            theta = np.full(n, sub.theta_min)
            phi = np.full(n, _bound_min(sub.phi_min))
            return theta, _wrap_angle(phi)
        counts = rng.multinomial(n, vols / total)
        thetas, phis = [], []
        for sub, count in zip(self.subs, counts):
            if count == 0:
                continue
            t0, t1, p0, p1 = sub.bounding_box()
            got = 0
            while got < count:
                m = max(64, 2 * (count - got))
                t = rng.uniform(t0, t1, m)
                p = rng.uniform(p0, p1, m)
                keep = sub.contains(t, p)
                t, p = t[keep][: count - got], p[keep][: count - got]
                thetas.append(t)
                phis.append(p)
                got += t.size
        theta = np.concatenate(thetas)
        phi = _wrap_angle(np.concatenate(phis))
        perm = rng.permutation(n)
        return theta[perm], phi[perm]


class AngularDelaySupport:
    """Union of angle-delay sub-supports, pairwise disjoint as 3-D regions."""

    def __init__(self, subs, validate: bool = True):
        subs = list(subs)
        if not subs:
            raise ValueError("support must contain at least one sub-support")
        self.subs = subs
        # The angular projections may overlap (same directions, different
        # delays), so the projection object skips its own disjointness check.
        self.angular = AngularSupport([s.angular for s in subs], validate=False)
        if validate and len(subs) > 1:
            self._validate_disjoint()

    def _contains_sub(self, sub, theta, phi, tau):
        return (
            sub.angular.contains(theta, phi)
            & (tau >= _bound_value(sub.tau_min, theta) - 1e-18)
            & (tau <= _bound_value(sub.tau_max, theta) + 1e-18)
        )

    def _validate_disjoint(self, n: int = 4096):
        rng = np.random.default_rng(0x5EED)
        for q, sub in enumerate(self.subs):
            t0, t1, p0, p1 = sub.angular.bounding_box()
            d0, d1 = _bound_min(sub.tau_min), _bound_max(sub.tau_max)
            if t1 <= t0 or p1 <= p0 or d1 <= d0:
                continue
            theta = rng.uniform(t0, t1, n)
            phi = rng.uniform(p0, p1, n)
            tau = rng.uniform(d0, d1, n)
            inside = self._contains_sub(sub, theta, phi, tau)
            for r, other in enumerate(self.subs):
                if r == q:
                    continue
                if np.any(inside & self._contains_sub(other, theta, phi, tau)):
                    raise ValueError(f"sub-supports {q} and {r} overlap")

    @property
    def max_delay(self) -> float:
        return max(_bound_max(s.tau_max) for s in self.subs)

    def volumes(self, order: int = 64) -> np.ndarray:
        vols = []
        for sub in self.subs:
            def width(theta, sub=sub):
                ang = _bound_value(sub.angular.phi_max, theta) - _bound_value(
                    sub.angular.phi_min, theta
                )
                dly = _bound_value(sub.tau_max, theta) - _bound_value(
                    sub.tau_min, theta
                )
                return ang * dly

            vols.append(_integrate_theta(sub.theta_breakpoints(), width, order))
        return np.asarray(vols)

    def sample(self, rng: np.random.Generator, n: int) -> tuple:
        """Draw (theta, phi, tau) uniformly over the support."""
        vols = self.volumes()
        total = vols.sum()
        if total <= 0:
            sub = self.subs[0]
            theta = np.full(n, sub.angular.theta_min)
            phi = np.full(n, _bound_min(sub.angular.phi_min))
            tau = np.full(n, _bound_min(sub.tau_min))
            return theta, _wrap_angle(phi), tau
        counts = rng.multinomial(n, vols / total)
        out_t, out_p, out_d = [], [], []
        for sub, count in zip(self.subs, counts):
            if count == 0:
                continue
            t0, t1, p0, p1 = sub.angular.bounding_box()
            d0, d1 = _bound_min(sub.tau_min), _bound_max(sub.tau_max)
            got = 0
            while got < count:
                m = max(64, 2 * (count - got))
                t = rng.uniform(t0, t1, m)
                p = rng.uniform(p0, p1, m)
                d = rng.uniform(d0, d1, m) if d1 > d0 else np.full(m, d0)
                keep = (
                    sub.angular.contains(t, p)
                    & (d >= _bound_value(sub.tau_min, t) - 1e-18)
                    & (d <= _bound_value(sub.tau_max, t) + 1e-18)
                )
                t, p, d = (
                    t[keep][: count - got],
                    p[keep][: count - got],
                    d[keep][: count - got],
                )
                out_t.append(t)
                out_p.append(p)
                out_d.append(d)
                got += t.size
        theta = np.concatenate(out_t)
        phi = _wrap_angle(np.concatenate(out_p))
        tau = np.concatenate(out_d)
        perm = rng.permutation(n)
        return theta[perm], phi[perm], tau[perm]


def full_range_support() -> AngularSupport:
    """Whole-sphere departure support as two half-turn azimuth sub-supports."""
    return AngularSupport(
        [
            AngularSubSupport(0.0, math.pi, -math.pi / 2, math.pi / 2),
            AngularSubSupport(0.0, math.pi, math.pi / 2, 3 * math.pi / 2),
        ]
    )


def box_support(theta_range, phi_range, tau_range) -> AngularDelaySupport:
    """Single rectangular angle-delay sub-support (all bounds constant)."""
    return AngularDelaySupport(
        [
            AngularDelaySubSupport(
                AngularSubSupport(
                    theta_range[0], theta_range[1], phi_range[0], phi_range[1]
                ),
                tau_range[0],
                tau_range[1],
            )
        ]
    )


def _gl_nodes(a: float, b: float, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def _integrate_theta(breakpoints, fn, order: int) -> float:
    total = 0.0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        t, w = _gl_nodes(a, b, order)
        total += float(np.dot(w, fn(t)))
    return total


def _union_length(intervals) -> float:
    """Total length of the union of [lo, hi] intervals."""
    ivs = sorted((lo, hi) for lo, hi in intervals if hi > lo)
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in ivs:
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def rho_spatial(support: AngularSupport, upa: UpaConfig, wavelength: float,
                order: int = 64) -> float:
    """Asymptotic rank of the spatial covariance divided by n_cols*n_rows.

    Integrates sin(theta)^2 times the union length of the sub-supports' sine
    images over zenith, scaled by D_h*D_v/wavelength^2, clamped to [0, 1].
    Equals the per-sub-support additive closed form whenever the sine images
    are disjoint.
    """
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    breakpoints = sorted({t for sub in support.subs for t in sub.theta_breakpoints()})

    def integrand(theta):
        theta = np.atleast_1d(theta)
        out = np.zeros_like(theta)
        for i, t in enumerate(theta):
            ivs = []
            for sub in support.subs:
                if sub.theta_min - 1e-15 <= t <= sub.theta_max + 1e-15:
                    lo, hi = sub.sine_image(t)
                    ivs.append((float(lo), float(hi)))
            out[i] = math.sin(t) ** 2 * _union_length(ivs)
        return out

    area = _integrate_theta(breakpoints, integrand, order)
    rho = upa.spacing_h * upa.spacing_v / wavelength**2 * area
    return float(min(max(rho, 0.0), 1.0))


def rank_spatial_fullrange(upa: UpaConfig, wavelength: float) -> float:
    """Asymptotic spatial covariance rank for whole-sphere scattering.

    Equals pi * L_h * L_v with L_h, L_v the panel apertures in wavelengths:
    the area of the ellipse circumscribing the normalized aperture rectangle.
    """
    lh = upa.spacing_h * upa.n_cols / wavelength
    lv = upa.spacing_v * upa.n_rows / wavelength
    return math.pi * lh * lv


def rho_frequency(delay_intervals, subband_spacing_hz: float) -> float:
    """Asymptotic rank of the frequency covariance divided by the grid size.

    ``delay_intervals`` is a list of disjoint (tau_min, tau_max) pairs in
    seconds; the ratio is the total width times the grid spacing, clamped
    at 1.
    """
    if subband_spacing_hz <= 0:
        raise ValueError("subband spacing must be > 0")
    ivs = sorted((float(a), float(b)) for a, b in delay_intervals)
    width = 0.0
    prev_end = -math.inf
    for a, b in ivs:
        if not (0.0 <= a <= b):
            raise ValueError("delay intervals must satisfy 0 <= min <= max")
        if a < prev_end - 1e-18:
            raise ValueError("delay intervals must be disjoint")
        width += b - a
        prev_end = b
    return float(min(subband_spacing_hz * width, 1.0))


def rho_joint(support: AngularDelaySupport, upa: UpaConfig, wavelength: float,
              subband_spacing_hz: float, order: int = 64) -> float:
    """Asymptotic rank of the joint covariance divided by n_cols*n_rows*n_subbands.

    Per sub-support integrates sin(theta)^2 * |cos(phi)| * delay width over
    the angular region (the azimuth integral is taken per branch on which
    sine is monotone, so regions behind the panel contribute their folded
    area), scaled by D_h*D_v*subband_spacing/wavelength^2.  Contributions
    add across sub-supports; images are assumed disjoint as in the angular
    case.
    """
    if wavelength <= 0 or subband_spacing_hz <= 0:
        raise ValueError("wavelength and subband spacing must be > 0")
    if support.max_delay > 1.0 / subband_spacing_hz + 1e-15:
        raise ValueError(
            "delays beyond the grid's unambiguous range 1/subband_spacing"
        )
    total = 0.0
    for sub in support.subs:
        def integrand(theta, sub=sub):
            theta = np.atleast_1d(theta)
            out = np.zeros_like(theta)
            width = _bound_value(sub.tau_max, theta) - _bound_value(
                sub.tau_min, theta
            )
            a = _bound_value(sub.angular.phi_min, theta)
            b = _bound_value(sub.angular.phi_max, theta)
            for i, t in enumerate(theta):
                # Split the azimuth interval where cos changes sign.
                pieces = _monotone_sine_pieces(float(a[i]), float(b[i]))
                acc = 0.0
                for lo, hi in pieces:
                    x, w = _gl_nodes(lo, hi, max(8, order // 4))
                    acc += float(np.dot(w, np.abs(np.cos(x))))
                out[i] = math.sin(t) ** 2 * acc * width[i]
            return out

        total += _integrate_theta(sub.theta_breakpoints(), integrand, order)
    rho = (
        upa.spacing_h * upa.spacing_v * subband_spacing_hz / wavelength**2 * total
    )
    return float(min(max(rho, 0.0), 1.0))


def _monotone_sine_pieces(a: float, b: float):
    """Split [a, b] at odd multiples of pi/2 (sign changes of cosine)."""
    if b <= a:
        return []
    k0 = math.ceil((a - math.pi / 2) / math.pi)
    cuts = [a]
    k = k0
    while True:
        c = math.pi / 2 + k * math.pi
        if c >= b:
            break
        if c > a:
            cuts.append(c)
        k += 1
    cuts.append(b)
    return list(zip(cuts[:-1], cuts[1:]))


def feedback_bound(support: AngularDelaySupport, upa: UpaConfig,
                   grid: CarrierConfig, wavelength: float,
                   order: int = 64) -> int:
    """Port count sufficient for asymptotically error-free reconstruction.

    ceil(rho_joint * n_cols * n_rows * n_subbands) per polarization, doubled
    for cross-polarized panels.  A zero-measure support degenerates to 0.
    """
    rho = rho_joint(support, upa, wavelength, grid.subband_spacing_hz, order=order)
    per_pol = math.ceil(rho * upa.n_cols * upa.n_rows * grid.n_subbands - 1e-12)
    return int(per_pol * upa.n_pol)
