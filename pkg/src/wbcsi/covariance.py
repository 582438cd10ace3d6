"""Channel covariance construction, eigen-structure, and effective rank.

Empirical covariances average outer products of channel samples (over time
realizations and UE antennas alike).  Analytic covariances integrate the
steering / delay-ramp outer products over a declared support; both the
spatial and the frequency kernels depend only on antenna or subband index
differences, so they are assembled from a small table of distinct entries.

Convention: with H the antenna-by-subband matrix and h = vec(H),

    R_spatial   = E[H H^H]        (antenna domain)
    R_frequency = E[H^T H^*]      (subband domain, unconjugated ramps)
    R_joint     = E[h h^H]

Under this convention a single path contributes ramp-vector outer products
b b^H to R_frequency, i.e. the same orientation that appears as the inner
factor of R_joint = E[(b kron a)(b kron a)^H]; reconstruction identities in
the codebook layer hold exactly because of this pairing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arrays import UpaConfig
from .channel import WidebandChannel, vectorize
from .rank_laws import AngularSupport, _bound_value, _gl_nodes

__all__ = [
    "CovarianceSet",
    "EigenBasis",
    "empirical_covariances",
    "eigendecompose",
    "eigenbasis_from_samples",
    "path_joint_eigenbasis",
    "kron_top_eigenbasis",
    "analytic_spatial_covariance",
    "analytic_frequency_covariance",
    "effective_rank",
    "save_matrix",
    "load_matrix",
    "save_eigenbasis",
    "load_eigenbasis",
]

_HERM_TOL = 1e-10


@dataclass
class EigenBasis:
    """Orthonormal eigenvectors (columns) with non-increasing eigenvalues."""

    vectors: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=complex)
        self.values = np.asarray(self.values, dtype=float)
        if self.vectors.ndim != 2 or self.values.ndim != 1:
            raise ValueError("need a 2-D vector matrix and 1-D value array")
        if self.vectors.shape[1] != self.values.size:
            raise ValueError("one eigenvalue per eigenvector column required")
        if np.any(np.diff(self.values) > 1e-9 * max(abs(self.values[0]), 1.0)):
            raise ValueError("eigenvalues must be non-increasing")

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def count(self) -> int:
        return self.values.size

    def top(self, k: int) -> "EigenBasis":
        if k > self.count:
            raise ValueError(f"only {self.count} eigenpairs available, need {k}")
        return EigenBasis(self.vectors[:, :k], self.values[:k])


@dataclass
class CovarianceSet:
    """Spatial, frequency, and joint covariances from one sample set."""

    r_spatial: np.ndarray
    r_frequency: np.ndarray
    r_joint: np.ndarray
    n_samples: int
    link_end: str = "DL"

    def __post_init__(self):
        for name in ("r_spatial", "r_frequency", "r_joint"):
            m = np.asarray(getattr(self, name), dtype=complex)
            _check_hermitian(m, name)
            setattr(self, name, m)


def _check_hermitian(m: np.ndarray, name: str = "matrix"):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.conj().T) > _HERM_TOL * max(scale, 1e-300):
        raise ValueError(f"{name} is not Hermitian within tolerance")


def empirical_covariances(samples, link_end: str = None) -> CovarianceSet:
    """Average outer products over channel samples.

    ``samples`` is a sequence of :class:`WidebandChannel` (or bare matrices)
    with identical dimensions; samples from different UE antennas are simply
    further terms of the average.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one channel sample")
    mats = [s.matrix if isinstance(s, WidebandChannel) else np.asarray(s)
            for s in samples]
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("all samples must share the same dimensions")
    if link_end is None:
        link_end = samples[0].link_end if isinstance(samples[0], WidebandChannel) else "DL"

    n_ant, n_sub = shape
    r_s = np.zeros((n_ant, n_ant), dtype=complex)
    r_f = np.zeros((n_sub, n_sub), dtype=complex)
    r_j = np.zeros((n_ant * n_sub, n_ant * n_sub), dtype=complex)
    for m in mats:
        r_s += m @ m.conj().T
        r_f += m.T @ m.conj()
        h = m.reshape(-1, order="F")
        r_j += np.outer(h, h.conj())
    n = len(mats)
    r_s /= n
    r_f /= n
    r_j /= n
    # Exact symmetrization removes accumulation round-off.
    r_s = 0.5 * (r_s + r_s.conj().T)
    r_f = 0.5 * (r_f + r_f.conj().T)
    r_j = 0.5 * (r_j + r_j.conj().T)
    return CovarianceSet(r_s, r_f, r_j, n_samples=n, link_end=link_end)


def eigendecompose(r: np.ndarray, hermitian_tol: float = _HERM_TOL) -> EigenBasis:
    """Eigen-decomposition with non-increasing values and canonical phases.

    Each eigenvector is rotated so that its first significant component is
    real and positive, which makes repeated runs on identical input produce
    identical bases.
    """
    r = np.asarray(r, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("input must be square")
    scale = np.linalg.norm(r)
    if np.linalg.norm(r - r.conj().T) > hermitian_tol * max(scale, 1e-300):
        raise ValueError("input is not Hermitian within tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (r + r.conj().T))
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    return EigenBasis(_canonical_phases(vecs), vals)


def _canonical_phases(vecs: np.ndarray) -> np.ndarray:
    out = np.array(vecs, dtype=complex)
    mags = np.abs(out)
    peaks = mags.max(axis=0)
    peaks[peaks == 0] = 1.0
    for k in range(out.shape[1]):
        sig = np.flatnonzero(mags[:, k] > 1e-12 * peaks[k])
        if sig.size:
            pivot = out[sig[0], k]
            out[:, k] *= np.conj(pivot) / abs(pivot)
    return out


def eigenbasis_from_samples(samples: np.ndarray, k: int = None) -> EigenBasis:
    """Dominant eigenpairs of the sample covariance, via the sample matrix.

    ``samples`` has one vectorized channel per column; the eigenvectors of
    (1/n) * S S^H are the left singular vectors of S, so the big covariance
    matrix is never materialized.  Only min(dim, n_samples) pairs exist.
    """
    s = np.asarray(samples, dtype=complex)
    if s.ndim != 2:
        raise ValueError("need a (dim, n_samples) matrix")
    u, sing, _ = np.linalg.svd(s, full_matrices=False)
    vals = sing**2 / s.shape[1]
    if k is not None:
        if k > vals.size:
            raise ValueError(f"only {vals.size} sample eigenpairs available")
        u, vals = u[:, :k], vals[:k]
    return EigenBasis(_canonical_phases(u), vals)


def path_joint_eigenbasis(paths, link_end: str, upa, grid, k: int = None) -> EigenBasis:
    """Eigenpairs of the time-averaged joint covariance of a fixed geometry.

    With the path angles, delays, and powers held fixed and only the initial
    phases random, the joint covariance is the power-weighted sum of the
    paths' ramp-kron-steering outer products; its nonzero eigenpairs are
    obtained from the path-count-sized Gram matrix, never forming the full
    covariance.  Restricted to single-polarization panels with co-polarized
    scattering, where the per-path coefficient is a scalar of known power.
    """
    from .arrays import steering_matrix  # local import to avoid cycles

    if upa.n_pol != 1:
        raise ValueError("exact path covariance requires a single polarization")
    if not np.all(np.isinf(paths.xpr)):
        raise ValueError("exact path covariance requires co-polarized paths")
    lam = grid.wavelength(link_end)
    steer = steering_matrix(paths.zod, paths.aod, upa, lam)  # (n_elem, M)
    freqs = grid.subband_frequencies(link_end)
    ramps = np.exp(-2j * np.pi * np.outer(freqs, paths.delay))  # (n_sub, M)
    amp = np.sqrt(paths.power)
    gram = ((ramps.conj().T @ ramps) * (steer.conj().T @ steer)) * np.outer(amp, amp)
    gram = 0.5 * (gram + gram.conj().T)
    vals, svecs = np.linalg.eigh(gram)
    vals = vals[::-1]
    svecs = svecs[:, ::-1]
    m = len(paths)
    k = m if k is None else min(k, m)
    k = int(np.sum(vals[:k] > 1e-12 * max(vals[0], 1e-300)))
    # Columns of V are ramp kron steering; index (subband, element) flattened
    # C-style equals the vec order of an (element, subband) matrix.
    v = (ramps[:, None, :] * steer[None, :, :]).reshape(
        grid.n_subbands * upa.n_elements, m
    )
    u = v @ (amp[:, None] * svecs[:, :k]) / np.sqrt(vals[:k])
    return EigenBasis(_canonical_phases(u), vals[:k])


def kron_top_eigenbasis(outer: EigenBasis, inner: EigenBasis, k: int) -> EigenBasis:
    """Top eigenpairs of a Kronecker-product covariance R_outer kron R_inner.

    Eigenvalues are all products of the factor eigenvalues; eigenvectors are
    the matching Kronecker products.  Valid whenever the joint covariance
    separates, e.g. for delay distributions independent of the angles.
    """
    if k > outer.count * inner.count:
        raise ValueError("k exceeds the number of available eigenpairs")
    prod = np.outer(outer.values, inner.values).reshape(-1)
    order = np.argsort(-prod, kind="stable")[:k]
    oi, ii = np.unravel_index(order, (outer.count, inner.count))
    vecs = np.empty((outer.dim * inner.dim, k), dtype=complex)
    for n in range(k):
        vecs[:, n] = np.kron(outer.vectors[:, oi[n]], inner.vectors[:, ii[n]])
    return EigenBasis(vecs, prod[order])


def effective_rank(basis: EigenBasis, energy_fraction: float) -> int:
    """Smallest eigenvalue count capturing the requested trace fraction."""
    if not (0.0 < energy_fraction < 1.0):
        raise ValueError("energy_fraction must be in (0, 1)")
    vals = np.clip(basis.values, 0.0, None)
    total = vals.sum()
    if total <= 0.0:
        raise ValueError("all-zero spectrum has no effective rank")
    cum = np.cumsum(vals)
    return int(np.searchsorted(cum, energy_fraction * total - 1e-15) + 1)


# ---------------------------------------------------------------------------
# Analytic covariances
# ---------------------------------------------------------------------------


def analytic_spatial_covariance(support: AngularSupport, upa: UpaConfig,
                                wavelength: float,
                                quadrature_order: int = 64) -> np.ndarray:
    """Panel covariance of a uniformly weighted angular support.

    Integrates the steering outer product over the support with a
    Gauss-Legendre tensor rule per sub-support.  Entries depend only on the
    (column, row) index differences, so one table of
    (2*n_cols-1) x (2*n_rows-1) integrals is evaluated and expanded.
    Degenerate supports fall back to the matching lower-dimensional measure
    (an arc, or a single direction).

    ``quadrature_order`` is a floor on the per-axis node count; the rule is
    always given enough nodes to resolve the largest phase swing of the
    integrand (which grows with the aperture), so raising the order beyond
    the default only re-confirms converged results.
    """
    if quadrature_order < 2:
        raise ValueError("quadrature_order must be >= 2")
    if wavelength <= 0:
        raise ValueError("wavelength must be > 0")
    swing = (
        4.0
        * np.pi
        * max(upa.spacing_h * (upa.n_cols - 1), upa.spacing_v * (upa.n_rows - 1))
        / wavelength
    )
    nodes = max(int(quadrature_order), int(np.ceil(swing)) + 32)
    nodes_t, nodes_p, weights = _support_nodes(support, nodes)
    total = weights.sum()
    if total <= 0:
        raise ValueError("support has no quadrature mass")
    weights = weights / total

    dc = np.arange(-(upa.n_cols - 1), upa.n_cols)
    dv = np.arange(-(upa.n_rows - 1), upa.n_rows)
    alpha = 2.0 * np.pi * upa.spacing_h / wavelength * np.sin(nodes_t) * np.sin(nodes_p)
    beta = 2.0 * np.pi * upa.spacing_v / wavelength * np.cos(nodes_t)
    ec = np.exp(1j * np.outer(dc, alpha))
    ev = np.exp(1j * np.outer(dv, beta))
    table = (ec * weights) @ ev.T  # (2*n_cols-1, 2*n_rows-1)

    cols = np.arange(upa.n_elements) // upa.n_rows
    rows = np.arange(upa.n_elements) % upa.n_rows
    r = table[
        cols[:, None] - cols[None, :] + upa.n_cols - 1,
        rows[:, None] - rows[None, :] + upa.n_rows - 1,
    ]
    return 0.5 * (r + r.conj().T)


def _support_nodes(support: AngularSupport, order: int):
    """Quadrature nodes/weights for a uniform density over the support."""
    vols = support.volumes()
    if vols.sum() > 0:
        ts, ps, ws = [], [], []
        for sub in support.subs:
            bps = sub.theta_breakpoints()
            for a, b in zip(bps[:-1], bps[1:]):
                if b <= a:
                    continue
                t, wt = _gl_nodes(a, b, order)
                lo = _bound_value(sub.phi_min, t)
                hi = _bound_value(sub.phi_max, t)
                x, wp = _gl_nodes(-1.0, 1.0, order)
                phi = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x
                w = wt[:, None] * (0.5 * (hi - lo)[:, None] * wp)
                ts.append(np.repeat(t, order))
                ps.append(phi.reshape(-1))
                ws.append(w.reshape(-1))
        return np.concatenate(ts), np.concatenate(ps), np.concatenate(ws)

    # Degenerate support: integrate over whatever extent remains.
    ts, ps, ws = [], [], []
    for sub in support.subs:
        t0, t1, p0, p1 = sub.bounding_box()
        if t1 > t0:  # arc in zenith at (possibly varying) fixed azimuth
            t, wt = _gl_nodes(t0, t1, order)
            ts.append(t)
            ps.append(_bound_value(sub.phi_min, t))
            ws.append(wt)
        elif p1 > p0:  # arc in azimuth at fixed zenith
            p, wp = _gl_nodes(p0, p1, order)
            ts.append(np.full(order, t0))
            ps.append(p)
            ws.append(wp)
        else:  # single direction
            ts.append(np.array([t0]))
            ps.append(np.array([p0]))
            ws.append(np.array([1.0]))
    return np.concatenate(ts), np.concatenate(ps), np.concatenate(ws)


def analytic_frequency_covariance(delay_intervals, n_subbands: int,
                                  subband_spacing_hz: float) -> np.ndarray:
    """Subband covariance of delays distributed uniformly over intervals.

    ``delay_intervals`` is a list of (tau_min, tau_max) pairs in seconds
    weighted by their widths; a zero-width pair is a point mass.  Entries
    have the closed form of the characteristic function of the delay
    distribution evaluated at the subband frequency differences.
    """
    if n_subbands < 1 or subband_spacing_hz <= 0:
        raise ValueError("need n_subbands >= 1 and positive subband spacing")
    ivs = [(float(a), float(b)) for a, b in delay_intervals]
    if not ivs:
        raise ValueError("need at least one delay interval")
    for a, b in ivs:
        if not (0.0 <= a <= b):
            raise ValueError("delay intervals must satisfy 0 <= min <= max")
    widths = np.array([b - a for a, b in ivs])
    if widths.sum() > 0:
        weights = widths / widths.sum()
    else:
        weights = np.full(len(ivs), 1.0 / len(ivs))

    dk = np.arange(n_subbands, dtype=float)
    col = np.zeros(n_subbands, dtype=complex)
    for (a, b), w in zip(ivs, weights):
        if w == 0.0:
            continue
        df = dk * subband_spacing_hz
        if b > a:
            col += w * np.exp(-2j * np.pi * df * 0.5 * (a + b)) * np.sinc(df * (b - a))
        else:
            col += w * np.exp(-2j * np.pi * df * a)
    idx = np.arange(n_subbands)
    diff = idx[:, None] - idx[None, :]
    r = np.where(diff >= 0, col[np.abs(diff)], np.conj(col[np.abs(diff)]))
    return 0.5 * (r + r.conj().T)


# ---------------------------------------------------------------------------
# Structured-text matrix exchange format
# ---------------------------------------------------------------------------

_MATRIX_MAGIC = "wbcsi-matrix 1"
_EIGEN_MAGIC = "wbcsi-eigenbasis 1"


def save_matrix(path, m: np.ndarray):
    """Write a complex matrix: magic line, 'rows cols', then one line per
    row of interleaved real/imaginary pairs."""
    m = np.asarray(m, dtype=complex)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_MATRIX_MAGIC}\n{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            parts = []
            for z in row:
                parts.append(f"{z.real:.17g} {z.imag:.17g}")
            fh.write(" ".join(parts) + "\n")


def load_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != _MATRIX_MAGIC:
            raise ValueError(f"not a matrix file (magic {magic!r})")
        rows, cols = (int(x) for x in fh.readline().split())
        out = np.empty((rows, cols), dtype=complex)
        for i in range(rows):
            vals = np.array(fh.readline().split(), dtype=float)
            if vals.size != 2 * cols:
                raise ValueError(f"row {i} has {vals.size} values, expected {2*cols}")
            out[i] = vals[0::2] + 1j * vals[1::2]
    return out


def save_eigenbasis(path, basis: EigenBasis):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{_EIGEN_MAGIC}\n{basis.dim} {basis.count}\n")
        fh.write(" ".join(f"{v:.17g}" for v in basis.values) + "\n")
        for row in basis.vectors:
            fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")


def load_eigenbasis(path) -> EigenBasis:
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != _EIGEN_MAGIC:
            raise ValueError(f"not an eigenbasis file (magic {magic!r})")
        dim, count = (int(x) for x in fh.readline().split())
        values = np.array(fh.readline().split(), dtype=float)
        if values.size != count:
            raise ValueError("eigenvalue count mismatch")
        vecs = np.empty((dim, count), dtype=complex)
        for i in range(dim):
            vals = np.array(fh.readline().split(), dtype=float)
            vecs[i] = vals[0::2] + 1j * vals[1::2]
    return EigenBasis(vecs, values)
