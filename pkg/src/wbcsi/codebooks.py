"""Port-coded CSI feedback schemes and the index-fed 2D-DFT baseline.

All schemes share one measurement model: the base station precodes its
reference signals per (port, subband), the UE estimates the effective
scalar channel of each subband and sums over subbands, then feeds back one
(quantized) coefficient per port and antenna.  The schemes differ only in
how the port precoders are chosen:

* PCR    - conjugated dominant eigenvectors of the joint
           antenna-by-subband covariance (one joint vector per port).
* PCR-E  - pairs of conjugated spatial and frequency covariance
           eigenvectors, jointly ranked by accumulated projection power of
           recent uplink samples.
* PCR-D  - same pair selection on fixed DFT bases instead of eigenvectors.
* Baseline - the UE itself projects its downlink estimate on the 2D-DFT
           bases, returns the strongest coefficients plus their positions
           (costing extra index bits that the port-coded schemes avoid).

Vector conventions: a port's spatial factor s and frequency factor f are
stored exactly as applied, so the measured coefficient is s @ H @ f and
reconstruction stacks conj(s) outer conj(f); for joint ports the coefficient
is w @ vec(H) and reconstruction sums conj(w).  With complete bases and
exact quantization these inversions are identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import WidebandChannel, unvectorize, vectorize
from .covariance import EigenBasis

__all__ = [
    "PortPrecoderSet",
    "FeedbackReport",
    "QuantizerConfig",
    "MeasurementConfig",
    "MeasurementCounter",
    "pcr_precoders",
    "pcre_select",
    "pcrd_select",
    "ue_measure",
    "quantize",
    "dequantize",
    "reconstruct",
    "baseline_etype2",
    "baseline_reconstruct",
    "nmse",
    "feedback_bits",
    "serialize_report",
    "deserialize_report",
]

SCHEME_PCR = "PCR"
SCHEME_PCRE = "PCR-E"
SCHEME_PCRD = "PCR-D"
SCHEME_BASELINE = "BASELINE"


@dataclass
class QuantizerConfig:
    """Coefficient quantizer: pass-through or polar uniform grids.

    In ``amp-phase`` mode amplitudes are normalized by the report maximum
    and quantized on 2**amp_bits cell centers in [0, 1]; phases use
    2**phase_bits cell centers over (-pi, pi].  Boundary values fall to the
    lower-index cell.
    """

    mode: str = "exact"
    amp_bits: int = 4
    phase_bits: int = 4

    def __post_init__(self):
        if self.mode not in ("exact", "amp-phase"):
            raise ValueError(f"unknown quantizer mode {self.mode!r}")
        if self.mode == "amp-phase" and (self.amp_bits < 1 or self.phase_bits < 1):
            raise ValueError("quantized mode needs at least 1 bit per field")


@dataclass
class MeasurementConfig:
    """Reference-signal measurement: pilot length and per-subband SNR."""

    n_pilot: int = 4
    pilot_snr: float = 100.0
    noiseless: bool = True

    def __post_init__(self):
        if self.n_pilot < 1:
            raise ValueError("pilot length must be >= 1")
        if self.pilot_snr <= 0:
            raise ValueError("pilot SNR must be > 0")

    @property
    def estimate_variance(self) -> float:
        """Per-subband effective-channel estimation error variance."""
        return 1.0 / (self.n_pilot * self.pilot_snr)


@dataclass
class MeasurementCounter:
    """Instrumentation for the UE-side estimation cost."""

    port_subband_pairs: int = 0
    operations: int = 0

    def record(self, n_ports: int, n_subbands: int, n_pilot: int):
        self.port_subband_pairs += n_ports * n_subbands
        self.operations += n_ports * n_subbands * n_pilot


@dataclass
class PortPrecoderSet:
    """Per-port precoders of one scheme.

    Joint schemes store one (n_antennas * n_subbands) vector per port;
    factored schemes store a spatial/frequency factor pair per port plus
    the source indices of the factors.
    """

    scheme: str
    n_antennas: int
    n_subbands: int
    joint: np.ndarray = None        # (n_ports, n_ant * n_sub)
    spatial: np.ndarray = None      # (n_ports, n_ant)
    freq: np.ndarray = None         # (n_ports, n_sub)
    pair_indices: np.ndarray = None  # (n_ports, 2) rows (r_n, c_n)

    def __post_init__(self):
        if self.joint is None and (self.spatial is None or self.freq is None):
            raise ValueError("need joint vectors or factor pairs")
        if self.joint is not None:
            self.joint = np.asarray(self.joint, dtype=complex)
            norms = np.linalg.norm(self.joint, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-8):
                raise ValueError("port vectors must have unit norm")
        if self.spatial is not None:
            self.spatial = np.asarray(self.spatial, dtype=complex)
            self.freq = np.asarray(self.freq, dtype=complex)
            self.pair_indices = np.asarray(self.pair_indices, dtype=int)
            pairs = {tuple(p) for p in self.pair_indices}
            if len(pairs) != self.pair_indices.shape[0]:
                raise ValueError("duplicated (spatial, frequency) source pair")

    @property
    def n_ports(self) -> int:
        if self.joint is not None:
            return self.joint.shape[0]
        return self.spatial.shape[0]

    def joint_views(self) -> np.ndarray:
        """Joint port vectors unvectorized to (n_ports, n_ant, n_sub)."""
        return self.joint.reshape(
            self.n_ports, self.n_subbands, self.n_antennas
        ).swapaxes(1, 2)


def pcr_precoders(joint_eigs: EigenBasis, n_ports: int, n_antennas: int,
                  n_subbands: int) -> PortPrecoderSet:
    """Joint ports from the dominant joint-covariance eigenvectors."""
    if n_ports > joint_eigs.count:
        raise ValueError(
            f"{n_ports} ports requested, {joint_eigs.count} eigenpairs available"
        )
    if joint_eigs.dim != n_antennas * n_subbands:
        raise ValueError("eigenbasis dimension does not match n_ant * n_sub")
    w = np.conj(joint_eigs.vectors[:, :n_ports]).T
    return PortPrecoderSet(SCHEME_PCR, n_antennas, n_subbands, joint=w)


def _accumulated_power(projections) -> np.ndarray:
    g = None
    for p in projections:
        p2 = np.abs(p) ** 2
        g = p2 if g is None else g + p2
    return g


def _top_pairs(power: np.ndarray, n_ports: int) -> np.ndarray:
    order = np.argsort(-power, axis=None, kind="stable")[:n_ports]
    r, c = np.unravel_index(order, power.shape)
    return np.stack([r, c], axis=1)


def _sample_matrices(samples):
    return [
        s.matrix if isinstance(s, WidebandChannel) else np.asarray(s, dtype=complex)
        for s in samples
    ]


def pcre_select(u_spatial: EigenBasis, u_freq: EigenBasis, ul_samples,
                n_ports: int) -> PortPrecoderSet:
    """Eigen factor pairs ranked by accumulated uplink projection power.

    Projects each uplink sample onto the spatial eigenbasis from the left
    and the conjugated frequency eigenbasis from the right, accumulates the
    elementwise power, and takes the positions of the strongest entries.
    Ports may repeat a spatial factor or a frequency factor, never both.
    """
    mats = _sample_matrices(ul_samples)
    if not mats:
        raise ValueError("need at least one uplink sample")
    n_ant, n_sub = mats[0].shape
    if n_ports > n_ant * n_sub:
        raise ValueError("more ports than projection entries")
    us_h = u_spatial.vectors.conj().T
    uf_c = u_freq.vectors.conj()
    power = _accumulated_power(us_h @ m @ uf_c for m in mats)
    pairs = _top_pairs(power, n_ports)
    spatial = np.conj(u_spatial.vectors[:, pairs[:, 0]]).T
    freq = np.conj(u_freq.vectors[:, pairs[:, 1]]).T
    return PortPrecoderSet(
        SCHEME_PCRE, n_ant, n_sub, spatial=spatial, freq=freq, pair_indices=pairs
    )


def pcrd_select(s_basis: np.ndarray, f_basis: np.ndarray, ul_samples,
                n_ports: int) -> PortPrecoderSet:
    """DFT factor pairs ranked by accumulated uplink projection power.

    Same selection rule as the eigen variant, on the fixed spatial and
    frequency DFT bases; no covariance decomposition is involved.
    """
    mats = _sample_matrices(ul_samples)
    if not mats:
        raise ValueError("need at least one uplink sample")
    n_ant, n_sub = mats[0].shape
    if n_ports > n_ant * n_sub:
        raise ValueError("more ports than projection entries")
    s_h = np.asarray(s_basis).conj().T
    f = np.asarray(f_basis)
    power = _accumulated_power(s_h @ m @ f for m in mats)
    pairs = _top_pairs(power, n_ports)
    spatial = np.conj(s_basis[:, pairs[:, 0]]).T
    freq = f_basis[:, pairs[:, 1]].T
    return PortPrecoderSet(
        SCHEME_PCRD, n_ant, n_sub, spatial=spatial, freq=freq, pair_indices=pairs
    )


def ue_measure(h_dl, precoders: PortPrecoderSet, meas: MeasurementConfig,
               rng=None, counter: MeasurementCounter = None) -> np.ndarray:
    """Effective per-port coefficients seen by the UE.

    Forms the per-subband effective-channel estimates and sums them over
    subbands (the UE-side half of the joint precoding); with noise enabled,
    each per-subband estimate carries an independent complex Gaussian error
    of the configured variance.
    """
    h = h_dl.matrix if isinstance(h_dl, WidebandChannel) else np.asarray(h_dl)
    if h.shape != (precoders.n_antennas, precoders.n_subbands):
        raise ValueError(
            f"channel shape {h.shape} does not match precoders "
            f"({precoders.n_antennas}, {precoders.n_subbands})"
        )
    if precoders.joint is not None:
        views = precoders.joint_views()  # (n_ports, n_ant, n_sub)
        per_subband = np.einsum("nak,ak->nk", views, h)
        g = per_subband.sum(axis=1)
        joint_direct = precoders.joint @ vectorize(h)
        if not np.allclose(g, joint_direct, atol=1e-9 * max(1.0, np.abs(g).max())):
            raise AssertionError("subband sum deviates from the joint inner product")
    else:
        per_subband = (precoders.spatial @ h) * precoders.freq
        g = per_subband.sum(axis=1)
    if counter is not None:
        counter.record(precoders.n_ports, precoders.n_subbands, meas.n_pilot)
    if not meas.noiseless:
        if rng is None:
            raise ValueError("noisy measurement needs an rng")
        rng = np.random.default_rng(rng)
        var = precoders.n_subbands * meas.estimate_variance
        noise = math.sqrt(var / 2.0) * (
            rng.standard_normal(g.size) + 1j * rng.standard_normal(g.size)
        )
        g = g + noise
    return g


# ---------------------------------------------------------------------------
# Quantization and reports
# ---------------------------------------------------------------------------


@dataclass
class FeedbackReport:
    """Quantized per-port coefficients, optionally with basis indices."""

    scheme: str
    n_ports: int
    quantizer: QuantizerConfig
    n_antennas: int = 0
    n_subbands: int = 0
    coefficients: np.ndarray = None   # exact mode
    amp_codes: np.ndarray = None      # amp-phase mode
    phase_codes: np.ndarray = None
    scale: float = 0.0
    indices: np.ndarray = None        # baseline only: (n_ports, 2)
    zero_flag: bool = False


def quantize(g: np.ndarray, q: QuantizerConfig, scheme: str = SCHEME_PCR,
             dims=(0, 0), indices=None) -> FeedbackReport:
    """Encode coefficients into a feedback report."""
    g = np.asarray(g, dtype=complex)
    if not np.all(np.isfinite(g)):
        raise ValueError("coefficients must be finite")
    report = FeedbackReport(
        scheme=scheme, n_ports=g.size, quantizer=q,
        n_antennas=int(dims[0]), n_subbands=int(dims[1]),
        indices=None if indices is None else np.asarray(indices, dtype=int),
    )
    if q.mode == "exact":
        report.coefficients = g.copy()
        return report
    scale = float(np.abs(g).max()) if g.size else 0.0
    report.scale = scale
    if scale == 0.0:
        report.zero_flag = True
        report.amp_codes = np.zeros(g.size, dtype=int)
        report.phase_codes = np.zeros(g.size, dtype=int)
        return report
    n_amp = 1 << q.amp_bits
    amp = np.abs(g) / scale
    # Same boundary rule as the phase grid: values on a cell edge take the
    # lower-index cell.
    report.amp_codes = np.clip(np.ceil(amp * n_amp).astype(int) - 1, 0, n_amp - 1)
    n_ph = 1 << q.phase_bits
    step = 2.0 * math.pi / n_ph
    # Cell k covers ((k*step - pi, (k+1)*step - pi]; boundary points,
    # which are equidistant between two cell centers, go to the lower cell.
    x = (np.angle(g) + math.pi) / step
    report.phase_codes = np.clip(np.ceil(x).astype(int) - 1, 0, n_ph - 1)
    return report


def dequantize(report: FeedbackReport) -> np.ndarray:
    """Decode a report back to complex coefficients."""
    if report.quantizer.mode == "exact":
        return report.coefficients.copy()
    if report.zero_flag:
        return np.zeros(report.n_ports, dtype=complex)
    n_amp = 1 << report.quantizer.amp_bits
    n_ph = 1 << report.quantizer.phase_bits
    amp = (report.amp_codes + 0.5) / n_amp * report.scale
    phase = -math.pi + (report.phase_codes + 0.5) * (2.0 * math.pi / n_ph)
    return amp * np.exp(1j * phase)


def reconstruct(report: FeedbackReport, precoders: PortPrecoderSet) -> np.ndarray:
    """Channel estimate from one antenna's report: sum of conjugated ports."""
    if report.scheme != precoders.scheme:
        raise ValueError(
            f"report scheme {report.scheme!r} does not match precoders "
            f"{precoders.scheme!r}"
        )
    if report.n_ports > precoders.n_ports:
        raise ValueError("report has more coefficients than ports")
    g = dequantize(report)
    if precoders.joint is not None:
        h = np.conj(precoders.joint[: g.size]).T @ g
        return unvectorize(h, precoders.n_antennas, precoders.n_subbands)
    est = np.zeros((precoders.n_antennas, precoders.n_subbands), dtype=complex)
    if g.size:
        est = np.einsum(
            "n,na,nk->ak", g, np.conj(precoders.spatial[: g.size]),
            np.conj(precoders.freq[: g.size]),
        )
    return est


def baseline_etype2(h_dl_est, s_basis: np.ndarray, f_basis: np.ndarray,
                    n_ports: int, q: QuantizerConfig) -> FeedbackReport:
    """UE-side 2D-DFT compression with explicit position feedback.

    The UE projects its own downlink channel estimate on the spatial and
    frequency DFT bases, keeps the strongest entries, and reports their
    quantized values together with their positions.
    """
    h = h_dl_est.matrix if isinstance(h_dl_est, WidebandChannel) else np.asarray(h_dl_est)
    n_ant, n_sub = h.shape
    if n_ports > n_ant * n_sub:
        raise ValueError("more coefficients than projection entries")
    proj = s_basis.conj().T @ h @ f_basis
    pairs = _top_pairs(np.abs(proj) ** 2, n_ports)
    values = proj[pairs[:, 0], pairs[:, 1]]
    return quantize(values, q, scheme=SCHEME_BASELINE, dims=(n_ant, n_sub),
                    indices=pairs)


def baseline_reconstruct(report: FeedbackReport, s_basis: np.ndarray,
                         f_basis: np.ndarray) -> np.ndarray:
    """Invert the baseline projection from the reported sparse entries."""
    if report.scheme != SCHEME_BASELINE or report.indices is None:
        raise ValueError("need a baseline report carrying indices")
    n_ant = s_basis.shape[0]
    n_sub = f_basis.shape[0]
    sparse = np.zeros((s_basis.shape[1], f_basis.shape[1]), dtype=complex)
    values = dequantize(report)
    sparse[report.indices[:, 0], report.indices[:, 1]] = values
    est = s_basis @ sparse @ f_basis.conj().T
    if est.shape != (n_ant, n_sub):
        raise ValueError("basis shapes do not produce a channel-sized estimate")
    return est


def nmse(h_true, h_est) -> float:
    """Squared-Frobenius error of the estimate relative to the truth."""
    t = h_true.matrix if isinstance(h_true, WidebandChannel) else np.asarray(h_true)
    e = h_est.matrix if isinstance(h_est, WidebandChannel) else np.asarray(h_est)
    if t.shape != e.shape:
        raise ValueError("true and estimated channels must share dimensions")
    denom = np.linalg.norm(t) ** 2
    if denom == 0.0:
        raise ValueError("true channel has zero energy")
    return float(np.linalg.norm(e - t) ** 2 / denom)


# ---------------------------------------------------------------------------
# Report serialization and exact bit accounting
# ---------------------------------------------------------------------------

_REPORT_MAGIC = "wbcsi-feedback 1"

# Exact (unquantized) coefficients are accounted as two IEEE doubles.
_EXACT_COEFF_BITS = 128
_SCALE_BITS = 64


def _index_bits(report: FeedbackReport) -> int:
    cells = report.n_antennas * report.n_subbands
    if cells <= 1:
        return 1
    return math.ceil(math.log2(cells))


def feedback_bits(report: FeedbackReport) -> int:
    """Exact payload size of a serialized report in bits.

    Counts the per-port coefficient fields, the shared amplitude scale in
    quantized mode, and (baseline only) one position field per port.
    """
    if report.quantizer.mode == "exact":
        bits = report.n_ports * _EXACT_COEFF_BITS
    else:
        bits = report.n_ports * (
            report.quantizer.amp_bits + report.quantizer.phase_bits
        ) + _SCALE_BITS
    if report.indices is not None:
        bits += report.n_ports * _index_bits(report)
    return bits


def serialize_report(report: FeedbackReport) -> str:
    lines = [
        _REPORT_MAGIC,
        f"scheme {report.scheme}",
        f"n_ports {report.n_ports}",
        f"dims {report.n_antennas} {report.n_subbands}",
    ]
    q = report.quantizer
    if q.mode == "exact":
        lines.append("quantizer exact")
        coeff = " ".join(
            f"{z.real:.17g} {z.imag:.17g}" for z in report.coefficients
        )
        lines.append(f"coefficients {coeff}".rstrip())
    else:
        lines.append(f"quantizer amp-phase {q.amp_bits} {q.phase_bits}")
        lines.append(f"scale {report.scale:.17g}")
        lines.append(f"zero_flag {int(report.zero_flag)}")
        lines.append("amp_codes " + " ".join(str(c) for c in report.amp_codes))
        lines.append("phase_codes " + " ".join(str(c) for c in report.phase_codes))
    if report.indices is not None:
        flat = " ".join(f"{r} {c}" for r, c in report.indices)
        lines.append(f"indices {flat}".rstrip())
    return "\n".join(lines) + "\n"


def deserialize_report(text: str) -> FeedbackReport:
    lines = text.strip().split("\n")
    if lines[0] != _REPORT_MAGIC:
        raise ValueError(f"not a feedback report (magic {lines[0]!r})")
    fields = {}
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest
    n_ports = int(fields["n_ports"])
    n_ant, n_sub = (int(x) for x in fields["dims"].split())
    qparts = fields["quantizer"].split()
    if qparts[0] == "exact":
        q = QuantizerConfig(mode="exact")
    else:
        q = QuantizerConfig(mode="amp-phase", amp_bits=int(qparts[1]),
                            phase_bits=int(qparts[2]))
    report = FeedbackReport(
        scheme=fields["scheme"], n_ports=n_ports, quantizer=q,
        n_antennas=n_ant, n_subbands=n_sub,
    )
    if q.mode == "exact":
        vals = np.array(fields["coefficients"].split(), dtype=float)
        report.coefficients = vals[0::2] + 1j * vals[1::2]
    else:
        report.scale = float(fields["scale"])
        report.zero_flag = bool(int(fields["zero_flag"]))
        report.amp_codes = np.array(fields["amp_codes"].split(), dtype=int)
        report.phase_codes = np.array(fields["phase_codes"].split(), dtype=int)
    if "indices" in fields:
        vals = np.array(fields["indices"].split(), dtype=int)
        report.indices = vals.reshape(-1, 2)
    return report
