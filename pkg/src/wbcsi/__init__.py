"""Wideband FDD massive-MIMO CSI feedback: channels, rank laws, codebooks."""

from .arrays import (
    CarrierConfig,
    UpaConfig,
    delay_response,
    dft_basis,
    frequency_dft_basis,
    spatial_dft_basis,
    steering_3d,
    steering_h,
    steering_v,
)
from .channel import (
    Path,
    PathSet,
    WidebandChannel,
    generate_cdl_paths,
    redraw_phases,
    sample_support_paths,
    synthesize_channel,
    unvectorize,
    vectorize,
)
from .codebooks import (
    FeedbackReport,
    MeasurementConfig,
    PortPrecoderSet,
    QuantizerConfig,
    baseline_etype2,
    baseline_reconstruct,
    dequantize,
    feedback_bits,
    nmse,
    pcr_precoders,
    pcrd_select,
    pcre_select,
    quantize,
    reconstruct,
    ue_measure,
)
from .covariance import (
    CovarianceSet,
    EigenBasis,
    analytic_frequency_covariance,
    analytic_spatial_covariance,
    effective_rank,
    eigendecompose,
    empirical_covariances,
    kron_top_eigenbasis,
    path_joint_eigenbasis,
)
from .linklevel import (
    ScenarioConfig,
    SweepResult,
    build_scenario,
    ezf_precoder,
    mmse_irc_sinr,
    run_sweep,
    spectral_efficiency,
)
from .rank_laws import (
    AngularDelaySupport,
    AngularSupport,
    feedback_bound,
    full_range_support,
    rank_spatial_fullrange,
    rho_frequency,
    rho_joint,
    rho_spatial,
)

__version__ = "0.1.0"
