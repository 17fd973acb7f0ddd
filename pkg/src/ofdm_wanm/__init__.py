"""Weighted atomic-norm channel estimation for pilot-aided OFDM.

The main entry points are :func:`estimate_channel_weighted` (the weighted
estimator with prior delay bands), :func:`estimate_channel_atomsr` (the
unweighted baseline) and the Monte Carlo sweeps in
:mod:`ofdm_wanm.metrics_harness`.
"""

from .atomsr import estimate_channel_atomsr, solve_ast, toeplitz_frequencies
from .conic_core import ConicProgram, ProgramBuilder, Status, solve
from .recovery import least_squares_gains, reconstruct_response
from .signal_model import (
    ChannelRealization,
    OFDMConfig,
    PilotObservation,
    PriorBands,
    observe,
    pilot_positions,
    sample_channel,
)
from .spectral_baselines import music_frequencies
from .weighted_ast import (
    DualCertificate,
    WeightedEstimate,
    dual_polynomial,
    estimate_channel_weighted,
    extract_frequencies,
    solve_dual,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ConicProgram",
    "DualCertificate",
    "OFDMConfig",
    "PilotObservation",
    "PriorBands",
    "ProgramBuilder",
    "Status",
    "WeightedEstimate",
    "dual_polynomial",
    "estimate_channel_atomsr",
    "estimate_channel_weighted",
    "extract_frequencies",
    "least_squares_gains",
    "music_frequencies",
    "observe",
    "pilot_positions",
    "reconstruct_response",
    "sample_channel",
    "solve",
    "solve_ast",
    "solve_dual",
    "toeplitz_frequencies",
]
