"""Operational rate-distortion of quantized single-source and distributed compressed sensing."""

from .model import (
    EC_FACTOR,
    MeasurementStats,
    PairSpec,
    PreconditionError,
    RDPoint,
    SparseSpec,
    SystemRates,
    UnboundedGainError,
    correlation_coefficient,
    measurement_stats,
    measurement_variance,
    oracle_distortion_asymptotic,
    oracle_distortion_finite,
    pair_rates,
    rate_gain_jr,
    rate_gain_star,
    rd_conditional,
    rd_gaussian,
    rd_measurement_theory,
    rd_reconstruction_theory,
    system_rates,
)
from .quantizer import (
    CountTable,
    QuantizerSpec,
    SymbolStream,
    dequantize,
    empirical_conditional_entropy,
    empirical_entropy,
    quantize,
)
from .reconstruct import (
    Reconstruction,
    bpdn_ideal_jr,
    bpdn_solve,
    ideal_jr,
    intersect_jr,
    oracle_reconstruct,
    pseudo_inverse_apply,
)
from .sensing import SensingMatrix, gen_sensing_matrix, measure
from .signal import CorrelatedPair, SparseVector, dct_synthesize, gen_correlated_pair, gen_sparse

__version__ = "0.1.0"
