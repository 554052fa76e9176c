"""Identification codes for discrete affine Poisson channels.

Simulation, closed-form bounds and brute-force oracles for identification
over ``Y_k ~ Pois(sum_n a_kn v_n x_n + lambda_k)``.
"""

from ._validation import ValidationError
from .affinity import (
    AffinityMatrix,
    ReductionMap,
    SubspaceReducer,
    condition_metrics,
    gen_identity,
    gen_random_sparse,
    gen_toeplitz,
    svd_reduction,
    zonotope_volume,
)
from .bounds import capacity_bounds, converse_threshold, type1_bound, type2_bound
from .channel import ChannelParams, make_channel, spawn_rng
from .codebook import Codebook, GreedySpherePacker, construct_greedy, packing_radius
from .idcodec import DecoderParams, ThresholdIdentifier, estimate_errors, identify, z_metric

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix", "ChannelParams", "Codebook", "DecoderParams", "GreedySpherePacker",
    "ReductionMap", "SubspaceReducer", "ThresholdIdentifier", "ValidationError",
    "capacity_bounds", "condition_metrics", "construct_greedy", "converse_threshold",
    "estimate_errors", "gen_identity", "gen_random_sparse", "gen_toeplitz", "identify",
    "make_channel", "packing_radius", "spawn_rng", "svd_reduction", "type1_bound",
    "type2_bound", "z_metric", "zonotope_volume",
]
