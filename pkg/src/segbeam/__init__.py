"""Temporally segmented distortionless-response beamforming."""

from .beamformers import (
    SteeringVector,
    adaptive_mvdr_run,
    batch_capon_run,
    conventional_weights,
    gsc_run,
    omniscient_capon_run,
    sliding_mpdr_run,
)
from .config import BeamformerSpec, ExperimentConfig, load_config, parse_config
from .linalg import ContractError, HermitianState, NumericError, rank1_update
from .scenarios import ArrayGeometry, ConfigError, ScenarioConfig, ScenarioTruth, generate
from .segmentation import OnlineSegmenter, Partition, bsb, osb_run, osrls, sls_batch

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "BeamformerSpec",
    "ConfigError",
    "ContractError",
    "ExperimentConfig",
    "HermitianState",
    "NumericError",
    "OnlineSegmenter",
    "Partition",
    "ScenarioConfig",
    "ScenarioTruth",
    "SteeringVector",
    "adaptive_mvdr_run",
    "batch_capon_run",
    "bsb",
    "conventional_weights",
    "generate",
    "gsc_run",
    "load_config",
    "omniscient_capon_run",
    "osb_run",
    "osrls",
    "parse_config",
    "rank1_update",
    "sliding_mpdr_run",
    "sls_batch",
]
