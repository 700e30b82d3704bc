"""Multitask diffusion subband adaptive filtering over clustered networks.

Simulator for the robust multitask diffusion normalized M-estimate subband
adaptive filter (MD-NMSAF) and its diffusion baselines, plus the matching
mean/mean-square stability bounds and transient/steady-state network-MSD
predictions, and a Monte-Carlo experiment harness.
"""

from .algorithms import ALGORITHMS, NodeFilterState, StepConfig
from .filterbank import AnalysisBank, design_bank
from .harness import ExperimentConfig, MsdCurve, run_monte_carlo
from .network import (CombinationWeights, TargetSet, Topology, build_topology,
                      combination_weights, generate_targets)
from .signals import InputModel, NoiseModel
from .theory import MomentSet, NetworkMatrices

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AnalysisBank", "CombinationWeights", "ExperimentConfig",
    "InputModel", "MomentSet", "MsdCurve", "NetworkMatrices", "NodeFilterState",
    "NoiseModel", "StepConfig", "TargetSet", "Topology", "build_topology",
    "combination_weights", "design_bank", "generate_targets", "run_monte_carlo",
    "__version__",
]
