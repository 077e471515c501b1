"""Restricted Boltzmann machines trained on binary data with missing entries."""

__version__ = "0.1.0"

from .ais import AisConfig, AisResult, ais_log_partition, complete_data_log_likelihood
from .core import RbmParams, energy, free_energy_terms, hidden_fields, visible_fields
from .dataset import IncompleteDataset, IncompleteObservation, apply_mask, binarize
from .estimators import SampleSet, mci_estimates, smci_estimates, smci_h, smci_v, smci_vh
from .io import load_checkpoint, load_incomplete, save_checkpoint, save_incomplete
from .meanfield import generate_initial_points, solve_clamped_mf
from .oracle import exact_gradient, exact_log_likelihood, exact_log_partition
from .sampler import PersistentChains, block_gibbs, block_gibbs_clamped, pcd_step
from .trainer import TrainConfig, TrainResult, train

__all__ = [
    "AisConfig",
    "AisResult",
    "IncompleteDataset",
    "IncompleteObservation",
    "PersistentChains",
    "RbmParams",
    "SampleSet",
    "TrainConfig",
    "TrainResult",
    "ais_log_partition",
    "apply_mask",
    "binarize",
    "block_gibbs",
    "block_gibbs_clamped",
    "complete_data_log_likelihood",
    "energy",
    "exact_gradient",
    "exact_log_likelihood",
    "exact_log_partition",
    "free_energy_terms",
    "generate_initial_points",
    "hidden_fields",
    "load_checkpoint",
    "load_incomplete",
    "mci_estimates",
    "pcd_step",
    "save_checkpoint",
    "save_incomplete",
    "smci_estimates",
    "smci_h",
    "smci_v",
    "smci_vh",
    "solve_clamped_mf",
    "train",
    "visible_fields",
]
