"""MCMC kernels and the chain driver."""

from .chain import MODELS, ChainResult, Snapshot, init_state, run_chain, step
from .gibbs import feature_log_odds, gibbs_sweep_z, gibbs_vertex, new_features_mh
from .hmc import RhoPosterior, hmc_update_rho, leapfrog
from .irm import Partition, irm_collapsed_sweep, irm_split_merge
from .splitmerge import split_beta, split_merge_move

__all__ = [
    "MODELS", "ChainResult", "Partition", "RhoPosterior", "Snapshot", "feature_log_odds",
    "gibbs_sweep_z", "gibbs_vertex", "hmc_update_rho", "init_state", "irm_collapsed_sweep",
    "irm_split_merge", "leapfrog", "new_features_mh", "run_chain", "split_beta",
    "split_merge_move", "step",
]
