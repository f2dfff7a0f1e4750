"""Infinite multiple-membership relational models for networks.

Binary latent features with an Indian buffet process prior link vertices
through a noisy-or of class-pair probabilities.  Inference combines Gibbs
updates, split-merge moves and Hamiltonian Monte Carlo; a collapsed
single-membership model serves as the reference.
"""

from .evalkit import auc, baseline_score, nmi, posterior_predict, predictive_loglik
from .latent import ChainState, FeatureMatrix, Hyper, HMCConfig, LinkDensity
from .netgraph import Graph, HeldoutSet, holdout_split, load_edge_list, network_stats
from .samplers.chain import run_chain
from .synthgen import gen_multi, gen_single

__all__ = [
    "ChainState", "FeatureMatrix", "Graph", "HMCConfig", "HeldoutSet", "Hyper", "LinkDensity",
    "auc", "baseline_score", "gen_multi", "gen_single", "holdout_split", "load_edge_list",
    "network_stats", "nmi", "posterior_predict", "predictive_loglik", "run_chain",
]
__version__ = "0.1.0"
