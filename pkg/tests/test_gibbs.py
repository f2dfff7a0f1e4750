import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from conftest import random_graph
from oracles import brute_loglik, lof_classes
from imrm.latent import MODES, ChainState, Hyper, LinkDensity, log_ibp_prior_ordered, log_rho_prior, logit
from imrm.netgraph import Graph
from imrm.samplers.gibbs import (_draw_new_params, feature_log_odds, gibbs_sweep_z, gibbs_vertex,
                                 new_feature_delta, new_features_mh)


def _ordered_joint(s):
    return s.log_likelihood() + log_ibp_prior_ordered(s.z, s.alpha)


@given(st.integers(2, 6), st.integers(1, 4), st.sampled_from(MODES), st.integers(0, 10_000))
def test_gibbs_odds_equal_joint_ratio(n, k, mode, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p_link=0.3, p_miss=0.2)
    s = ChainState(g, rng.random((n, k)) < 0.6, LinkDensity.from_prior(mode, k, Hyper(), rng), rng)
    i, c = int(rng.integers(n)), int(rng.integers(k))
    if s.m[c] - s.z[i, c] <= 0:
        with pytest.raises(ValueError):
            feature_log_odds(s, i, c)
        return
    on, off = s.copy(), s.copy()
    row = s.z[i].copy()
    row[c] = 1.0
    on.set_row(i, row)
    row[c] = 0.0
    off.set_row(i, row)
    j1, j0 = _ordered_joint(on), _ordered_joint(off)
    lo = feature_log_odds(s, i, c)
    if np.isfinite(j1) and np.isfinite(j0):
        assert lo == pytest.approx(j1 - j0, abs=1e-9)
    elif np.isfinite(j1) or np.isfinite(j0):
        assert lo == j1 - j0


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("seed", range(6))
def test_new_feature_ratio_is_likelihood_ratio(mode, seed):
    """Joint ratio times reverse/forward proposal densities collapses to the likelihood ratio."""
    rng = np.random.default_rng(seed)
    n = 6
    g = random_graph(rng, n, p_link=0.5, p_miss=0.1)
    h = Hyper(alpha=1.7)
    z = (rng.random((n, 3)) < 0.6).astype(float)
    z[:, :3] = np.maximum(z, 0)
    z[[0, 1], 0] = 1  # a shared column
    extra = np.zeros((n, 2))
    extra[0] = 1  # two singletons of vertex 0
    z = np.hstack([z, extra])
    s = ChainState(g, z, LinkDensity.from_prior(mode, 5, h, rng), rng, h)
    i = 0
    single = np.flatnonzero((s.z[i] == 1) & (s.m == 1))
    n_new = int(rng.integers(0, 4))
    n_keep = s.k - len(single)
    params = _draw_new_params(s, n_new, n_keep, h)
    delta = new_feature_delta(s, i, single, params)

    t = s.copy()
    row = t.z[i].copy()
    row[single] = 0
    t.set_row(i, row)
    old = LinkDensity(mode, s.k, r=s.rho.r, diag=s.rho.diag, within=s.rho.within, between=s.rho.between)
    t.delete_features(single)
    cols = [t.add_feature(cross=c, diag=d) for c, d in params]
    row = t.z[i].copy()
    row[cols] = 1
    t.set_row(i, row)

    lam = h.alpha_for(n) / n
    log_q_fwd = poisson.logpmf(n_new, lam) + log_rho_prior(t.rho, h) - log_rho_prior(_kept(t.rho, n_keep), h)
    log_q_rev = poisson.logpmf(len(single), lam) + log_rho_prior(old, h) - log_rho_prior(_kept(old, n_keep, single), h)
    lof = (t.log_joint() - s.log_joint())
    if np.isfinite(lof):
        assert lof + log_q_rev - log_q_fwd == pytest.approx(delta, abs=1e-9)
        assert t.log_likelihood() - s.log_likelihood() == pytest.approx(delta, abs=1e-9)


def _kept(rho, n_keep, drop=None):
    out = rho.copy()
    drop = np.arange(n_keep, rho.k) if drop is None else drop
    out.delete(drop)
    return out


def test_gibbs_vertex_leaves_stats_consistent(rng):
    g = random_graph(rng, 12)
    s = ChainState(g, rng.random((12, 4)) < 0.5, LinkDensity.from_prior("RM", 4, Hyper(), rng), rng)
    for i in range(12):
        gibbs_vertex(s, i)
        s.check()
    gibbs_sweep_z(s)
    s.check()
    assert np.all(s.m > 0)


def test_sole_owner_features_untouched(rng):
    g = Graph(3, np.array([(0, 1)]))
    s = ChainState(g, np.array([[1, 1], [1, 0], [1, 0]]), LinkDensity.from_rho("HW", np.array([[0.6, 0.1], [0.1, 0.6]])), rng)
    for _ in range(50):
        gibbs_vertex(s, 0)
        assert s.z[0, 1] == 1


def test_kmax_blocks_growth():
    g = Graph(4, np.zeros((0, 2), int), np.array([(i, j) for i in range(4) for j in range(i + 1, 4)]))
    h = Hyper(alpha=5.0, k_max=2)
    s = ChainState(g, np.ones((4, 1)), LinkDensity.from_rho("HW", np.array([[0.5]])), np.random.default_rng(0), h)
    for _ in range(200):
        gibbs_sweep_z(s, h)
        assert s.k <= 2


def _exact_posterior(g, n, kmax, alpha, within, between):
    out = {}
    for cls in lof_classes(n, kmax):
        z = np.array(cls, dtype=int).T.reshape(n, len(cls))
        K = len(cls)
        R = np.full((K, K), between)
        np.fill_diagonal(R, within)
        from imrm.latent import log_ibp_prior
        out[cls] = brute_loglik(g, z, R) + log_ibp_prior(z, alpha)
    keys = list(out)
    lp = np.array([out[c] for c in keys])
    p = np.exp(lp - lp.max())
    return dict(zip(keys, p / p.sum()))


def _key(z):
    z = np.asarray(z, int)
    return tuple(sorted(tuple(c) for c in z.T if c.any()))


@pytest.mark.slow
def test_gibbs_with_new_features_matches_enumeration():
    """N=4, HW with fixed rho, K capped at 2: total-variation distance to the exact posterior."""
    n = 4
    g = Graph(n, np.array([(0, 1), (1, 2), (2, 3)]), np.array([(0, 2)]))
    h = Hyper(alpha=1.0, k_max=2)
    truth = _exact_posterior(g, n, 2, 1.0, 0.7, 0.2)
    s = ChainState(g, np.ones((n, 1)), LinkDensity("HW", 1, within=float(logit(0.7)), between=float(logit(0.2))),
                   np.random.default_rng(1), h)
    counts = Counter()
    iters = 12000
    for _ in range(iters):
        gibbs_sweep_z(s, h)
        counts[_key(s.z)] += 1
    tv = 0.5 * sum(abs(truth[c] - counts[c] / iters) for c in truth)
    assert tv < 0.04
