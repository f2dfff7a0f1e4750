"""Gibbs updates of existing features and the new-feature Metropolis step."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..latent import R_CLAMP, ChainState, Hyper, log1mexp, logit


def _sum_log1mexp(w) -> float:
    with np.errstate(invalid="ignore"):
        return float(log1mexp(w).sum())


def feature_log_odds(state: ChainState, i: int, k: int, A=None, b=None) -> float:
    """Log posterior odds of ``z_ik = 1`` against ``z_ik = 0``.

    Combines the likelihood change with the prior odds ``m / (N - m)``,
    where ``m`` counts the other vertices owning feature ``k``.
    """
    if A is None:
        A, b = state.vertex_context(i)
    row = state.z[i].copy()
    m_minus = state.m[k] - row[k]
    if m_minus <= 0:
        raise ValueError(f"feature {k} has no owner besides vertex {i}")
    row[k] = 0.0
    w0 = A @ row
    ll0 = _sum_log1mexp(w0)
    ll1 = _sum_log1mexp(w0 + A[:, k]) + b[k]
    with np.errstate(invalid="ignore"):
        # nan only when both settings are impossible
        return ll1 - ll0 + np.log(m_minus) - np.log(state.n - m_minus)


def gibbs_vertex(state: ChainState, i: int, A=None, b=None) -> int:
    """Resample every shared feature of vertex ``i``; returns the number of flips."""
    if A is None:
        A, b = state.vertex_context(i)
    n = state.n
    row = state.z[i].copy()
    m_minus = state.m - row
    flips = 0
    # a random scan order keeps the sweep blind to column positions, which
    # the new-feature step does not randomize
    log_m = np.log(np.maximum(m_minus, 1.0)) - np.log(n - m_minus)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in state.rng.permutation(state.k):
            if m_minus[k] <= 0:
                continue
            # rebuilt from zero so that sums of exact zeros stay exact
            row[k] = 0.0
            w0 = A @ row
            log_odds = (np.log(-np.expm1(w0 + A[:, k])).sum() - np.log(-np.expm1(w0)).sum()
                        + b[k] + log_m[k])
            on = state.z[i, k] == 1.0
            want = state.rng.random() < expit(log_odds)
            row[k] = 1.0 if want else 0.0
            flips += want != on
    if flips:
        state.set_row(i, row)
    return flips


def _draw_new_params(state: ChainState, n_new: int, n_old: int, h: Hyper):
    """Prior draws for ``n_new`` singleton features appended after ``n_old`` kept ones.

    Returns a list of ``(cross, diag)`` logit pairs in append order, where
    ``cross`` covers every column present at the time of appending.
    """
    rng = state.rng
    out = []
    mode = state.rho.mode
    for t in range(n_new):
        cross = diag = None
        if mode == "RM":
            cross = logit(rng.beta(h.a_between, h.b_between, n_old + t))
            diag = float(logit(rng.beta(h.a_within, h.b_within)))
        elif mode == "DB":
            diag = float(logit(rng.beta(h.a_within, h.b_within)))
        out.append((cross, diag))
    return out


def _within_clamp(params) -> bool:
    for cross, diag in params:
        if diag is not None and abs(diag) > R_CLAMP:
            return False
        if cross is not None and np.any(np.abs(cross) > R_CLAMP):
            return False
    return True


def new_feature_delta(state: ChainState, i: int, single, params, A=None, b=None) -> float:
    """Log-likelihood change from swapping ``single`` for features with ``params``."""
    if A is None:
        A, b = state.vertex_context(i)
    row = state.z[i]
    n_keep = state.k - len(single)
    n_new = len(params)
    keep = np.ones(state.k, dtype=bool)
    keep[single] = False
    w_old = A @ row
    w_base = A[:, keep] @ row[keep]
    g = state.graph
    rest = state.z[g.neighbors(i)][:, keep]
    s_rest = (state.m - row - state.z[g.blocked(i)].sum(axis=0))[keep]

    # summed log(1 - rho) between the new features and each kept feature
    if state.rho.mode == "RM":
        P_new = np.zeros(n_keep)
        for cross, _ in params:
            P_new += -np.logaddexp(0.0, cross[:n_keep])
    else:
        P_new = np.full(n_keep, n_new * -np.logaddexp(0.0, state.rho.between))
    return (_sum_log1mexp(w_base + rest @ P_new) - _sum_log1mexp(w_old)
            + s_rest @ P_new - b[single].sum())


def new_features_mh(state: ChainState, i: int, hyper: Hyper | None = None, A=None, b=None) -> bool:
    """Propose replacing the singleton features of ``i`` by Poisson(alpha/N) fresh ones.

    New link parameters come from their prior, so prior and proposal cancel
    and the move is accepted with the likelihood ratio alone.
    """
    h = hyper if hyper is not None else state.hyper
    n = state.n
    rng = state.rng
    n_new = int(rng.poisson(h.alpha_for(n) / n))
    row = state.z[i]
    single = np.flatnonzero((row == 1.0) & (state.m == 1))
    if n_new == 0 and single.size == 0:
        return True
    n_keep = state.k - single.size
    params = _draw_new_params(state, n_new, n_keep, h)
    u = rng.random()
    if h.k_max is not None and n_keep + n_new > h.k_max:
        return False
    if not _within_clamp(params):
        return False

    delta = new_feature_delta(state, i, single, params, A, b)
    if not np.log(u) < delta:
        return False

    new_row = row.copy()
    new_row[single] = 0.0
    state.set_row(i, new_row)
    state.delete_features(single)
    cols = [state.add_feature(cross=c, diag=d) for c, d in params]
    new_row = state.z[i].copy()
    new_row[cols] = 1.0
    state.set_row(i, new_row)
    return True


def gibbs_sweep_z(state: ChainState, hyper: Hyper | None = None, new_features: bool = True) -> int:
    """Sweep vertices in order: shared features by Gibbs, then the new-feature step."""
    h = hyper if hyper is not None else state.hyper
    flips = 0
    for i in range(state.n):
        A, b = state.vertex_context(i)
        flips += gibbs_vertex(state, i, A, b)
        if new_features:
            new_features_mh(state, i, h, A, b)
    state.prune()
    return flips
