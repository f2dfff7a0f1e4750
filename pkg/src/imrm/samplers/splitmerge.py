"""Split-merge moves for binary features with non-conjugate link parameters.

Two nonzero entries ``(i1, k1)`` and ``(i2, k2)`` of ``Z`` are drawn with
replacement.  Equal features propose a split: ``i1`` stays in ``k``, ``i2``
seeds a new feature ``k*`` and the other members of ``k`` are allocated to
``k``, ``k*`` or both.  Different features propose a merge of ``k2`` into
``k1``.  The merge is deterministic; its reverse density is the probability
that the split proposal regenerates the pre-merge state.

The target keeps column order, i.e. the IBP density over ordered matrices.
Appending ``k*`` at the end instead of at a random position changes nothing
once states are compared up to column permutation, which is all the
likelihood and the prior can see.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from ..latent import R_CLAMP, ChainState, Hyper, log1mexp, log_beta_pdf_r, logit

# allocation options as (in k, in k*)
OPTIONS = ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0))


def split_beta(mean, m_k, power: float = 1.0):
    """Beta parameters with the given mean and variance ``mean (1 - mean) / m_k^power``.

    Both shape parameters are floored at 1 so the density stays bounded.
    """
    mean = np.asarray(mean, dtype=np.float64)
    b = np.maximum(1.0, (1.0 - mean) * m_k ** power - 1.0 + mean)
    a = np.maximum(1.0, mean / (1.0 - mean) * b)
    return a, b


def split_rho_means(rho, k: int, hyper: Hyper):
    """Random-walk means for the new feature's link probabilities.

    Returns ``(cross, diag)``: ``cross[l]`` is the mean for the pair
    ``(k*, l)`` over the current features (RM only), ``diag`` the mean of the
    new within-class probability (RM and DB).  The new feature copies
    ``k``'s links to the others and to itself, while its link to ``k`` takes
    the average of ``k``'s between-class probabilities (the prior mean when
    ``k`` has no other feature to average over).
    """
    if rho.mode == "HW":
        return None, None
    dense = rho.rho
    diag = dense[k, k]
    if rho.mode == "DB":
        return None, diag
    cross = dense[k].copy()
    others = np.delete(dense[k], k)
    cross[k] = others.mean() if others.size else hyper.a_between / (hyper.a_between + hyper.b_between)
    return cross, diag


def split_rho_proposal(rho, k: int, m_k: int, hyper: Hyper, rng=None, given=None):
    """Draw (or score ``given``) logit parameters for a split-off feature.

    For RM the ``(k*, k)`` entry comes from an even mixture of the
    between-class mean and a clone of ``rho_kk``; the clone lets a merge of
    two fragments of one class find its reverse split.

    Returns ``(cross, diag, log_q, ok)`` where ``ok`` is False when a draw
    falls outside the logit clamp.
    """
    cross_mean, diag_mean = split_rho_means(rho, k, hyper)
    if diag_mean is None:
        return None, None, 0.0, True
    a_d, b_d = split_beta(diag_mean, m_k, hyper.split_var_power)
    if cross_mean is not None:
        a_c, b_c = split_beta(cross_mean, m_k, hyper.split_var_power)
        a_k, b_k = split_beta(diag_mean, m_k, hyper.split_var_power)
    if given is None:
        diag = float(logit(rng.beta(a_d, b_d)))
        cross = None
        if cross_mean is not None:
            cross = logit(rng.beta(a_c, b_c))
            if rng.random() < 0.5:
                cross[k] = logit(rng.beta(a_k, b_k))
    else:
        cross, diag = given
    log_q = float(log_beta_pdf_r(diag, a_d, b_d))
    ok = abs(diag) <= R_CLAMP
    if cross is not None:
        lq = log_beta_pdf_r(cross, a_c, b_c)
        lq_k = np.logaddexp(lq[k], log_beta_pdf_r(cross[k], a_k, b_k)) - np.log(2.0)
        log_q += float(np.sum(np.delete(lq, k)) + lq_k)
        ok = ok and bool(np.all(np.abs(cross) <= R_CLAMP))
    return cross, diag, log_q, ok


def new_param_log_prior(cross, diag, hyper: Hyper) -> float:
    out = 0.0
    if diag is not None:
        out += float(log_beta_pdf_r(diag, hyper.a_within, hyper.b_within))
    if cross is not None:
        out += float(np.sum(log_beta_pdf_r(cross, hyper.a_between, hyper.b_between)))
    return out


def _log_f(m, n):
    return gammaln(n - m + 1) + gammaln(m) - gammaln(n + 1)


def _sum_log1mexp(w) -> float:
    with np.errstate(invalid="ignore"):
        return float(log1mexp(w).sum())


def _option_logweights(ws: ChainState, j: int, k: int, ks: int, partners=None, total=None):
    A, b = ws.vertex_context(j, partners, total)
    row = ws.z[j].copy()
    row[k] = row[ks] = 0.0
    w0 = A @ row
    n = ws.n
    mk = ws.m[k] - ws.z[j, k]
    mks = ws.m[ks] - ws.z[j, ks]
    lr_k = np.log(mk) - np.log(n - mk)
    lr_ks = np.log(mks) - np.log(n - mks)
    lw = np.array([
        _sum_log1mexp(w0 + A[:, k]) + b[k] + lr_k,
        _sum_log1mexp(w0 + A[:, ks]) + b[ks] + lr_ks,
        _sum_log1mexp(w0 + A[:, k] + A[:, ks]) + b[k] + b[ks] + lr_k + lr_ks,
    ])
    return lw, row


def _choose(ws, lw, target):
    top = lw.max()
    if not np.isfinite(top):
        raise FloatingPointError("no allocation option has positive probability")
    p = np.exp(lw - top)
    p /= p.sum()
    if target is None:
        o = min(int(np.searchsorted(np.cumsum(p), ws.rng.random(), side="right")), 2)
    else:
        o = target
    # a forced reverse path may hit a zero-probability option; -inf then rejects the merge
    with np.errstate(divide="ignore"):
        return o, float(np.log(p[o]))


def _place(ws, j, row, k, ks, o):
    row[k], row[ks] = OPTIONS[o]
    ws.set_row(j, row)


def sequential_allocation(ws: ChainState, k: int, ks: int, order, targets=None) -> float:
    """Allocate ``order`` one at a time, scoring dyads to already-placed vertices only."""
    partners = np.ones(ws.n, dtype=bool)
    partners[order] = False
    total = ws.z[partners].sum(axis=0)
    log_q = 0.0
    for t, j in enumerate(order):
        lw, row = _option_logweights(ws, j, k, ks, partners, total)
        o, lp = _choose(ws, lw, None if targets is None else targets[t])
        log_q += lp
        _place(ws, j, row, k, ks, o)
        partners[j] = True
        total += ws.z[j]
    return log_q


def restricted_scan(ws: ChainState, k: int, ks: int, order, targets=None) -> float:
    """One Gibbs pass over ``order`` confined to ``{k, k*, both}``."""
    log_q = 0.0
    for t, j in enumerate(order):
        lw, row = _option_logweights(ws, j, k, ks)
        o, lp = _choose(ws, lw, None if targets is None else targets[t])
        log_q += lp
        _place(ws, j, row, k, ks, o)
    return log_q


def allocate(ws: ChainState, k: int, ks: int, order, n_scans: int, targets=None) -> float:
    """Run the allocation proposal; returns the log density of the final allocation.

    Without scans the sequential allocation itself is the proposal.  With
    ``n_scans >= 1`` the sequential allocation and all but the last scan
    build a launch state, and only the last scan is scored.  ``targets``
    forces the scored pass to land on given options.
    """
    if n_scans <= 0:
        return sequential_allocation(ws, k, ks, order, targets)
    sequential_allocation(ws, k, ks, order)
    for _ in range(n_scans - 1):
        restricted_scan(ws, k, ks, order)
    return restricted_scan(ws, k, ks, order, targets)


def launch_split(ws: ChainState, k: int, i1: int, i2: int, rest, cross, diag) -> int:
    """Add ``k*``, pin ``i1`` to ``k`` and ``i2`` to ``k*``, and clear ``rest`` from ``k``."""
    ks = ws.add_feature(cross=cross, diag=diag)
    for j in rest:
        row = ws.z[j].copy()
        row[k] = 0.0
        ws.set_row(j, row)
    row = ws.z[i2].copy()
    if i2 != i1:
        row[k] = 0.0
    row[ks] = 1.0
    ws.set_row(i2, row)
    return ks


def split_log_ratio(merged: ChainState, split: ChainState, m_a: int, m_b: int, m_k: int,
                    cross, diag, hyper: Hyper) -> float:
    """Log target ratio split/merged times the selection-probability ratio."""
    n = merged.n
    nnz_m = merged.m.sum()
    nnz_s = split.m.sum()
    return (split.log_likelihood() - merged.log_likelihood()
            + np.log(hyper.alpha_for(n)) + _log_f(m_a, n) + _log_f(m_b, n) - _log_f(m_k, n)
            + new_param_log_prior(cross, diag, hyper)
            + 2.0 * np.log(nnz_m) - 2.0 * np.log(nnz_s))


def _split(state: ChainState, k: int, i1: int, i2: int, h: Hyper) -> bool:
    rng = state.rng
    members = np.flatnonzero(state.z[:, k])
    if members.size == 1:
        return False
    if h.k_max is not None and state.k + 1 > h.k_max:
        return False
    cross, diag, log_q_rho, ok = split_rho_proposal(state.rho, k, members.size, h, rng=rng)
    if not ok:
        return False
    rest = members[(members != i1) & (members != i2)]
    order = rng.permutation(rest)
    ws = state.copy()
    ks = launch_split(ws, k, i1, i2, rest, cross, diag)
    log_q_alloc = allocate(ws, k, ks, order, h.t_restricted_scans)
    log_acc = (split_log_ratio(state, ws, ws.m[k], ws.m[ks], members.size, cross, diag, h)
               - log_q_rho - log_q_alloc)
    if np.log(rng.random()) < log_acc:
        state.adopt(ws)
        return True
    return False


def merged_state(state: ChainState, k1: int, k2: int) -> ChainState:
    wm = state.copy()
    for j in np.flatnonzero(state.z[:, k2]):
        row = wm.z[j].copy()
        row[k1], row[k2] = 1.0, 0.0
        wm.set_row(j, row)
    wm.delete_features([k2])
    return wm


def _merge(state: ChainState, k1: int, k2: int, i1: int, i2: int, h: Hyper) -> bool:
    rng = state.rng
    z = state.z
    # the reverse split pins i1 to k only and i2 to k* only
    if i1 != i2 and (z[i1, k2] or z[i2, k1]):
        return False
    union = (z[:, k1] + z[:, k2]) > 0
    m_u = int(union.sum())
    if i1 == i2 and m_u == 1:
        return False
    wm = merged_state(state, k1, k2)
    k_new = k1 - (k2 < k1)

    cross = diag = None
    if state.rho.mode == "RM":
        r = state.rho.r
        cross = np.delete(r[k2], k2)
        diag = float(r[k2, k2])
    elif state.rho.mode == "DB":
        diag = float(state.rho.diag[k2])
    _, _, log_q_rho, _ = split_rho_proposal(wm.rho, k_new, m_u, h, given=(cross, diag))

    idx = np.arange(state.n)
    rest = np.flatnonzero(union & (idx != i1) & (idx != i2))
    order = rng.permutation(rest)
    targets = [OPTIONS.index((z[j, k1], z[j, k2])) for j in order]
    ws = wm.copy()
    ks = launch_split(ws, k_new, i1, i2, rest, cross, diag)
    log_q_alloc = allocate(ws, k_new, ks, order, h.t_restricted_scans, targets)
    log_acc = -(split_log_ratio(wm, state, state.m[k1], state.m[k2], m_u, cross, diag, h)
                - log_q_rho - log_q_alloc)
    if np.log(rng.random()) < log_acc:
        state.adopt(wm)
        return True
    return False


def split_merge_move(state: ChainState, hyper: Hyper | None = None) -> bool:
    """One split or merge proposal; returns whether it was accepted."""
    h = hyper if hyper is not None else state.hyper
    rows, cols = np.nonzero(state.z)
    if rows.size == 0:
        return False
    state.diagnostics["sm_total"] += 1
    a, b = state.rng.integers(rows.size, size=2)
    i1, k1, i2, k2 = int(rows[a]), int(cols[a]), int(rows[b]), int(cols[b])
    if k1 == k2:
        accepted = _split(state, k1, i1, i2, h)
    else:
        accepted = _merge(state, k1, k2, i1, i2, h)
    if accepted:
        state.diagnostics["sm_accept"] += 1
    return accepted
