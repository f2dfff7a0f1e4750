"""Collapsed single-membership sampler with Beta-Bernoulli count tables."""

from __future__ import annotations

import numpy as np
from scipy.special import betaln, gammaln

from ..latent import MODES, SNAPSHOT_VERSION, Hyper
from ..netgraph import Graph


def _F(pos, neg, a, b):
    """Log Beta-Bernoulli marginal of ``pos`` links and ``neg`` non-links."""
    return betaln(a + pos, b + neg) - betaln(a, b)


class Partition:
    """Class assignments plus per-class-pair link and unobserved-dyad counts.

    ``n_link[k, l]`` counts links between classes ``k`` and ``l`` (each
    unordered pair once, so the diagonal counts within-class links);
    ``n_miss`` does the same for unobserved dyads.  A vertex under
    reassignment carries label ``-1`` and is invisible to all tables.
    """

    def __init__(self, graph: Graph, labels, mode: str = "RM", hyper: Hyper | None = None, rng=None):
        if mode not in MODES:
            raise ValueError(f"unknown tying mode {mode!r}")
        self.graph = graph
        self.mode = mode
        self.hyper = hyper if hyper is not None else Hyper()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.diagnostics = {"sm_accept": 0, "sm_total": 0}
        _, labels = np.unique(np.asarray(labels, dtype=np.int64), return_inverse=True)
        if labels.shape != (graph.n,):
            raise ValueError("need one label per vertex")
        self.assign = labels.astype(np.int64)
        self.recount()

    def recount(self) -> None:
        k = int(self.assign.max()) + 1 if self.graph.n else 0
        self.sizes = np.bincount(self.assign, minlength=k)
        self.n_link = self._table(self.graph.links, k)
        self.n_miss = self._table(self.graph.missing, k)

    def _table(self, pairs, k):
        t = np.zeros((k, k), dtype=np.int64)
        if len(pairs):
            a, b = self.assign[pairs[:, 0]], self.assign[pairs[:, 1]]
            np.add.at(t, (np.minimum(a, b), np.maximum(a, b)), 1)
        return t + np.triu(t, 1).T

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def alpha(self) -> float:
        return self.hyper.alpha_for(self.n)

    def copy(self) -> "Partition":
        new = Partition.__new__(Partition)
        new.graph, new.mode, new.hyper, new.rng = self.graph, self.mode, self.hyper, self.rng
        new.diagnostics = dict(self.diagnostics)
        new.assign = self.assign.copy()
        new.sizes = self.sizes.copy()
        new.n_link = self.n_link.copy()
        new.n_miss = self.n_miss.copy()
        return new

    def adopt(self, other: "Partition") -> None:
        self.assign, self.sizes = other.assign, other.sizes
        self.n_link, self.n_miss = other.n_link, other.n_miss

    def check(self) -> None:
        fresh = self.copy()
        fresh.recount()
        for name in ("sizes", "n_link", "n_miss"):
            if not np.array_equal(getattr(fresh, name), getattr(self, name)):
                raise RuntimeError(f"cached {name} is stale")

    # incremental edits --------------------------------------------------------

    def vertex_counts(self, i: int):
        """Links and unobserved dyads from ``i`` to each class."""
        g = self.graph
        ln = self.assign[g.neighbors(i)]
        mn = self.assign[g.missing_neighbors(i)]
        return (np.bincount(ln[ln >= 0], minlength=self.k),
                np.bincount(mn[mn >= 0], minlength=self.k))

    def _shift(self, c: int, e, q, sign: int) -> None:
        for t, v in ((self.n_link, e), (self.n_miss, q)):
            t[c, :] += sign * v
            t[:, c] += sign * v
            t[c, c] -= sign * v[c]

    def remove(self, i: int) -> int:
        c = int(self.assign[i])
        self.assign[i] = -1
        e, q = self.vertex_counts(i)
        self._shift(c, e, q, -1)
        self.sizes[c] -= 1
        return c

    def add(self, i: int, c: int) -> None:
        if c == self.k:
            self.sizes = np.append(self.sizes, 0)
            self.n_link = np.pad(self.n_link, ((0, 1), (0, 1)))
            self.n_miss = np.pad(self.n_miss, ((0, 1), (0, 1)))
        e, q = self.vertex_counts(i)
        self._shift(c, e, q, +1)
        self.sizes[c] += 1
        self.assign[i] = c

    def delete_class(self, c: int) -> None:
        if self.sizes[c]:
            raise ValueError(f"class {c} is not empty")
        keep = np.delete(np.arange(self.k), c)
        self.sizes = self.sizes[keep]
        self.n_link = self.n_link[np.ix_(keep, keep)]
        self.n_miss = self.n_miss[np.ix_(keep, keep)]
        self.assign[self.assign > c] -= 1

    # densities ------------------------------------------------------------------

    def pair_counts(self) -> np.ndarray:
        s = self.sizes
        t = np.outer(s, s)
        np.fill_diagonal(t, s * (s - 1) // 2)
        return t

    def _pos_neg(self):
        pos = self.n_link
        return pos, self.pair_counts() - self.n_miss - pos

    def log_marginal_likelihood(self) -> float:
        h = self.hyper
        pos, neg = self._pos_neg()
        iu = np.triu_indices(self.k, 1)
        dp, dn = np.diag(pos), np.diag(neg)
        if self.mode == "RM":
            return float(_F(dp, dn, h.a_within, h.b_within).sum()
                         + _F(pos[iu], neg[iu], h.a_between, h.b_between).sum())
        between = _F(pos[iu].sum(), neg[iu].sum(), h.a_between, h.b_between)
        if self.mode == "DB":
            return float(_F(dp, dn, h.a_within, h.b_within).sum() + between)
        return float(_F(dp.sum(), dn.sum(), h.a_within, h.b_within) + between)

    def log_crp_prior(self) -> float:
        a = self.alpha
        s = self.sizes
        return float(self.k * np.log(a) + gammaln(s).sum() + gammaln(a) - gammaln(a + s.sum()))

    def log_joint(self) -> float:
        return self.log_crp_prior() + self.log_marginal_likelihood()

    def candidate_deltas(self, i: int):
        """Marginal-likelihood change for placing limbo vertex ``i`` in each class or a new one.

        Returns an array of length ``K + 1`` whose last entry is the new class.
        """
        h = self.hyper
        e, q = self.vertex_counts(i)
        na = self.sizes - q - e
        pos, neg = self._pos_neg()
        aw, bw, ab, bb = h.a_within, h.b_within, h.a_between, h.b_between
        if self.mode == "RM":
            A = np.full((self.k, self.k), ab)
            B = np.full((self.k, self.k), bb)
            np.fill_diagonal(A, aw)
            np.fill_diagonal(B, bw)
            grow = _F(pos + e, neg + na, A, B) - _F(pos, neg, A, B)
            old = grow.sum(axis=1)
            new = _F(e, na, ab, bb).sum()
            return np.append(old, new)
        iu = np.triu_indices(self.k, 1)
        bp, bn = pos[iu].sum(), neg[iu].sum()
        E, NA = e.sum(), na.sum()
        fb = _F(bp, bn, ab, bb)
        d_between = _F(bp + E - e, bn + NA - na, ab, bb) - fb
        new = _F(bp + E, bn + NA, ab, bb) - fb
        dp, dn = np.diag(pos), np.diag(neg)
        if self.mode == "DB":
            d_within = _F(dp + e, dn + na, aw, bw) - _F(dp, dn, aw, bw)
        else:
            wp, wn = dp.sum(), dn.sum()
            d_within = _F(wp + e, wn + na, aw, bw) - _F(wp, wn, aw, bw)
        return np.append(d_within + d_between, new)

    def conditional(self, i: int) -> np.ndarray:
        """Normalized reassignment probabilities for limbo vertex ``i`` (classes, then new)."""
        lw = self.candidate_deltas(i)
        with np.errstate(divide="ignore"):
            lw[:-1] += np.log(self.sizes)
        lw[-1] += np.log(self.alpha)
        k_max = self.hyper.k_max
        if k_max is not None and self.k >= k_max:
            lw[-1] = -np.inf
        p = np.exp(lw - lw.max())
        return p / p.sum()

    def posterior_mean_rho(self) -> np.ndarray:
        """``(a + n+) / (a + b + n)`` per class pair, pooled as the tying mode dictates."""
        h = self.hyper
        pos, neg = self._pos_neg()
        k = self.k
        eye = np.eye(k, dtype=bool)
        if self.mode == "RM":
            P, N = pos.astype(float), neg.astype(float)
        else:
            off = ~eye
            bp, bn = pos[off].sum() / 2, neg[off].sum() / 2
            P = np.full((k, k), bp)
            N = np.full((k, k), bn)
            if self.mode == "DB":
                P[eye], N[eye] = np.diag(pos), np.diag(neg)
            else:
                P[eye], N[eye] = np.trace(pos), np.trace(neg)
        A = np.where(eye, h.a_within, h.a_between)
        B = np.where(eye, h.b_within, h.b_between)
        return (A + P) / (A + B + P + N)

    def to_dict(self) -> dict:
        return {"version": SNAPSHOT_VERSION, "kind": "partition", "n": self.n, "mode": self.mode,
                "labels": self.assign.tolist(), "diagnostics": self.diagnostics,
                "rng": self.rng.bit_generator.state}

    @classmethod
    def from_dict(cls, d: dict, graph: Graph, hyper: Hyper | None = None) -> "Partition":
        if d.get("version") != SNAPSHOT_VERSION or d.get("kind") != "partition":
            raise ValueError("unsupported snapshot")
        if d["n"] != graph.n:
            raise ValueError(f"snapshot has N={d['n']} but graph has N={graph.n}")
        rng = np.random.default_rng()
        if "rng" in d:
            rng.bit_generator.state = d["rng"]
        p = cls(graph, d["labels"], d["mode"], hyper, rng)
        p.diagnostics.update(d.get("diagnostics", {}))
        return p


def _draw(rng, p) -> int:
    return min(int(np.searchsorted(np.cumsum(p), rng.random(), side="right")), len(p) - 1)


def irm_collapsed_sweep(p: Partition, hyper: Hyper | None = None) -> int:
    """One collapsed Gibbs pass over all vertices; returns the number of moves."""
    moves = 0
    for i in range(p.n):
        c = p.remove(i)
        alone = p.sizes[c] == 0
        if alone:
            p.delete_class(c)
        new = _draw(p.rng, p.conditional(i))
        # a singleton returning to a fresh class has not moved
        moves += (new != p.k) if alone else (new != c)
        p.add(i, new)
    return moves


# split-merge ---------------------------------------------------------------------


def _two_class_logw(p: Partition, v: int, ka: int, kb: int) -> np.ndarray:
    d = p.candidate_deltas(v)
    return np.array([np.log(p.sizes[ka]) + d[ka], np.log(p.sizes[kb]) + d[kb]])


def _restricted(p: Partition, ka: int, kb: int, order, targets, sequential: bool) -> float:
    log_q = 0.0
    for t, v in enumerate(order):
        if not sequential:
            p.remove(v)
        lw = _two_class_logw(p, v, ka, kb)
        pr = np.exp(lw - lw.max())
        pr /= pr.sum()
        o = _draw(p.rng, pr) if targets is None else targets[t]
        log_q += np.log(pr[o])
        p.add(v, (ka, kb)[o])
    return float(log_q)


def _allocate(p: Partition, ka: int, kb: int, order, n_scans: int, targets=None) -> float:
    if n_scans <= 0:
        return _restricted(p, ka, kb, order, targets, sequential=True)
    _restricted(p, ka, kb, order, None, sequential=True)
    for _ in range(n_scans - 1):
        _restricted(p, ka, kb, order, None, sequential=False)
    return _restricted(p, ka, kb, order, targets, sequential=False)


def _launch(p: Partition, c: int, j: int, rest) -> int:
    """Empty ``c`` except its anchor, move ``j`` to a new class, leave ``rest`` in limbo."""
    for v in rest:
        p.remove(v)
    p.remove(j)
    kb = p.k
    p.add(j, kb)
    return kb


def _split_log_ratio(merged: Partition, split: Partition, s_a: int, s_b: int) -> float:
    s = s_a + s_b
    return (np.log(merged.alpha) + gammaln(s_a) + gammaln(s_b) - gammaln(s)
            + split.log_marginal_likelihood() - merged.log_marginal_likelihood())


def irm_split_merge(p: Partition, hyper: Hyper | None = None) -> bool:
    """Conjugate split-merge move with sequential allocation and restricted scans."""
    h = hyper if hyper is not None else p.hyper
    rng = p.rng
    p.diagnostics["sm_total"] += 1
    i, j = (int(x) for x in rng.integers(p.n, size=2))
    if i == j:
        return False
    ci, cj = int(p.assign[i]), int(p.assign[j])
    if ci == cj:
        if h.k_max is not None and p.k + 1 > h.k_max:
            return False
        members = np.flatnonzero(p.assign == ci)
        rest = members[(members != i) & (members != j)]
        order = rng.permutation(rest)
        ws = p.copy()
        kb = _launch(ws, ci, j, rest)
        log_q = _allocate(ws, ci, kb, order, h.t_restricted_scans)
        log_acc = _split_log_ratio(p, ws, ws.sizes[ci], ws.sizes[kb]) - log_q
        if np.log(rng.random()) < log_acc:
            p.adopt(ws)
            p.diagnostics["sm_accept"] += 1
            return True
        return False

    union = np.flatnonzero((p.assign == ci) | (p.assign == cj))
    rest = union[(union != i) & (union != j)]
    order = rng.permutation(rest)
    targets = [0 if p.assign[v] == ci else 1 for v in order]
    wm = p.copy()
    for v in np.flatnonzero(p.assign == cj):
        wm.remove(v)
        wm.add(v, ci)
    wm.delete_class(cj)
    ka = ci - (cj < ci)
    ws = wm.copy()
    kb = _launch(ws, ka, j, rest)
    log_q = _allocate(ws, ka, kb, order, h.t_restricted_scans, targets)
    log_acc = -(_split_log_ratio(wm, p, p.sizes[ci], p.sizes[cj]) - log_q)
    if np.log(rng.random()) < log_acc:
        p.adopt(wm)
        p.diagnostics["sm_accept"] += 1
        return True
    return False
