"""Sparse undirected graphs with unobserved dyads.

A ``Graph`` stores its links and its unobserved ("missing") dyads as
canonical ``(i, j)`` pairs with ``i < j``.  Every other pair of distinct
vertices is an observed non-link and is never materialized.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

log = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Malformed or out-of-range edge-list input."""


class SplitError(ValueError):
    """A hold-out split cannot be drawn from the given graph."""


def _canonical(pairs, n: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    base = max(n, int(hi.max()) + 1)
    codes = np.unique(lo * base + hi)
    return np.column_stack([codes // base, codes % base])


def _csr(n: int, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric CSR adjacency: (indptr, neighbours, pair index)."""
    if len(pairs) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    eid = np.concatenate([np.arange(len(pairs)), np.arange(len(pairs))])
    order = np.lexsort((dst, src))
    src, dst, eid = src[order], dst[order], eid[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst, eid


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph with links, unobserved dyads and implicit non-links."""

    n: int
    links: np.ndarray
    missing: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))

    def __post_init__(self):
        links = _canonical(self.links, max(self.n, 1))
        missing = _canonical(self.missing, max(self.n, 1))
        for name, arr in (("links", links), ("missing", missing)):
            if len(arr) and (arr.min() < 0 or arr.max() >= self.n):
                raise EdgeListError(f"{name} index out of range for N={self.n}")
            if len(arr) and np.any(arr[:, 0] == arr[:, 1]):
                raise EdgeListError(f"self-pair in {name}")
        if len(links) and len(missing):
            if np.intersect1d(links[:, 0] * self.n + links[:, 1],
                              missing[:, 0] * self.n + missing[:, 1]).size:
                raise EdgeListError("a dyad cannot be both a link and missing")
        links.setflags(write=False)
        missing.setflags(write=False)
        object.__setattr__(self, "links", links)
        object.__setattr__(self, "missing", missing)
        lp, ln, le = _csr(self.n, links)
        blocked = np.concatenate([links, missing]) if len(missing) else links
        bp, bn, _ = _csr(self.n, blocked)
        object.__setattr__(self, "_link_ptr", lp)
        object.__setattr__(self, "_link_nbr", ln)
        object.__setattr__(self, "_link_eid", le)
        object.__setattr__(self, "_blk_ptr", bp)
        object.__setattr__(self, "_blk_nbr", bn)
        mp, mn, _ = _csr(self.n, missing)
        object.__setattr__(self, "_miss_ptr", mp)
        object.__setattr__(self, "_miss_nbr", mn)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def n_nonlinks(self) -> int:
        """Observed non-links, i.e. pairs neither linked nor missing."""
        return self.n_pairs - len(self.links) - len(self.missing)

    def neighbors(self, i: int) -> np.ndarray:
        return self._link_nbr[self._link_ptr[i]:self._link_ptr[i + 1]]

    def link_ids(self, i: int) -> np.ndarray:
        """Row indices into ``links`` of the links incident to ``i``."""
        return self._link_eid[self._link_ptr[i]:self._link_ptr[i + 1]]

    def missing_neighbors(self, i: int) -> np.ndarray:
        return self._miss_nbr[self._miss_ptr[i]:self._miss_ptr[i + 1]]

    def blocked(self, i: int) -> np.ndarray:
        """Vertices sharing a link or a missing dyad with ``i``."""
        return self._blk_nbr[self._blk_ptr[i]:self._blk_ptr[i + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self._link_ptr)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self._link_nbr), dtype=np.float64)
        return sp.csr_matrix((data, self._link_nbr, self._link_ptr), shape=(self.n, self.n))

    def has_link(self, i: int, j: int) -> bool:
        return bool(np.any(self.neighbors(i) == j))

    def is_missing(self, i: int, j: int) -> bool:
        return bool(np.any(self.missing_neighbors(i) == j))

    def with_missing(self, dyads) -> "Graph":
        """Copy with ``dyads`` moved out of the observed set (links removed as needed)."""
        dyads = _canonical(dyads, max(self.n, 1))
        codes = dyads[:, 0] * self.n + dyads[:, 1]
        keep = ~np.isin(self.links[:, 0] * self.n + self.links[:, 1], codes)
        missing = np.concatenate([self.missing, dyads]) if len(self.missing) else dyads
        return Graph(self.n, self.links[keep], missing)


@dataclass
class HeldoutSet:
    """Labelled dyads hidden from training."""

    dyads: np.ndarray
    labels: np.ndarray
    seed: int | None = None
    fraction: float | None = None

    def __len__(self):
        return len(self.labels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "label"])
        for (i, j), y in zip(self.dyads.tolist(), self.labels.tolist()):
            w.writerow([i, j, y])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "HeldoutSet":
        rows = list(csv.DictReader(io.StringIO(text)))
        dyads = np.array([[int(r["i"]), int(r["j"])] for r in rows], dtype=np.int64).reshape(-1, 2)
        labels = np.array([int(r["label"]) for r in rows], dtype=np.int64)
        return cls(dyads, labels)


def load_edge_list(text: str) -> Graph:
    """Parse whitespace-separated ``i j`` lines.

    Lines starting with ``#`` are comments.  An optional first data line
    ``N <count>`` fixes the vertex count; otherwise it is ``1 + max index``.
    Duplicate and reversed pairs collapse to one link; self-loops are dropped
    (the number dropped is stored on the returned graph as
    ``dropped_self_loops``).
    """
    declared = None
    pairs = []
    n_self = 0
    seen_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if not seen_data and parts[0] == "N":
            if len(parts) != 2 or not parts[1].isdigit():
                raise EdgeListError(f"line {lineno}: malformed vertex-count header {raw!r}")
            declared = int(parts[1])
            seen_data = True
            continue
        seen_data = True
        if len(parts) != 2 or not (parts[0].isdigit() and parts[1].isdigit()):
            raise EdgeListError(f"line {lineno}: expected two non-negative integers, got {raw!r}")
        i, j = int(parts[0]), int(parts[1])
        if declared is not None and max(i, j) >= declared:
            raise EdgeListError(f"line {lineno}: index {max(i, j)} >= declared N={declared}")
        if i == j:
            n_self += 1
            continue
        pairs.append((i, j))
    if declared is None:
        declared = 1 + max((max(p) for p in pairs), default=-1)
    if n_self:
        log.warning("dropped %d self-loop(s)", n_self)
    g = Graph(declared, np.array(pairs, dtype=np.int64).reshape(-1, 2))
    object.__setattr__(g, "dropped_self_loops", n_self)
    return g


def read_edge_list(path) -> Graph:
    with open(path) as fh:
        return load_edge_list(fh.read())


def format_edge_list(g: Graph) -> str:
    lines = [f"N {g.n}"] + [f"{i} {j}" for i, j in g.links.tolist()]
    return "\n".join(lines) + "\n"


def holdout_split(g: Graph, fraction: float, seed: int) -> tuple[Graph, HeldoutSet]:
    """Hide ``floor(fraction * |links|)`` links and as many observed non-links."""
    if len(g.missing):
        raise SplitError("graph already has unobserved dyads")
    if not 0 < fraction < 1:
        raise SplitError(f"fraction must lie in (0, 1), got {fraction}")
    h = int(np.floor(fraction * g.n_links))
    if h < 1:
        raise SplitError(f"fraction {fraction} of {g.n_links} links holds out nothing")
    if g.n_nonlinks < h:
        raise SplitError(f"only {g.n_nonlinks} non-links available, need {h}")
    rng = np.random.default_rng(seed)
    pos = g.links[np.sort(rng.choice(g.n_links, size=h, replace=False))]

    link_codes = set((g.links[:, 0] * g.n + g.links[:, 1]).tolist())
    chosen: list[int] = []
    taken: set[int] = set()
    # rejection sampling over uniform pairs; sparse graphs accept almost always
    while len(chosen) < h:
        i, j = rng.integers(0, g.n, size=2)
        if i == j:
            continue
        code = int(min(i, j) * g.n + max(i, j))
        if code in link_codes or code in taken:
            continue
        taken.add(code)
        chosen.append(code)
    neg = np.array([[c // g.n, c % g.n] for c in chosen], dtype=np.int64)

    dyads = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(h, np.int64), np.zeros(h, np.int64)])
    return g.with_missing(dyads), HeldoutSet(dyads, labels, seed=seed, fraction=fraction)


def network_stats(g: Graph, chunk: int = 512) -> dict:
    """Descriptive statistics: size, assortativity, clustering, mean path length.

    ``r`` is the Pearson correlation of endpoint degrees over links (0 when
    degrees do not vary), ``c`` averages local clustering over vertices of
    degree >= 2 and ``L`` averages shortest-path length over connected pairs
    only.  Both ``c`` and ``L`` are 0 when nothing qualifies.
    """
    deg = g.degree().astype(np.float64)
    m = g.n_links
    out = {"n": int(g.n), "m": int(m),
           "density": (m / g.n_pairs) if g.n_pairs else 0.0}

    if m:
        x = np.concatenate([deg[g.links[:, 0]], deg[g.links[:, 1]]])
        y = np.concatenate([deg[g.links[:, 1]], deg[g.links[:, 0]]])
        sx = x.std()
        out["r"] = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * y.std())) if sx > 0 else 0.0
    else:
        out["r"] = 0.0

    A = g.adjacency()
    tri = np.asarray((A @ A).multiply(A).sum(axis=1)).ravel() / 2.0
    ok = deg >= 2
    out["c"] = float(np.mean(2 * tri[ok] / (deg[ok] * (deg[ok] - 1)))) if ok.any() else 0.0

    total, count = 0.0, 0
    for start in range(0, g.n, chunk):
        idx = np.arange(start, min(start + chunk, g.n))
        d = shortest_path(A, method="D", unweighted=True, directed=False, indices=idx)
        fin = np.isfinite(d) & (d > 0)
        total += d[fin].sum()
        count += int(fin.sum())
    out["L"] = float(total / count) if count else 0.0
    return {k: out[k] for k in ("n", "m", "r", "c", "L", "density")}


def stats_json(g: Graph) -> str:
    return json.dumps(network_stats(g), sort_keys=True)
