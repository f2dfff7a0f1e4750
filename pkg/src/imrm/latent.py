"""Latent state of the multiple-membership model and its log densities.

The link probability between vertices with binary feature rows ``z_i`` and
``z_j`` is the noisy-or ``1 - exp(z_i' P z_j)`` with ``P = log(1 - rho)``.
Log-likelihood evaluation touches links and unobserved dyads only: the sum
over observed non-links is recovered from feature counts ``m``, the
within-vertex co-occurrence ``D = Z'Z`` and the co-occurrence ``C`` across
linked or unobserved dyads.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import betaln, expit, gammaln

from .netgraph import Graph

MODES = ("RM", "DB", "HW")
R_CLAMP = 30.0
SNAPSHOT_VERSION = 1


class StateError(RuntimeError):
    """Cached statistics disagree with the state they summarize."""


def log1mexp(x):
    """``log(1 - exp(x))`` for ``x <= 0``; ``-inf`` at 0.

    A single ``log(-expm1(x))``: for very negative ``x`` its absolute error
    stays near machine epsilon, which is all a sum of log terms needs.
    """
    with np.errstate(divide="ignore"):
        return np.log(-np.expm1(np.asarray(x, dtype=np.float64)))


def pair_forms(zu, P, zv):
    """Row-wise ``zu[e] @ P @ zv[e]``, via a matrix product rather than einsum."""
    return np.sum((zu @ P) * zv, axis=1)


def softplus(x):
    return np.logaddexp(0.0, x)


def log_beta_pdf_r(r, a, b):
    """Beta(a, b) log-density of ``rho = sigmoid(r)``, evaluated in rho-space."""
    return -(a - 1) * softplus(-r) - (b - 1) * softplus(r) - betaln(a, b)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


@dataclass
class HMCConfig:
    leapfrog_steps: int = 10
    step_size: float = 0.05
    adapt_target: float = 0.75


@dataclass
class Hyper:
    """Prior and sampler settings.  ``alpha=None`` means ``log N``."""

    alpha: float | None = None
    a_within: float = 5.0
    a_between: float = 1.0
    b_within: float = 1.0
    b_between: float = 5.0
    hmc: HMCConfig = field(default_factory=HMCConfig)
    t_restricted_scans: int = 2
    # split proposals for new link probabilities have variance rho(1-rho)/m^power
    split_var_power: float = 1.0
    iterations: int = 2500
    k_init: int = 50
    split_merge_per_iter: int = 1
    k_max: int | None = None
    burn_in: float = 0.5
    thin: int = 10

    def __post_init__(self):
        if isinstance(self.hmc, dict):
            self.hmc = HMCConfig(**self.hmc)
        for name in ("a_within", "a_between", "b_within", "b_between"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")

    def alpha_for(self, n: int) -> float:
        return float(np.log(n)) if self.alpha is None else float(self.alpha)

    def to_dict(self) -> dict:
        return asdict(self)


class LinkDensity:
    """Symmetric class-link probabilities under RM, DB or HW tying.

    Parameters live in logit space.  RM keeps a full symmetric ``K x K``
    matrix; DB keeps one within-class value per feature plus one shared
    between-class value; HW keeps one shared within and one shared between
    value.  The shared values exist for any ``K``, including 0.
    """

    def __init__(self, mode: str, k: int, r=None, diag=None, within=0.0, between=0.0):
        if mode not in MODES:
            raise ValueError(f"unknown tying mode {mode!r}")
        self.mode = mode
        self.k = int(k)
        self.r = None
        self.diag = None
        self.within = float(within)
        self.between = float(between)
        if mode == "RM":
            self.r = np.zeros((k, k)) if r is None else np.array(r, dtype=np.float64).reshape(k, k)
        elif mode == "DB":
            self.diag = np.zeros(k) if diag is None else np.array(diag, dtype=np.float64).reshape(k)
        self._cache = None

    # construction -----------------------------------------------------------

    @classmethod
    def from_rho(cls, mode: str, rho) -> "LinkDensity":
        """Build from a dense probability matrix (tied entries must agree)."""
        rho = np.atleast_2d(np.asarray(rho, dtype=np.float64))
        k = rho.shape[0]
        if not np.allclose(rho, rho.T):
            raise ValueError("rho must be symmetric")
        rr = np.clip(logit(rho), -R_CLAMP, R_CLAMP) if k else rho
        off = rr[~np.eye(k, dtype=bool)]
        if mode == "RM":
            return cls("RM", k, r=rr)
        between = float(off[0]) if off.size else 0.0
        if off.size and not np.allclose(off, between):
            raise ValueError(f"{mode} tying needs equal off-diagonal entries")
        if mode == "DB":
            return cls("DB", k, diag=np.diag(rr), between=between)
        d = np.diag(rr)
        if d.size and not np.allclose(d, d[0]):
            raise ValueError("HW tying needs equal diagonal entries")
        return cls("HW", k, within=float(d[0]) if d.size else 0.0, between=between)

    @classmethod
    def from_prior(cls, mode: str, k: int, hyper: Hyper, rng) -> "LinkDensity":
        aw, bw, ab, bb = hyper.a_within, hyper.b_within, hyper.a_between, hyper.b_between
        draw = lambda a, b, size=None: np.clip(logit(rng.beta(a, b, size)), -R_CLAMP, R_CLAMP)
        if mode == "RM":
            r = np.zeros((k, k))
            iu = np.triu_indices(k, 1)
            r[iu] = draw(ab, bb, len(iu[0]))
            r = r + r.T
            r[np.diag_indices(k)] = draw(aw, bw, k)
            return cls("RM", k, r=r)
        if mode == "DB":
            return cls("DB", k, diag=draw(aw, bw, k), between=float(draw(ab, bb)))
        return cls("HW", k, within=float(draw(aw, bw)), between=float(draw(ab, bb)))

    def copy(self) -> "LinkDensity":
        return LinkDensity(self.mode, self.k,
                           r=None if self.r is None else self.r.copy(),
                           diag=None if self.diag is None else self.diag.copy(),
                           within=self.within, between=self.between)

    # dense views --------------------------------------------------------------

    def r_matrix(self) -> np.ndarray:
        if self.mode == "RM":
            return self.r
        m = np.full((self.k, self.k), self.between)
        np.fill_diagonal(m, self.diag if self.mode == "DB" else self.within)
        return m

    def _views(self):
        if self._cache is None:
            rm = self.r_matrix()
            self._cache = (expit(rm), -softplus(rm))
        return self._cache

    @property
    def rho(self) -> np.ndarray:
        return self._views()[0]

    @property
    def logp(self) -> np.ndarray:
        """``P = log(1 - rho)``, computed without cancellation."""
        return self._views()[1]

    def _touch(self):
        self._cache = None

    # free parameters ----------------------------------------------------------

    @property
    def n_free(self) -> int:
        return {"RM": self.k * (self.k + 1) // 2, "DB": self.k + 1, "HW": 2}[self.mode]

    def free(self) -> np.ndarray:
        if self.mode == "RM":
            return self.r[np.triu_indices(self.k)].copy()
        if self.mode == "DB":
            return np.append(self.diag, self.between)
        return np.array([self.within, self.between])

    def set_free(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_free,):
            raise ValueError(f"expected {self.n_free} parameters, got {theta.shape}")
        if self.mode == "RM":
            iu = np.triu_indices(self.k)
            r = np.zeros((self.k, self.k))
            r[iu] = theta
            self.r = r + np.triu(r, 1).T
        elif self.mode == "DB":
            self.diag = theta[:-1].copy()
            self.between = float(theta[-1])
        else:
            self.within, self.between = float(theta[0]), float(theta[1])
        self._touch()

    def within_role(self) -> np.ndarray:
        """True for parameters that take the within-class pseudo-counts."""
        if self.mode == "RM":
            iu = np.triu_indices(self.k)
            return iu[0] == iu[1]
        if self.mode == "DB":
            return np.append(np.ones(self.k, bool), False)
        return np.array([True, False])

    def aggregate(self, cell: np.ndarray) -> np.ndarray:
        """Sum a per-cell ``K x K`` array onto the free parameters it ties."""
        k = self.k
        if self.mode == "RM":
            sym = cell + cell.T
            np.fill_diagonal(sym, np.diag(cell))
            return sym[np.triu_indices(k)]
        d = np.diag(cell)
        off = cell.sum() - d.sum()
        if self.mode == "DB":
            return np.append(d, off)
        return np.array([d.sum(), off])

    # structural edits -----------------------------------------------------------

    def append(self, cross=None, diag=None) -> None:
        """Add one feature.

        ``cross`` holds logit values against the current ``K`` features (RM
        only) and ``diag`` the new within-class value (RM and DB).
        """
        if self.mode == "RM":
            k = self.k
            r = np.zeros((k + 1, k + 1))
            r[:k, :k] = self.r
            r[k, :k] = r[:k, k] = cross
            r[k, k] = diag
            self.r = r
        elif self.mode == "DB":
            self.diag = np.append(self.diag, diag)
        self.k += 1
        self._touch()

    def delete(self, cols) -> None:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if cols.size == 0:
            return
        keep = np.setdiff1d(np.arange(self.k), cols)
        if self.mode == "RM":
            self.r = self.r[np.ix_(keep, keep)]
        elif self.mode == "DB":
            self.diag = self.diag[keep]
        self.k = len(keep)
        self._touch()

    def permute(self, order) -> None:
        order = np.asarray(order)
        if self.mode == "RM":
            self.r = self.r[np.ix_(order, order)]
        elif self.mode == "DB":
            self.diag = self.diag[order]
        self._touch()

    def to_dict(self) -> dict:
        rho = self.rho
        return {"mode": self.mode, "k": self.k,
                "rho_lower": rho[np.tril_indices(self.k)].tolist(),
                "r_free": self.free().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinkDensity":
        out = cls(d["mode"], d["k"])
        out.set_free(np.array(d["r_free"], dtype=np.float64))
        return out


@dataclass
class FeatureMatrix:
    """Binary ``N x K`` membership matrix with its column counts."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z).astype(bool).reshape(self.z.shape[0], -1)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def counts(self) -> np.ndarray:
        return self.z.sum(axis=0).astype(np.int64)

    def pruned(self) -> "FeatureMatrix":
        return FeatureMatrix(self.z[:, self.counts > 0])

    @classmethod
    def from_partition(cls, labels, k: int | None = None) -> "FeatureMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        k = int(labels.max()) + 1 if k is None else k
        z = np.zeros((len(labels), k), dtype=bool)
        z[np.arange(len(labels)), labels] = True
        return cls(z)

    def row_classes(self) -> np.ndarray:
        """Partition vertices by identical rows (labels in first-seen order)."""
        _, first, inv = np.unique(self.z, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return order[inv.ravel()]

    def bitstrings(self) -> list[str]:
        return ["".join("1" if b else "0" for b in row) for row in self.z]

    @classmethod
    def from_bitstrings(cls, rows: list[str], k: int) -> "FeatureMatrix":
        z = np.zeros((len(rows), k), dtype=bool)
        for i, s in enumerate(rows):
            z[i] = [c == "1" for c in s]
        return cls(z)


@dataclass
class SuffStats:
    """Counts feeding the linear-time likelihood.

    ``C[k, l]`` sums ``z_ik z_jl`` over both orientations of every linked or
    unobserved dyad; ``D = Z'Z``; ``w`` caches ``z_i' P z_j`` per link.
    """

    m: np.ndarray
    C: np.ndarray
    D: np.ndarray
    w: np.ndarray

    def copy(self) -> "SuffStats":
        return SuffStats(self.m.copy(), self.C.copy(), self.D.copy(), self.w.copy())


def link_probability(z_i, z_j, rho: LinkDensity) -> float:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    return float(-np.expm1(z_i @ rho.logp @ z_j))


def log_ibp_prior(z, alpha: float) -> float:
    """Normalized IBP log-probability of the left-ordered class of ``z``.

    Includes ``exp(-alpha * H_N)`` and the ``1/prod K_h!`` factor for
    repeated columns.  Empty columns are ignored.
    """
    z = np.asarray(z).astype(bool)
    n = z.shape[0]
    z = z[:, z.sum(axis=0) > 0]
    k = z.shape[1]
    m = z.sum(axis=0)
    h_n = np.sum(1.0 / np.arange(1, n + 1))
    out = k * np.log(alpha) - alpha * h_n
    out += np.sum(gammaln(n - m + 1) + gammaln(m) - gammaln(n + 1))
    if k:
        _, reps = np.unique(z.T, axis=0, return_counts=True)
        out -= np.sum(gammaln(reps + 1))
    return float(out)


def log_ibp_prior_ordered(z, alpha: float) -> float:
    """IBP log-probability of ``z`` as an ordered matrix (columns exchangeable).

    Differs from :func:`log_ibp_prior` by ``log(K! / prod K_h!)``; this is the
    density the samplers target, since their state keeps column order.
    """
    z = np.asarray(z).astype(bool)
    n = z.shape[0]
    z = z[:, z.sum(axis=0) > 0]
    k = z.shape[1]
    m = z.sum(axis=0)
    h_n = np.sum(1.0 / np.arange(1, n + 1))
    return float(k * np.log(alpha) - gammaln(k + 1) - alpha * h_n
                 + np.sum(gammaln(n - m + 1) + gammaln(m) - gammaln(n + 1)))


def log_rho_prior(rho: LinkDensity, h: Hyper) -> float:
    theta = rho.free()
    within = rho.within_role()
    a = np.where(within, h.a_within, h.a_between)
    b = np.where(within, h.b_within, h.b_between)
    return float(np.sum(log_beta_pdf_r(theta, a, b)))


class ChainState:
    """Mutable sampler state: ``Z``, ``rho``, cached statistics and the RNG.

    ``z`` is kept as a float array so that it feeds matrix products
    directly.  Every mutation goes through :meth:`set_row`,
    :meth:`add_feature`, :meth:`delete_features` or :meth:`set_rho_free`,
    which keep :attr:`stats` equal to a from-scratch recomputation.
    """

    def __init__(self, graph: Graph, z, rho: LinkDensity, rng=None, hyper: Hyper | None = None):
        self.graph = graph
        self.z = np.asarray(z, dtype=np.float64).reshape(graph.n, -1).copy()
        if self.z.shape[1] != rho.k:
            raise ValueError(f"Z has {self.z.shape[1]} columns but rho has K={rho.k}")
        self.rho = rho
        self.rng = rng if rng is not None else np.random.default_rng()
        self.hyper = hyper if hyper is not None else Hyper()
        self.diagnostics = {"hmc_accept": 0, "hmc_total": 0, "sm_accept": 0, "sm_total": 0}
        self.step_size = self.hyper.hmc.step_size
        self.stats = self.recompute_stats()

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def m(self) -> np.ndarray:
        return self.stats.m

    @property
    def alpha(self) -> float:
        return self.hyper.alpha_for(self.n)

    def features(self) -> FeatureMatrix:
        return FeatureMatrix(self.z)

    def copy(self) -> "ChainState":
        """Deep copy sharing the graph and the random generator."""
        new = ChainState.__new__(ChainState)
        new.graph = self.graph
        new.z = self.z.copy()
        new.rho = self.rho.copy()
        new.rng = self.rng
        new.hyper = self.hyper
        new.diagnostics = dict(self.diagnostics)
        new.step_size = self.step_size
        new.stats = self.stats.copy()
        return new

    def adopt(self, other: "ChainState") -> None:
        """Take over the latent state of ``other`` (an accepted proposal)."""
        self.z = other.z
        self.rho = other.rho
        self.stats = other.stats

    # statistics ---------------------------------------------------------------

    def link_weights(self) -> np.ndarray:
        u, v = self.graph.links[:, 0], self.graph.links[:, 1]
        return pair_forms(self.z[u], self.rho.logp, self.z[v]) if self.k else np.zeros(len(u))

    def recompute_stats(self) -> SuffStats:
        g = self.graph
        zi = self.z.astype(np.int64)
        m = zi.sum(axis=0)
        D = zi.T @ zi
        blocked = np.concatenate([g.links, g.missing]) if len(g.missing) else g.links
        zu, zv = zi[blocked[:, 0]], zi[blocked[:, 1]]
        C = zu.T @ zv
        C = C + C.T
        return SuffStats(m, C, D, self.link_weights())

    def check(self, tol: float = 0.0) -> None:
        fresh = self.recompute_stats()
        for name in ("m", "C", "D"):
            if not np.array_equal(getattr(fresh, name), getattr(self.stats, name)):
                raise StateError(f"cached {name} is stale")
        if not np.allclose(fresh.w, self.stats.w, rtol=0, atol=max(tol, 1e-9)):
            raise StateError("cached link weights are stale")

    # densities ------------------------------------------------------------------

    def nonlink_counts(self) -> np.ndarray:
        """Ordered non-link co-occurrence counts ``m m' - D - C``."""
        s = self.stats
        return np.outer(s.m, s.m) - s.D - s.C

    def log_likelihood(self) -> float:
        s = self.stats
        with np.errstate(invalid="ignore"):
            links = log1mexp(s.w).sum()
        if not self.k:
            return float(links)
        return float(links + 0.5 * np.sum(self.rho.logp * self.nonlink_counts()))

    def log_joint(self) -> float:
        return (self.log_likelihood() + log_ibp_prior(self.z, self.alpha)
                + log_rho_prior(self.rho, self.hyper))

    # local likelihood -------------------------------------------------------------

    def vertex_context(self, i: int, partners=None, partner_total=None):
        """Terms of the likelihood that depend on row ``i``.

        Returns ``(A, b)`` such that the log-likelihood of every observed dyad
        touching ``i`` is ``sum(log1mexp(A @ z_i)) + b @ z_i``.  ``A`` has one
        row per link of ``i``.  With a boolean ``partners`` mask only dyads to
        masked-in vertices count; ``partner_total`` must then be the column
        sum of ``z`` over those vertices.
        """
        g = self.graph
        nb = g.neighbors(i)
        bl = g.blocked(i)
        P = self.rho.logp
        if partners is None:
            s = self.stats.m - self.z[i] - self.z[bl].sum(axis=0)
        else:
            nb = nb[partners[nb]]
            bl = bl[partners[bl]]
            s = partner_total - (self.z[i] if partners[i] else 0.0) - self.z[bl].sum(axis=0)
        return self.z[nb] @ P, P @ s

    @staticmethod
    def local_loglik(A, b, row) -> float:
        with np.errstate(invalid="ignore"):
            return float(log1mexp(A @ row).sum() + b @ row)

    # mutations ----------------------------------------------------------------------

    def set_row(self, i: int, row) -> None:
        row = np.asarray(row, dtype=np.float64)
        old = self.z[i]
        d = (row - old).astype(np.int64)
        if not d.any():
            return
        g = self.graph
        s = self.stats
        n_i = self.z[g.blocked(i)].sum(axis=0).astype(np.int64)
        oi = old.astype(np.int64)
        ni = row.astype(np.int64)
        s.m += d
        s.C += np.outer(d, n_i) + np.outer(n_i, d)
        s.D += np.outer(ni, ni) - np.outer(oi, oi)
        self.z[i] = row
        eids = g.link_ids(i)
        if len(eids):
            s.w[eids] = self.z[g.neighbors(i)] @ (self.rho.logp @ row)

    def toggle_feature(self, i: int, k: int) -> float:
        """Flip ``z_ik`` and return the exact change in log-likelihood."""
        A, b = self.vertex_context(i)
        row = self.z[i].copy()
        before = self.local_loglik(A, b, row)
        row[k] = 1.0 - row[k]
        after = self.local_loglik(A, b, row)
        self.set_row(i, row)
        return after - before

    def add_feature(self, cross=None, diag=None) -> int:
        """Append an empty column with the given link parameters; returns its index."""
        k = self.k
        self.rho.append(cross=cross, diag=diag)
        self.z = np.hstack([self.z, np.zeros((self.n, 1))])
        s = self.stats
        s.m = np.append(s.m, 0)
        s.C = np.pad(s.C, ((0, 1), (0, 1)))
        s.D = np.pad(s.D, ((0, 1), (0, 1)))
        return k

    def delete_features(self, cols) -> None:
        """Remove columns; nonempty columns trigger a full link-weight refresh."""
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if cols.size == 0:
            return
        nonempty = bool(self.stats.m[cols].any())
        keep = np.setdiff1d(np.arange(self.k), cols)
        self.z = self.z[:, keep]
        self.rho.delete(cols)
        s = self.stats
        s.m = s.m[keep]
        s.C = s.C[np.ix_(keep, keep)]
        s.D = s.D[np.ix_(keep, keep)]
        if nonempty:
            s.w = self.link_weights()

    def prune(self) -> int:
        empty = np.flatnonzero(self.stats.m == 0)
        self.delete_features(empty)
        return len(empty)

    def set_rho_free(self, theta) -> None:
        self.rho.set_free(theta)
        self.stats.w = self.link_weights()

    # serialization ---------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"version": SNAPSHOT_VERSION, "kind": "features", "n": self.n, "k": self.k,
                "z": self.features().bitstrings(), "rho": self.rho.to_dict(),
                "step_size": self.step_size, "diagnostics": self.diagnostics,
                "rng": self.rng.bit_generator.state}

    @classmethod
    def from_dict(cls, d: dict, graph: Graph, hyper: Hyper | None = None) -> "ChainState":
        if d.get("version") != SNAPSHOT_VERSION or d.get("kind") != "features":
            raise ValueError("unsupported snapshot")
        if d["n"] != graph.n:
            raise ValueError(f"snapshot has N={d['n']} but graph has N={graph.n}")
        rng = np.random.default_rng()
        if "rng" in d:
            rng.bit_generator.state = d["rng"]
        z = FeatureMatrix.from_bitstrings(d["z"], d["k"]).z
        st = cls(graph, z, LinkDensity.from_dict(d["rho"]), rng=rng, hyper=hyper)
        st.step_size = d.get("step_size", st.step_size)
        st.diagnostics.update(d.get("diagnostics", {}))
        return st

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
