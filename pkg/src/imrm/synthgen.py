"""Synthetic block-structured networks with known single or double memberships."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np

from .latent import FeatureMatrix, LinkDensity
from .netgraph import Graph

log = logging.getLogger(__name__)

FAMILIES = ("HW", "DB", "RM")


class ParamError(ValueError):
    """Generator parameters do not match the requested family."""


@dataclass
class GroundTruth:
    """Generating memberships and class-link probabilities.

    ``rho`` is the dense generating matrix (entries may be exactly 0 or 1,
    which an inference-side :class:`LinkDensity` would clamp).
    """

    z: FeatureMatrix
    rho: np.ndarray
    mode: str
    labels: np.ndarray | None = None
    collapsed: int = 0
    base_k: int = 0

    def link_density(self) -> LinkDensity:
        """Clamped inference-side view; falls back to RM when the tying does not hold."""
        try:
            return LinkDensity.from_rho(self.mode, self.rho)
        except ValueError:
            return LinkDensity.from_rho("RM", self.rho)

    def class_sets(self) -> list[frozenset]:
        """Per-vertex set of base classes (feature ``k + c`` read as class ``c``)."""
        k = self.base_k or self.z.k
        return [frozenset(int(c) % k for c in np.flatnonzero(row)) for row in self.z.z]

    def partition(self) -> np.ndarray:
        """Vertices grouped by identical membership rows."""
        return self.z.row_classes()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("vertex,features\n")
        for i, row in enumerate(self.z.z):
            buf.write(f'{i},"{",".join(str(k) for k in np.flatnonzero(row))}"\n')
        return buf.getvalue()


def rm_preset(k: int) -> np.ndarray:
    """Stand-in RM matrix: diagonal 0.2 to 1, off-diagonal graded 0 to 0.3 by class distance."""
    diag = np.linspace(0.2, 1.0, k) if k > 1 else np.array([1.0])
    dist = np.abs(np.subtract.outer(np.arange(k), np.arange(k)))
    off = 0.3 * (1.0 - (dist - 1) / max(k - 2, 1)) if k > 1 else np.zeros((1, 1))
    rho = np.where(dist == 0, diag[:, None] * np.ones(k), np.clip(off, 0.0, 0.3))
    return (rho + rho.T) / 2


def block_matrix(model: str, k: int, rho_c=None, rho_0: float = 0.0, rho=None) -> np.ndarray:
    """Dense ``k x k`` generating matrix for a family and its parameters."""
    model = model.upper()
    if model not in FAMILIES:
        raise ParamError(f"unknown family {model!r}")
    if model == "HW":
        if rho_c is None:
            raise ParamError("HW needs a scalar rho_c")
        out = np.full((k, k), float(rho_0))
        np.fill_diagonal(out, float(np.asarray(rho_c).ravel()[0]))
    elif model == "DB":
        if rho_c is None:
            raise ParamError("DB needs per-class rho_c")
        d = np.broadcast_to(np.asarray(rho_c, dtype=np.float64), (k,))
        out = np.full((k, k), float(rho_0))
        np.fill_diagonal(out, d)
    else:
        out = rm_preset(k) if rho is None else np.asarray(rho, dtype=np.float64)
        if out.shape != (k, k) or not np.allclose(out, out.T):
            raise ParamError("RM needs a symmetric k x k rho")
    if np.any(out < 0) or np.any(out > 1):
        raise ParamError("link probabilities must lie in [0, 1]")
    return out


def _sample_blocks(R: np.ndarray, size: int, rng) -> np.ndarray:
    """Bernoulli draw for every unordered pair of contiguous equal-size blocks, one block pair at a time."""
    k = R.shape[0]
    out = []
    for a in range(k):
        for b in range(a, k):
            if a == b:
                iu = np.triu_indices(size, 1)
                hit = rng.random(len(iu[0])) < R[a, a]
                out.append(np.column_stack([iu[0][hit], iu[1][hit]]) + a * size)
            else:
                ii, jj = np.nonzero(rng.random((size, size)) < R[a, b])
                out.append(np.column_stack([ii + a * size, jj + b * size]))
    return np.concatenate(out) if out else np.zeros((0, 2), np.int64)


def gen_single(model: str, k: int, size_per_class: int, *, rho_c=None, rho_0: float = 0.0,
               rho=None, seed: int = 0) -> tuple[Graph, GroundTruth]:
    """Contiguous blocks of ``size_per_class`` vertices; each dyad is Bernoulli(rho[c_i, c_j])."""
    if k < 1 or size_per_class < 1:
        raise ParamError("need k >= 1 and size_per_class >= 1")
    R = block_matrix(model, k, rho_c, rho_0, rho)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), size_per_class)
    g = Graph(len(labels), _sample_blocks(R, size_per_class, rng))
    truth = GroundTruth(FeatureMatrix.from_partition(labels, k), R, model.upper(), labels, base_k=k)
    return g, truth


def random_derangement(n: int, rng) -> np.ndarray:
    """Uniform permutation without fixed points, by rejection."""
    if n < 2:
        raise ParamError("a derangement needs at least 2 vertices")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def gen_multi(model: str, k: int, size_per_class: int, *, rho_c=None, rho_0: float = 0.0,
              rho=None, seed: int = 0) -> tuple[Graph, GroundTruth]:
    """Superpose a single-membership graph Y with a vertex-deranged copy: ``Y or R Y R'``.

    Vertex ``i`` links as itself and as its image ``perm[i]``, so its true
    features are its own class and, shifted by ``k``, its image's class.
    Vertices whose two classes coincide are counted in ``collapsed``;
    :meth:`GroundTruth.class_sets` gives them a single class.
    """
    model = model.upper().removeprefix("M")
    g0, t0 = gen_single(model, k, size_per_class, rho_c=rho_c, rho_0=rho_0, rho=rho, seed=seed)
    rng = np.random.default_rng([seed, 1])
    n = g0.n
    perm = random_derangement(n, rng)
    # (R Y R')_{ij} = Y_{perm^-1(i), perm^-1(j)}: vertex perm[a] inherits a's links
    moved = perm[g0.links]
    g = Graph(n, np.concatenate([g0.links, moved]))
    labels = t0.labels
    inv = np.argsort(perm)
    second = labels[inv]
    z = np.zeros((n, 2 * k), dtype=bool)
    z[np.arange(n), labels] = True
    z[np.arange(n), k + second] = True
    # the two copies never interact, so the cross block is exactly zero
    R = np.zeros((2 * k, 2 * k))
    R[:k, :k] = R[k:, k:] = t0.rho
    collapsed = int(np.sum(labels == second))
    if collapsed:
        log.info("%d vertices have their image in their own class", collapsed)
    return g, GroundTruth(FeatureMatrix(z), R, model, labels, collapsed, base_k=k)
