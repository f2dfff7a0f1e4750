"""Link-prediction scoring: heuristic baselines, posterior averages and metrics."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import shortest_path
from scipy.stats import rankdata
from sklearn.metrics import normalized_mutual_info_score

from .latent import FeatureMatrix
from .netgraph import Graph, HeldoutSet

BASELINES = ("ComN", "DegPr", "Jacc", "ShP")
CLAMP = 1e-9


@dataclass
class ScoreTable:
    """One score per dyad; ``labels`` uses -1 for unknown."""

    dyads: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.dyads = np.asarray(self.dyads, dtype=np.int64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.dyads) == len(self.scores) == len(self.labels)):
            raise ValueError("dyads, scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def __len__(self):
        return len(self.scores)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "score", "label"])
        for (i, j), s, y in zip(self.dyads.tolist(), self.scores.tolist(), self.labels.tolist()):
            w.writerow([i, j, repr(s), "" if y < 0 else y])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScoreTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls([[int(r["i"]), int(r["j"])] for r in rows],
                   [float(r["score"]) for r in rows],
                   [int(r["label"]) if r["label"] != "" else -1 for r in rows])


# baselines ---------------------------------------------------------------------


def _neighbor_sets(g: Graph, i: int, j: int):
    return set(g.neighbors(i).tolist()), set(g.neighbors(j).tolist())


def baseline_score(g: Graph, dyad, kind: str) -> float:
    """Heuristic affinity of one dyad computed from the training graph only."""
    i, j = (int(x) for x in dyad)
    if kind == "ComN":
        a, b = _neighbor_sets(g, i, j)
        return float(len(a & b))
    if kind == "DegPr":
        deg = g.degree()
        return float(deg[i] * deg[j])
    if kind == "Jacc":
        a, b = _neighbor_sets(g, i, j)
        union = len(a | b)
        return len(a & b) / union if union else 0.0
    if kind == "ShP":
        d = shortest_path(g.adjacency(), unweighted=True, directed=False, indices=[i])[0, j]
        return 1.0 / d if np.isfinite(d) and d > 0 else 0.0
    raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")


def baseline_scores(g: Graph, dyads, kind: str) -> np.ndarray:
    """Vectorized :func:`baseline_score` over many dyads."""
    d = np.asarray(dyads, dtype=np.int64).reshape(-1, 2)
    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")
    if len(d) == 0:
        return np.zeros(0)
    A = g.adjacency()
    deg = g.degree().astype(np.float64)
    if kind == "DegPr":
        return deg[d[:, 0]] * deg[d[:, 1]]
    if kind in ("ComN", "Jacc"):
        common = np.asarray(A[d[:, 0]].multiply(A[d[:, 1]]).sum(axis=1)).ravel()
        if kind == "ComN":
            return common
        union = deg[d[:, 0]] + deg[d[:, 1]] - common
        return np.divide(common, union, out=np.zeros_like(common), where=union > 0)
    src, inv = np.unique(d[:, 0], return_inverse=True)
    dist = shortest_path(A, unweighted=True, directed=False, indices=src)
    out = dist[inv, d[:, 1]]
    return np.where(np.isfinite(out) & (out > 0), 1.0 / np.where(out > 0, out, 1.0), 0.0)


def baseline_table(g: Graph, heldout: HeldoutSet, kind: str) -> ScoreTable:
    return ScoreTable(heldout.dyads, baseline_scores(g, heldout.dyads, kind), heldout.labels)


# model predictions ----------------------------------------------------------------


def posterior_predict(snapshots, heldout: HeldoutSet) -> ScoreTable:
    """Average per-snapshot link probabilities over held-out dyads."""
    snapshots = list(snapshots)
    if not snapshots:
        raise ValueError("no posterior snapshots to average")
    total = np.zeros(len(heldout))
    for s in snapshots:
        total += s.predict(heldout.dyads)
    return ScoreTable(heldout.dyads, total / len(snapshots), heldout.labels)


# metrics ------------------------------------------------------------------------------


def _labeled(t: ScoreTable):
    keep = t.labels >= 0
    return t.scores[keep], t.labels[keep]


def auc(t: ScoreTable) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    s, y = _labeled(t)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative dyad")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def predictive_loglik(t: ScoreTable) -> float:
    s, y = _labeled(t)
    s = np.clip(s, CLAMP, 1.0 - CLAMP)
    return float(np.sum(y * np.log(s) + (1 - y) * np.log1p(-s)))


def _as_labels(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.row_classes()
    x = np.asarray(x)
    if x.ndim == 2:
        return FeatureMatrix(x).row_classes()
    return x


def nmi(a, b) -> float:
    """Arithmetic-mean NMI; feature matrices are reduced to distinct-row classes."""
    la, lb = _as_labels(a), _as_labels(b)
    if len(la) != len(lb):
        raise ValueError("partitions cover different vertex counts")
    with warnings.catch_warnings():
        # sklearn mistakes many distinct labels for a regression target
        warnings.filterwarnings("ignore", message="The number of unique classes", category=UserWarning)
        return float(normalized_mutual_info_score(la, lb, average_method="arithmetic"))


def summary_json(model: str, split_seed: int, table: ScoreTable) -> str:
    return json.dumps({"model": model, "split_seed": split_seed,
                       "auc": auc(table), "pll": predictive_loglik(table)}, sort_keys=True)
