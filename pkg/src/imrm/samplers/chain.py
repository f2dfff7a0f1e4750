"""Chain driver: initialization, per-iteration schedule, traces and snapshots."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from ..latent import ChainState, Hyper, LinkDensity, StateError, pair_forms
from ..netgraph import Graph
from .gibbs import gibbs_sweep_z
from .hmc import hmc_update_rho
from .irm import Partition, irm_collapsed_sweep, irm_split_merge
from .splitmerge import split_merge_move

# model name -> (tying mode, multiple membership)
MODELS = {
    "IMHW": ("HW", True), "IMDB": ("DB", True), "IMRM": ("RM", True),
    "IHW": ("HW", False), "IDB": ("DB", False), "IRM": ("RM", False),
}

TRACE_HEADER = "iter,K,logjoint,hmc_acc,sm_acc,ms"


class ConfigError(ValueError):
    """Unknown model or inconsistent chain settings."""


def resolve_model(name: str) -> tuple[str, bool]:
    key = name.upper()
    if key not in MODELS:
        raise ConfigError(f"unknown model {name!r}; choose from {sorted(MODELS)}")
    return MODELS[key]


@dataclass
class TraceRecord:
    iteration: int
    k: int
    logjoint: float
    hmc_acc: float
    sm_acc: float
    wall_time_ms: float = 0.0

    def csv_row(self, timing: bool = False) -> str:
        ms = f"{self.wall_time_ms:.3f}" if timing else "0"
        return f"{self.iteration},{self.k},{self.logjoint!r},{self.hmc_acc!r},{self.sm_acc!r},{ms}"


@dataclass
class Snapshot:
    """Thinned posterior sample reduced to what prediction needs."""

    iteration: int
    kind: str
    z: np.ndarray | None = None
    rho: np.ndarray | None = None
    labels: np.ndarray | None = None

    @classmethod
    def of(cls, state, iteration: int) -> "Snapshot":
        if isinstance(state, Partition):
            return cls(iteration, "partition", labels=state.assign.copy(), rho=state.posterior_mean_rho())
        return cls(iteration, "features", z=state.z.astype(bool), rho=state.rho.rho.copy())

    @property
    def k(self) -> int:
        return 0 if self.rho is None else self.rho.shape[0]

    def predict(self, dyads) -> np.ndarray:
        """Link probability of each ``(i, j)`` row of ``dyads``."""
        d = np.asarray(dyads, dtype=np.int64).reshape(-1, 2)
        if self.kind == "partition":
            return self.rho[self.labels[d[:, 0]], self.labels[d[:, 1]]]
        if self.k == 0:
            return np.zeros(len(d))
        with np.errstate(divide="ignore"):
            P = np.log1p(-self.rho)
        zu = self.z[d[:, 0]].astype(np.float64)
        zv = self.z[d[:, 1]].astype(np.float64)
        return -np.expm1(pair_forms(zu, P, zv))

    def to_dict(self) -> dict:
        out = {"iteration": self.iteration, "kind": self.kind, "rho": self.rho.tolist()}
        if self.kind == "partition":
            out["labels"] = self.labels.tolist()
        else:
            out["z"] = ["".join("1" if b else "0" for b in row) for row in self.z]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        rho = np.array(d["rho"], dtype=np.float64).reshape(len(d["rho"]), -1)
        if d["kind"] == "partition":
            return cls(d["iteration"], "partition", rho=rho, labels=np.array(d["labels"], dtype=np.int64))
        k = rho.shape[0]
        z = np.array([[c == "1" for c in row] for row in d["z"]], dtype=bool).reshape(len(d["z"]), k)
        return cls(d["iteration"], "features", z=z, rho=rho)


@dataclass
class ChainResult:
    model: str
    seed: int
    trace: list[TraceRecord] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    state: object = None

    def trace_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        buf.write(TRACE_HEADER + "\n")
        for r in self.trace:
            buf.write(r.csv_row(timing) + "\n")
        return buf.getvalue()

    def snapshots_json(self, meta: dict | None = None) -> str:
        d = {"model": self.model, "seed": self.seed, "snapshots": [s.to_dict() for s in self.snapshots]}
        d.update(meta or {})
        return json.dumps(d, sort_keys=True)


def init_state(g: Graph, model: str, hyper: Hyper, seed: int):
    """Random start: each vertex in one uniform class among ``k_init``, empties dropped."""
    mode, multi = resolve_model(model)
    rng = np.random.default_rng(seed)
    k0 = max(1, min(hyper.k_init, hyper.k_max or hyper.k_init))
    labels = rng.integers(k0, size=g.n)
    if not multi:
        return Partition(g, labels, mode, hyper, rng)
    z = np.zeros((g.n, k0))
    z[np.arange(g.n), labels] = 1.0
    rho = LinkDensity.from_prior(mode, k0, hyper, rng)
    state = ChainState(g, z, rho, rng, hyper)
    state.prune()
    return state


def init_from_partition(g: Graph, model: str, hyper: Hyper, labels, seed: int):
    """Start a chain from given class labels (e.g. an IRM fit)."""
    mode, multi = resolve_model(model)
    rng = np.random.default_rng(seed)
    if not multi:
        return Partition(g, labels, mode, hyper, rng)
    _, labels = np.unique(np.asarray(labels), return_inverse=True)
    k = int(labels.max()) + 1
    z = np.zeros((g.n, k))
    z[np.arange(g.n), labels] = 1.0
    return ChainState(g, z, LinkDensity.from_prior(mode, k, hyper, rng), rng, hyper)


def _rate(acc: int, total: int) -> float:
    return acc / total if total else 0.0


def step(state, hyper: Hyper, adapt: bool = False) -> None:
    """One iteration: split-merge, a Gibbs sweep, then (feature models) HMC."""
    if isinstance(state, Partition):
        for _ in range(hyper.split_merge_per_iter):
            irm_split_merge(state, hyper)
        irm_collapsed_sweep(state, hyper)
        return
    for _ in range(hyper.split_merge_per_iter):
        split_merge_move(state, hyper)
    gibbs_sweep_z(state, hyper)
    accepted = hmc_update_rho(state, hyper)
    if adapt:
        # Robbins-Monro style nudge with equilibrium at the target rate
        target = hyper.hmc.adapt_target
        state.step_size *= float(np.exp(0.05 * ((1.0 if accepted else 0.0) - target)))
        state.step_size = float(np.clip(state.step_size, 1e-4, 1.0))


def run_chain(g: Graph, model: str, hyper: Hyper | None = None, seed: int = 0, *,
              state=None, start_iteration: int = 0, check_every: int = 0,
              on_iteration=None) -> ChainResult:
    """Run iterations ``start_iteration + 1 .. hyper.iterations``.

    Snapshots are kept after burn-in every ``thin`` iterations.  Passing a
    ``state`` (for instance one restored from a snapshot) resumes that chain.
    ``check_every > 0`` compares cached and recomputed statistics on that
    schedule and raises :class:`StateError` on drift.
    """
    h = hyper if hyper is not None else Hyper()
    mode, multi = resolve_model(model)
    if state is None:
        state = init_state(g, model, h, seed)
    elif isinstance(state, Partition) == multi:
        raise ConfigError(f"snapshot kind does not fit model {model}")
    elif (state.mode if isinstance(state, Partition) else state.rho.mode) != mode:
        raise ConfigError(f"snapshot tying mode does not fit model {model}")
    burn = int(h.burn_in * h.iterations)
    result = ChainResult(model.upper(), seed, state=state)
    for it in range(start_iteration + 1, h.iterations + 1):
        t0 = time.perf_counter()
        step(state, h, adapt=multi and it <= burn)
        ms = 1e3 * (time.perf_counter() - t0)
        if check_every and it % check_every == 0:
            _check(state)
        d = state.diagnostics
        lj = state.log_joint()
        if not np.isfinite(lj):
            raise StateError(f"non-finite log joint at iteration {it}")
        rec = TraceRecord(it, state.k, lj, _rate(d.get("hmc_accept", 0), d.get("hmc_total", 0)),
                          _rate(d["sm_accept"], d["sm_total"]), ms)
        result.trace.append(rec)
        if it > burn and (it - burn) % h.thin == 0:
            result.snapshots.append(Snapshot.of(state, it))
        if on_iteration is not None:
            on_iteration(it, state, rec)
    return result


def _check(state) -> None:
    if isinstance(state, Partition):
        state.check()
        return
    state.check()
    fresh = ChainState(state.graph, state.z, state.rho.copy(), state.rng, state.hyper)
    if abs(fresh.log_joint() - state.log_joint()) > 1e-8 * max(1.0, abs(fresh.log_joint())):
        raise StateError("cached log joint drifted from recomputation")


def save_state(state, iteration: int) -> str:
    d = state.to_dict()
    d["iteration"] = iteration
    return json.dumps(d, sort_keys=True)


def load_state(text: str, g: Graph, hyper: Hyper | None = None):
    """Restore ``(state, iteration)`` saved by :func:`save_state`."""
    d = json.loads(text)
    if d.get("kind") == "partition":
        state = Partition.from_dict(d, g, hyper)
    else:
        state = ChainState.from_dict(d, g, hyper)
    return state, int(d.get("iteration", 0))
