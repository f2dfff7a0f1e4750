import json

import numpy as np
import pytest

from conftest import random_graph
from imrm.latent import ChainState, Hyper, LinkDensity
from imrm.netgraph import Graph
from imrm.samplers.chain import (TRACE_HEADER, ConfigError, Snapshot, init_from_partition, init_state,
                                 load_state, resolve_model, run_chain, save_state)
from imrm.synthgen import gen_single

MODELS = ["IMHW", "IMDB", "IMRM", "IHW", "IDB", "IRM"]


@pytest.fixture(scope="module")
def small():
    g, _ = gen_single("HW", 2, 8, rho_c=0.8, rho_0=0.1, seed=2)
    return g


def test_resolve_model():
    assert resolve_model("imrm") == ("RM", True)
    assert resolve_model("IHW") == ("HW", False)
    with pytest.raises(ConfigError):
        resolve_model("MMSB")


@pytest.mark.parametrize("model", MODELS)
def test_same_seed_same_trace(model, small):
    h = Hyper(iterations=12, thin=2, k_init=5)
    a = run_chain(small, model, h, seed=7)
    b = run_chain(small, model, h, seed=7)
    assert a.trace_csv() == b.trace_csv()
    assert a.snapshots_json() == b.snapshots_json()
    assert a.trace_csv().splitlines()[0] == TRACE_HEADER


def test_different_seeds_differ(small):
    h = Hyper(iterations=6, k_init=5)
    assert run_chain(small, "IMRM", h, seed=1).trace_csv() != run_chain(small, "IMRM", h, seed=2).trace_csv()


@pytest.mark.parametrize("model", ["IMDB", "IRM"])
def test_resume_continues_exactly(model, small):
    h = Hyper(iterations=16, thin=2, k_init=4)
    saved = {}

    def grab(it, state, rec):
        if it == 9:
            saved["text"] = save_state(state, it)

    full = run_chain(small, model, h, seed=3, on_iteration=grab)
    state, start = load_state(saved["text"], small, h)
    assert start == 9
    rest = run_chain(small, model, h, seed=3, state=state, start_iteration=start)
    assert rest.trace[0].iteration == 10
    tail = full.trace_csv().splitlines()[10:]
    assert rest.trace_csv().splitlines()[1:] == tail
    assert [s.iteration for s in rest.snapshots] == [s.iteration for s in full.snapshots if s.iteration > 9]


def test_resume_rejects_wrong_kind(small):
    h = Hyper(iterations=2, k_init=3)
    state = init_state(small, "IRM", h, 0)
    with pytest.raises(ConfigError):
        run_chain(small, "IMRM", h, state=state)
    state = init_state(small, "IMHW", h, 0)
    with pytest.raises(ConfigError):
        run_chain(small, "IMRM", h, state=state)


def test_irm_trace_has_no_hmc(small):
    res = run_chain(small, "IRM", Hyper(iterations=5, k_init=3), seed=0)
    assert all(r.hmc_acc == 0.0 for r in res.trace)


def test_snapshot_schedule(small):
    h = Hyper(iterations=20, thin=3, burn_in=0.5)
    res = run_chain(small, "IHW", h, seed=0)
    assert [s.iteration for s in res.snapshots] == [13, 16, 19]


def test_init_one_feature_per_vertex(small):
    s = init_state(small, "IMRM", Hyper(k_init=50), seed=4)
    assert np.all(s.z.sum(axis=1) == 1)
    assert np.all(s.m > 0)
    assert s.k <= 16


def test_init_from_partition(small):
    s = init_from_partition(small, "IMHW", Hyper(), [3, 3, 1] + [1] * 13, seed=0)
    assert s.k == 2 and np.all(s.z.sum(axis=1) == 1)


def test_check_every_passes(small):
    run_chain(small, "IMRM", Hyper(iterations=6, k_init=4), seed=5, check_every=1)
    run_chain(small, "IRM", Hyper(iterations=6, k_init=4), seed=5, check_every=1)


def test_cached_logjoint_matches_recomputation(small):
    h = Hyper(iterations=1, k_init=6)
    state = init_state(small, "IMRM", h, 0)
    for it in range(8):
        run_chain(small, "IMRM", h, seed=0, state=state, start_iteration=0)
        fresh = ChainState(small, state.z, state.rho.copy(), hyper=h)
        assert abs(fresh.log_joint() - state.log_joint()) <= 1e-8 * max(1, abs(fresh.log_joint()))


def test_feature_snapshot_prediction():
    g = Graph(3, np.array([(0, 1)]))
    s = ChainState(g, np.array([[1, 0], [1, 1], [0, 1]]), LinkDensity.from_rho("RM", [[0.5, 0.2], [0.2, 0.4]]))
    snap = Snapshot.of(s, 1)
    p = snap.predict([[0, 1], [0, 2], [1, 2]])
    np.testing.assert_allclose(p, [1 - 0.5 * 0.8, 0.2, 1 - 0.8 * 0.6])
    back = Snapshot.from_dict(json.loads(json.dumps(snap.to_dict())))
    np.testing.assert_array_equal(back.predict([[1, 2]]), snap.predict([[1, 2]]))


def test_timing_column_optional(small):
    res = run_chain(small, "IHW", Hyper(iterations=2, k_init=3), seed=0)
    assert all(line.endswith(",0") for line in res.trace_csv().splitlines()[1:])
    assert not res.trace_csv(timing=True).splitlines()[1].endswith(",0")


@pytest.mark.slow
def test_prior_marginal_small():
    """All dyads missing: E[K] of the full kernel suite equals alpha * H_N."""
    n = 5
    g = Graph(n, np.zeros((0, 2), int), np.array([(i, j) for i in range(n) for j in range(i + 1, n)]))
    h = Hyper(alpha=1.0, iterations=3000, burn_in=0.1, k_init=3)
    res = run_chain(g, "IMRM", h, seed=11)
    k = np.array([r.k for r in res.trace[300:]], dtype=float)
    batches = np.array_split(k, 30)
    se = np.std([b.mean() for b in batches], ddof=1) / np.sqrt(30)
    target = sum(1 / j for j in range(1, n + 1))
    assert abs(k.mean() - target) < 4 * se
