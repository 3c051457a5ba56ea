import math

import numpy as np
import pytest

from adaptspace.simnet import NetworkState, UncertaintyProfile, initial_state
from adaptspace.verify import Verifier, VerifierConfig, verify_batch, verify_option

from conftest import chain


@pytest.fixture(scope="module")
def v1_state(topo_v1):
    return initial_state(UncertaintyProfile.for_topology(topo_v1))


def test_runs_floor():
    with pytest.raises(ValueError):
        VerifierConfig(runs_per_option=29)


def test_loss_free_verification():
    topo = chain(2, snr=1.0)
    st = NetworkState(0, np.array([1.0, 1.0]), np.array([0, 5]))
    res = verify_option(topo, st, topo.space()[0], VerifierConfig(runs_per_option=1000))
    assert res.qualities.packet_loss == 0.0
    assert res.duration > 0 and res.wall_time >= 0


def test_verification_is_repeatable(topo_v1, v1_state):
    cfg = VerifierConfig(seed=3)
    opt = topo_v1.space()[42]
    assert verify_option(topo_v1, v1_state, opt, cfg).qualities == verify_option(topo_v1, v1_state, opt, cfg).qualities


def test_estimate_within_bound_of_high_run_reference():
    topo = chain(1, snr=-12.0, load=6)
    st = NetworkState(0, np.array([-12.0]), np.array([6]))
    opt = topo.space()[0]
    est = verify_option(topo, st, opt, VerifierConfig(runs_per_option=500, seed=1)).qualities.packet_loss
    ref = verify_option(topo, st, opt, VerifierConfig(runs_per_option=50_000, seed=2)).qualities.packet_loss
    p = 0.3
    assert abs(ref - p) < 0.005
    assert abs(est - ref) <= 3 * math.sqrt(p * (1 - p) / (6 * 500))


def test_empty_batch():
    assert verify_batch(chain(), None, [], VerifierConfig()) == ({}, 0.0)


def test_batch_matches_single_calls_and_is_additive(topo_v1, v1_state):
    cfg = VerifierConfig(runs_per_option=100)
    opts = list(topo_v1.space())[:12]
    batch, dur = verify_batch(topo_v1, v1_state, opts, cfg)
    assert len(batch) == 12
    singles = [verify_option(topo_v1, v1_state, o, cfg) for o in opts]
    assert batch == {o.option_id: s.qualities for o, s in zip(opts, singles)}
    assert dur == pytest.approx(sum(s.duration for s in singles))
    assert dur == pytest.approx(12 * cfg.option_cost(topo_v1))


def test_threads_do_not_change_results(topo_v1, v1_state):
    cfg = VerifierConfig(runs_per_option=100)
    opts = list(topo_v1.space())
    one, _ = verify_batch(topo_v1, v1_state, opts, cfg, threads=1)
    four, _ = verify_batch(topo_v1, v1_state, opts, cfg, threads=4)
    assert one == four


def test_verification_leaves_state_untouched(topo_v1, v1_state):
    snr, load, buf = v1_state.snr.copy(), v1_state.load.copy(), v1_state.buffers.copy()
    verify_batch(topo_v1, v1_state, list(topo_v1.space())[:5], VerifierConfig(runs_per_option=50))
    np.testing.assert_array_equal(v1_state.snr, snr)
    np.testing.assert_array_equal(v1_state.load, load)
    np.testing.assert_array_equal(v1_state.buffers, buf)


def test_memoizing_verifier_charges_every_request(topo_v1, v1_state):
    cfg = VerifierConfig(runs_per_option=60)
    ver = Verifier(topo_v1, cfg)
    opts = list(topo_v1.space())[:3]
    r1, c1 = ver.verify(v1_state, opts)
    r2, c2 = ver.verify(v1_state, opts)
    assert r1 == r2 and c1 == c2 == pytest.approx(3 * cfg.option_cost(topo_v1))
    wall = ver.wall_time
    assert ver.peek(v1_state, opts) == r1 and ver.wall_time == wall
