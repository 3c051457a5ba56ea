import math

import numpy as np
import pytest

from adaptspace.domain import AdaptationOption, ContractViolation
from adaptspace.simnet import (
    Link,
    Mote,
    NetworkState,
    NetworkTopology,
    UncertaintyProfile,
    advance_cycle,
    apply_option,
    execute_cycle,
    ground_truth_qualities,
    initial_state,
    load_topology,
    loss_probability,
    parse_topology,
    simulate,
)

from conftest import chain, diamond


def state_for(topo, snr=None, load=None):
    snr = np.array([l.snr for l in topo.links]) if snr is None else np.asarray(snr, dtype=float)
    load = np.array([m.load for m in topo.motes]) if load is None else np.asarray(load)
    return NetworkState(0, snr, load.astype(np.int64))


def only_option(topo):
    return topo.space()[0]


# --- uncertainty dynamics ---------------------------------------------------------------


def test_zero_drift_keeps_state(topo_v1):
    prof = UncertaintyProfile.for_topology(topo_v1, snr_step=0.0, load_step=0.0)
    s0 = initial_state(prof)
    s1 = advance_cycle(s0, prof)
    assert s1.cycle_index == 1
    np.testing.assert_array_equal(s1.snr, s0.snr)
    np.testing.assert_array_equal(s1.load, s0.load)


def test_zero_drift_off_baseline_without_reversion(topo_v1):
    prof = UncertaintyProfile.for_topology(topo_v1, snr_step=0.0, load_step=0.0, reversion=0.0)
    s0 = NetworkState(4, np.linspace(-20, 10, topo_v1.n_links), np.arange(len(topo_v1.motes)) % 10)
    s1 = advance_cycle(s0, prof)
    assert s1.cycle_index == 5
    np.testing.assert_array_equal(s1.snr, s0.snr)
    np.testing.assert_array_equal(s1.load, s0.load)


def test_advance_is_deterministic(topo_v1):
    prof = UncertaintyProfile.for_topology(topo_v1, rng_seed=3)
    s = advance_cycle(advance_cycle(initial_state(prof), prof), prof)
    a, b = advance_cycle(s, prof), advance_cycle(s, prof)
    np.testing.assert_array_equal(a.snr, b.snr)
    np.testing.assert_array_equal(a.load, b.load)
    other = advance_cycle(s, UncertaintyProfile.for_topology(topo_v1, rng_seed=4))
    assert not np.array_equal(a.snr, other.snr)


def test_long_walk_stays_in_range(topo_v1):
    # exaggerated steps so that both bounds are actually reached
    prof = UncertaintyProfile.for_topology(topo_v1, snr_step=25.0, load_step=6.0, reversion=0.05)
    s = initial_state(prof)
    snr_lo, snr_hi, load_lo, load_hi = math.inf, -math.inf, 10**9, -1
    for _ in range(10_000):
        s = advance_cycle(s, prof)
        snr_lo, snr_hi = min(snr_lo, s.snr.min()), max(snr_hi, s.snr.max())
        load_lo, load_hi = min(load_lo, s.load.min()), max(load_hi, s.load.max())
    assert -40.0 <= snr_lo and snr_hi <= 15.0
    assert 0 <= load_lo and load_hi <= 10
    assert snr_lo == -40.0 and snr_hi == 15.0 and load_lo == 0 and load_hi == 10
    assert s.load.dtype == np.int64


# --- quality model -------------------------------------------------------------------------


def test_loss_probability_curve():
    np.testing.assert_allclose(loss_probability([-60, -40, -20, -0.0, 0, 7]), [1, 1, 0.5, 0, 0, 0])


def test_loss_free_network_has_no_packet_loss(topo_v1):
    motes = [Mote(m.mote_id, tuple(Link(l.source, l.target, l.power, 3.0) for l in m.links), m.load, 10**6)
             for m in topo_v1.motes]
    topo = NetworkTopology(motes, 0)
    q = ground_truth_qualities(topo, state_for(topo), topo.space()[17], runs=200, seed=5)
    assert q.packet_loss == 0.0 and q.latency == 0.0


def test_single_hop_loss_matches_binomial_bound():
    topo = chain(1, snr=-20.0, load=5)
    runs = 4000
    q = ground_truth_qualities(topo, state_for(topo), only_option(topo), runs, seed=11)
    sigma = math.sqrt(0.5 * 0.5 / (5 * runs))
    assert abs(q.packet_loss - 0.5) <= 3 * sigma


def test_two_hop_loss_compounds():
    topo = chain(2, snr=-10.0, load=8)
    runs = 4000
    q = ground_truth_qualities(topo, state_for(topo), only_option(topo), runs, seed=2)
    p = 1 - 0.75 * 0.75
    assert abs(q.packet_loss - p) <= 3 * math.sqrt(p * (1 - p) / (8 * runs))


def test_split_follows_distribution_factors():
    topo = diamond(load=10)
    opt = AdaptationOption(0, ((60, 40),))
    runs = 5000
    out = simulate(topo, state_for(topo), opt, runs, seed=9)
    # via mote 1: costs 1.3 + 1.4, via mote 2: 1.7 + 1.6
    per_packet = np.array([1.3 + 1.4, 1.7 + 1.6])
    mean = 10 * (0.6 * per_packet[0] + 0.4 * per_packet[1])
    sd = math.sqrt(10 * 0.6 * 0.4) * (per_packet[1] - per_packet[0])
    assert abs(out.energy.mean() - mean) <= 3 * sd / math.sqrt(runs)


def test_pure_routes_are_deterministic():
    topo = diamond(load=10)
    for pair, cost in (((100, 0), 10 * (1.3 + 1.4)), ((0, 100), 10 * (1.7 + 1.6))):
        out = simulate(topo, state_for(topo), AdaptationOption(0, (pair,)), 50, seed=1)
        np.testing.assert_allclose(out.energy, cost)


def test_doubling_power_increases_energy(topo_v1):
    low = topo_v1.with_powers(0.5)
    high = low.with_powers(2.0)
    st = state_for(topo_v1)
    for oid in (0, 77, 215):
        a = ground_truth_qualities(low, st, low.space()[oid], 300, seed=[1, oid])
        b = ground_truth_qualities(high, st, high.space()[oid], 300, seed=[1, oid])
        assert b.energy > a.energy
        assert b.packet_loss == a.packet_loss  # same packet stream, power only changes cost


def test_energy_is_additive_over_leaf_traffic():
    topo = chain(3, snr=0.0, power=4, load=7)
    e = ground_truth_qualities(topo, state_for(topo), only_option(topo), 20).energy
    assert e == pytest.approx(7 * 3 * 1.4)
    silent = ground_truth_qualities(topo, state_for(topo, load=[0, 0, 0]), only_option(topo), 20).energy
    assert silent == 0.0
    # a leaf with no traffic and no descendants adds nothing
    extra = NetworkTopology(list(topo.motes) + [Mote(4, (Link(4, 1, 9, 0.0),), 0, 10)], 0)
    assert ground_truth_qualities(extra, state_for(extra), only_option(extra), 20).energy == pytest.approx(e)


def test_capacity_overflow_sets_latency():
    topo = chain(1, snr=0.0, load=10, capacity=8)
    q, after = execute_cycle(topo, state_for(topo), only_option(topo), seed=0)
    assert q.latency == pytest.approx(2 / 10)
    assert after.buffers.tolist() == [2]


def test_deterministic_given_seed(topo_v1):
    st = state_for(topo_v1)
    opt = topo_v1.space()[100]
    assert ground_truth_qualities(topo_v1, st, opt, 100, seed=4) == ground_truth_qualities(topo_v1, st, opt, 100, seed=4)
    assert ground_truth_qualities(topo_v1, st, opt, 100, seed=4) != ground_truth_qualities(topo_v1, st, opt, 100, seed=5)


def test_rejects_option_of_other_structure(topo_v1):
    with pytest.raises(ContractViolation):
        ground_truth_qualities(topo_v1, state_for(topo_v1), AdaptationOption(0, ((20, 80),)), 10)
    with pytest.raises(ContractViolation):
        ground_truth_qualities(topo_v1, state_for(topo_v1), topo_v1.space()[0], 0)


# --- routing table -------------------------------------------------------------------------


def test_apply_option_examples():
    topo = diamond()
    assert apply_option(topo, AdaptationOption(0, ((100, 0),)))[3] == (1.0, 0.0)
    table = apply_option(topo, AdaptationOption(0, ((60, 40),)))
    assert table[3] == (0.6, 0.4)
    assert table[1] == (1.0,) and table[2] == (1.0,)


def test_apply_option_rejects_bad_pairs():
    bad = AdaptationOption.__new__(AdaptationOption)
    object.__setattr__(bad, "option_id", 0)
    object.__setattr__(bad, "distribution", ((70, 40),))
    object.__setattr__(bad, "power_choice", ())
    with pytest.raises(ContractViolation):
        apply_option(diamond(), bad)


# --- topologies ---------------------------------------------------------------------------


@pytest.mark.parametrize("name,k,size", [("topo_v1", 3, 216), ("topo_v2", 4, 1296), ("topo_v2_toggle", 4, 5184)])
def test_bundled_topologies(name, k, size):
    topo = load_topology(name)
    assert len(topo.dual_parent_motes) == k
    assert len(topo.space()) == size
    assert all(1 <= l.power <= 15 for l in topo.links)


def test_power_toggle_changes_power_and_snr():
    topo = load_topology("topo_v2_toggle")
    space = topo.space()
    base, toggled = space[0], space[1]
    assert base.distribution == toggled.distribution and toggled.power_choice == (0, 1)
    diff = topo.link_powers(toggled) - topo.link_powers(base)
    assert np.count_nonzero(diff) == 1 and diff.max() == 4


def test_missing_topology_file_names_path(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(FileNotFoundError, match="nope.json"):
        load_topology(missing)


@pytest.mark.parametrize(
    "motes",
    [
        [{"id": 1, "links": [{"to": 2, "power": 3}]}, {"id": 2, "links": [{"to": 1, "power": 3}]}],
        [{"id": 1, "links": [{"to": 0, "power": 16}]}],
        [{"id": 1, "links": [{"to": 0, "power": 2}, {"to": 2, "power": 2}, {"to": 3, "power": 2}]}],
        [{"id": 1, "links": [{"to": 5, "power": 3}]}],
        [{"id": 1, "load": 11, "links": [{"to": 0, "power": 3}]}],
    ],
)
def test_invalid_topologies_rejected(motes):
    with pytest.raises(ValueError):
        parse_topology({"gateway": 0, "motes": motes})


def test_unknown_topology_key_rejected():
    with pytest.raises(ValueError, match="unknown"):
        parse_topology({"gateway": 0, "motes": [], "colour": "red"})


def test_leaves_come_first(topo_v1):
    pos = {m: i for i, m in enumerate(topo_v1.order)}
    for m in topo_v1.motes:
        for p in m.parents:
            if p != topo_v1.gateway_id:
                assert pos[m.mote_id] < pos[p]
