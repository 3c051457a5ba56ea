import numpy as np

from adaptspace.features import build_input_vectors, feature_names, input_width
from adaptspace.simnet import initial_state, load_topology, UncertaintyProfile


def state_for(topo):
    return initial_state(UncertaintyProfile.for_topology(topo))


def test_shape_matches_width_and_names(topo_v1):
    x = build_input_vectors(topo_v1, state_for(topo_v1), topo_v1.space()[0])
    assert x.shape == (216, input_width(topo_v1))
    assert len(feature_names(topo_v1)) == x.shape[1]


def test_rows_encode_their_option(topo_v1):
    space = topo_v1.space()
    x = build_input_vectors(topo_v1, state_for(topo_v1), space[0])
    names = feature_names(topo_v1)
    first_dist = names.index(f"dist[{topo_v1.dual_parent_motes[0]}][0]")
    for oid in (0, 7, 215):
        opt = space[oid]
        np.testing.assert_array_equal(x[oid, : topo_v1.n_links], topo_v1.link_powers(opt))
        assert x[oid, first_dist] == opt.distribution[0][0] / 100.0
    assert len({tuple(r) for r in x}) == 216


def test_environment_block_is_shared(topo_v1):
    state = state_for(topo_v1)
    x = build_input_vectors(topo_v1, state, topo_v1.space()[5])
    names = feature_names(topo_v1)
    i = names.index(next(n for n in names if n.startswith("snr[")))
    np.testing.assert_array_equal(x[:, i : i + topo_v1.n_links], np.broadcast_to(state.snr, (216, topo_v1.n_links)))
    assert np.all(x[:, -1] == x[0, -1])


def test_subset_matches_full(topo_v1):
    state = state_for(topo_v1)
    full = build_input_vectors(topo_v1, state, topo_v1.space()[0])
    part = build_input_vectors(topo_v1, state, topo_v1.space()[0], option_ids=[3, 100])
    np.testing.assert_array_equal(part, full[[3, 100]])


def test_toggle_topology_encodes_toggle_powers():
    topo = load_topology("topo_v2_toggle")
    space = topo.space()
    x = build_input_vectors(topo, state_for(topo), space[1])
    assert x.shape == (len(space), input_width(topo))
    # options 0 and 1 differ only in the last toggle, so only a power column changes
    diff = np.flatnonzero(x[0] != x[1])
    assert len(diff) == 1 and diff[0] < topo.n_links
    assert x[0, -1] == 1.0  # current option (id 1) turns the last toggle on
