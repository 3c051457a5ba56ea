"""Input vectors fed to the network, one row per adaptation option.

Row layout, in order:

* power setting of every link under the option (toggles applied)
* both distribution factors (percent / 100) of every dual-parent mote under the option
* traffic load of every mote
* SNR of every link
* distribution factors and toggle choices of the configuration currently in effect

The option-dependent block is fixed for a topology, so it is built once and cached.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .domain import AdaptationOption
from .simnet import NetworkState, NetworkTopology


def _option_block(topology: NetworkTopology, option: AdaptationOption) -> np.ndarray:
    dist = np.array([f / 100.0 for pair in option.distribution for f in pair])
    return np.concatenate([topology.link_powers(option), dist])


def _current_block(option: AdaptationOption) -> np.ndarray:
    dist = [f / 100.0 for pair in option.distribution for f in pair]
    return np.array(dist + [float(c) for c in option.power_choice])


@lru_cache(maxsize=8)
def _space_block(topology: NetworkTopology) -> np.ndarray:
    block = np.stack([_option_block(topology, o) for o in topology.space()])
    block.setflags(write=False)
    return block


def input_width(topology: NetworkTopology) -> int:
    n_dual = len(topology.dual_parent_motes)
    return 2 * topology.n_links + 2 * n_dual + len(topology.motes) + 2 * n_dual + len(topology.toggles)


def feature_names(topology: NetworkTopology) -> list[str]:
    names = [f"power[{l.source}->{l.target}]" for l in topology.links]
    for m in topology.dual_parent_motes:
        names += [f"dist[{m}][0]", f"dist[{m}][1]"]
    names += [f"load[{m.mote_id}]" for m in topology.motes]
    names += [f"snr[{l.source}->{l.target}]" for l in topology.links]
    for m in topology.dual_parent_motes:
        names += [f"current_dist[{m}][0]", f"current_dist[{m}][1]"]
    names += [f"current_toggle[{t.mote_id}]" for t in topology.toggles]
    return names


def build_input_vectors(
    topology: NetworkTopology, state: NetworkState, current: AdaptationOption, option_ids=None
) -> np.ndarray:
    """Input matrix for the given options (all of them by default) in the given state."""
    block = _space_block(topology)
    if option_ids is not None:
        block = block[np.asarray(option_ids, dtype=int)]
    env = np.concatenate([np.asarray(state.load, dtype=float), np.asarray(state.snr, dtype=float), _current_block(current)])
    return np.hstack([block, np.broadcast_to(env, (block.shape[0], env.shape[0]))])
