"""Simulated multi-hop IoT network: topology, drifting uncertainties, packet-level quality model.

Quality surrogates (all replaceable):

* per-hop loss probability ``clamp(-snr/40, 0, 1)`` for ``snr < 0``, zero otherwise;
* energy is the summed cost of every transmission, ``base_cost + power * unit_cost``;
* a mote forwards at most ``capacity`` packets in its slot, the excess is delayed one
  cycle; latency is the number of delays divided by the generated packets.

Packets are independent, so instead of walking them one by one the simulator moves
whole per-mote packet counts per run with binomial draws (see :mod:`._kernel`). This
has exactly the distribution of the per-packet walk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernel
from .domain import AdaptationOption, AdaptationSpace, ContractViolation, QualityVector

BUNDLED_TOPOLOGIES = ("topo_v1", "topo_v2", "topo_v2_toggle")


@dataclass(frozen=True)
class Link:
    source: int
    target: int
    power: int
    snr: float  # baseline SNR in dB


@dataclass(frozen=True)
class Mote:
    mote_id: int
    links: tuple[Link, ...]
    load: int = 0
    capacity: int = 10

    @property
    def parents(self) -> tuple[int, ...]:
        return tuple(l.target for l in self.links)


@dataclass(frozen=True)
class PowerToggle:
    """Two alternative power settings for one link (the first replaces the file value)."""

    mote_id: int
    link_index: int
    powers: tuple[int, int]


@dataclass(frozen=True)
class EnergyModel:
    base_cost: float = 1.0
    unit_cost: float = 0.1


@dataclass(frozen=True)
class _KernelPlan:
    order: np.ndarray
    n_links: np.ndarray
    targets: np.ndarray  # mote index of each link's parent, -1 for the gateway
    link_ids: np.ndarray
    capacity: np.ndarray


class NetworkTopology:
    """Motes with one or two parent links, forming a DAG rooted at the gateway."""

    def __init__(self, motes, gateway_id: int, toggles=(), name: str = "", snr_per_power_db: float = 1.0):
        self.name = name
        self.gateway_id = gateway_id
        self.motes: tuple[Mote, ...] = tuple(sorted(motes, key=lambda m: m.mote_id))
        self.toggles: tuple[PowerToggle, ...] = tuple(toggles)
        self.snr_per_power_db = snr_per_power_db
        self._index = {m.mote_id: i for i, m in enumerate(self.motes)}
        self.links: tuple[Link, ...] = tuple(l for m in self.motes for l in m.links)
        self._link_index = {(l.source, l.target): i for i, l in enumerate(self.links)}
        self._validate()
        self.dual_parent_motes: tuple[int, ...] = tuple(m.mote_id for m in self.motes if len(m.links) == 2)
        self.order: tuple[int, ...] = self._leaves_first()
        self._plan = None

    def _validate(self):
        if self.gateway_id in self._index:
            raise ValueError("gateway must not be listed as a mote")
        if len(self._index) != len(self.motes):
            raise ValueError("duplicate mote ids")
        for m in self.motes:
            if len(m.links) not in (1, 2):
                raise ValueError(f"mote {m.mote_id} needs 1 or 2 parents")
            if len(set(m.parents)) != len(m.parents):
                raise ValueError(f"mote {m.mote_id} lists a parent twice")
            if not 0 <= m.load <= 10:
                raise ValueError(f"mote {m.mote_id} load outside [0,10]")
            if m.capacity < 1:
                raise ValueError(f"mote {m.mote_id} capacity must be >= 1")
            for l in m.links:
                if l.source != m.mote_id:
                    raise ValueError("link source mismatch")
                if l.target != self.gateway_id and l.target not in self._index:
                    raise ValueError(f"mote {m.mote_id} links to unknown mote {l.target}")
                if not 1 <= l.power <= 15:
                    raise ValueError(f"power setting {l.power} outside 1..15")
        for t in self.toggles:
            m = self.mote(t.mote_id)
            if not 0 <= t.link_index < len(m.links):
                raise ValueError(f"toggle on missing link of mote {t.mote_id}")
            if any(not 1 <= p <= 15 for p in t.powers):
                raise ValueError("toggle powers outside 1..15")

    def _leaves_first(self) -> tuple[int, ...]:
        # Kahn's algorithm on child -> parent edges; detects cycles.
        children_left = {m.mote_id: 0 for m in self.motes}
        for m in self.motes:
            for p in m.parents:
                if p != self.gateway_id:
                    children_left[p] += 1
        ready = sorted(mid for mid, c in children_left.items() if c == 0)
        order = []
        while ready:
            mid = ready.pop(0)
            order.append(mid)
            for p in self.mote(mid).parents:
                if p == self.gateway_id:
                    continue
                children_left[p] -= 1
                if children_left[p] == 0:
                    ready.append(p)
                    ready.sort()
        if len(order) != len(self.motes):
            raise ValueError("links contain a cycle; topology must be a DAG")
        return tuple(order)

    def kernel_plan(self) -> "_KernelPlan":
        if self._plan is None:
            n = len(self.motes)
            link_ids = np.full((n, 2), -1, dtype=np.int64)
            targets = np.full((n, 2), -1, dtype=np.int64)
            for mi, m in enumerate(self.motes):
                for k, l in enumerate(m.links):
                    link_ids[mi, k] = self.link_index(m.mote_id, l.target)
                    targets[mi, k] = -1 if l.target == self.gateway_id else self._index[l.target]
            self._plan = _KernelPlan(
                order=np.array([self._index[mid] for mid in self.order], dtype=np.int64),
                n_links=np.array([len(m.links) for m in self.motes], dtype=np.int64),
                targets=targets,
                link_ids=link_ids,
                capacity=np.array([m.capacity for m in self.motes], dtype=np.int64),
            )
        return self._plan

    def mote(self, mote_id: int) -> Mote:
        return self.motes[self._index[mote_id]]

    def mote_index(self, mote_id: int) -> int:
        return self._index[mote_id]

    def link_index(self, source: int, target: int) -> int:
        return self._link_index[(source, target)]

    @property
    def n_links(self) -> int:
        return len(self.links)

    def space(self) -> AdaptationSpace:
        return AdaptationSpace.enumerate(len(self.dual_parent_motes), len(self.toggles))

    def link_powers(self, option: AdaptationOption) -> np.ndarray:
        powers = np.array([l.power for l in self.links], dtype=float)
        for t, choice in zip(self.toggles, option.power_choice):
            m = self.mote(t.mote_id)
            powers[self.link_index(m.mote_id, m.links[t.link_index].target)] = t.powers[choice]
        return powers

    def base_powers(self) -> np.ndarray:
        """Powers in effect before toggles (the first alternative of each toggle)."""
        powers = np.array([l.power for l in self.links], dtype=float)
        for t in self.toggles:
            m = self.mote(t.mote_id)
            powers[self.link_index(m.mote_id, m.links[t.link_index].target)] = t.powers[0]
        return powers

    def with_powers(self, scale: float) -> "NetworkTopology":
        motes = [
            replace(m, links=tuple(replace(l, power=int(round(l.power * scale))) for l in m.links))
            for m in self.motes
        ]
        return NetworkTopology(motes, self.gateway_id, self.toggles, self.name, self.snr_per_power_db)


def parse_topology(data: dict, name: str = "") -> NetworkTopology:
    allowed = {"name", "gateway", "motes", "toggles", "snr_per_power_db"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown topology keys: {sorted(unknown)}")
    motes = []
    for rec in data["motes"]:
        links = tuple(
            Link(int(rec["id"]), int(l["to"]), int(l["power"]), float(l.get("snr", 0.0))) for l in rec["links"]
        )
        motes.append(Mote(int(rec["id"]), links, int(rec.get("load", 0)), int(rec.get("capacity", 10))))
    toggles = [PowerToggle(int(t["mote"]), int(t.get("link", 0)), tuple(int(p) for p in t["powers"]))
               for t in data.get("toggles", [])]
    return NetworkTopology(
        motes, int(data["gateway"]), toggles, data.get("name", name), float(data.get("snr_per_power_db", 1.0))
    )


def load_topology(ref: str | Path) -> NetworkTopology:
    """Load a bundled topology by name (``topo_v1``) or a JSON topology file by path."""
    ref = str(ref)
    if ref in BUNDLED_TOPOLOGIES:
        text = resources.files("adaptspace.data.topologies").joinpath(f"{ref}.json").read_text()
        return parse_topology(json.loads(text), ref)
    path = Path(ref)
    if not path.is_file():
        raise FileNotFoundError(f"topology file not found: {path}")
    return parse_topology(json.loads(path.read_text()), path.stem)


@dataclass(frozen=True)
class UncertaintyProfile:
    """Bounds and random-walk parameters of the two uncertainties (link SNR, mote load)."""

    snr_baseline: tuple[float, ...]
    load_baseline: tuple[int, ...]
    rng_seed: int = 0
    traffic_load_range: tuple[int, int] = (0, 10)
    snr_range: tuple[float, float] = (-40.0, 15.0)
    snr_step: float = 1.0
    load_step: float = 0.7
    reversion: float = 0.3

    @classmethod
    def for_topology(cls, topology: NetworkTopology, **kw) -> "UncertaintyProfile":
        return cls(
            snr_baseline=tuple(l.snr for l in topology.links),
            load_baseline=tuple(m.load for m in topology.motes),
            **kw,
        )


@dataclass(frozen=True)
class NetworkState:
    cycle_index: int
    snr: np.ndarray  # per link, dB
    load: np.ndarray  # per mote, packets generated this cycle
    buffers: np.ndarray = field(default=None)  # per mote, packets delayed in the last executed cycle

    def __post_init__(self):
        if self.buffers is None:
            object.__setattr__(self, "buffers", np.zeros_like(self.load))
        if np.any(self.buffers < 0):
            raise ValueError("buffer occupancy must be >= 0")


def initial_state(profile: UncertaintyProfile) -> NetworkState:
    lo, hi = profile.snr_range
    return NetworkState(
        cycle_index=0,
        snr=np.clip(np.array(profile.snr_baseline, dtype=float), lo, hi),
        load=np.clip(np.array(profile.load_baseline, dtype=np.int64), *profile.traffic_load_range),
    )


_ENV_TAG = 0xE1
_EXEC_TAG = 0xE2


def advance_cycle(state: NetworkState, profile: UncertaintyProfile) -> NetworkState:
    """One bounded random-walk step of every link SNR and mote load, mean-reverting to the baseline."""
    rng = np.random.default_rng([profile.rng_seed, _ENV_TAG, state.cycle_index])
    snr_noise = rng.uniform(-1.0, 1.0, size=state.snr.shape)
    load_noise = rng.uniform(-1.0, 1.0, size=state.load.shape)
    base_snr = np.array(profile.snr_baseline, dtype=float)
    base_load = np.array(profile.load_baseline, dtype=float)
    snr = state.snr + profile.reversion * (base_snr - state.snr) + profile.snr_step * snr_noise
    load = np.rint(state.load + profile.reversion * (base_load - state.load) + profile.load_step * load_noise)
    return NetworkState(
        cycle_index=state.cycle_index + 1,
        snr=np.clip(snr, *profile.snr_range),
        load=np.clip(load, *profile.traffic_load_range).astype(np.int64),
        buffers=state.buffers,
    )


def loss_probability(snr: np.ndarray | float) -> np.ndarray:
    return np.clip(-np.asarray(snr, dtype=float) / 40.0, 0.0, 1.0)


def apply_option(topology: NetworkTopology, option: AdaptationOption) -> dict[int, tuple[float, ...]]:
    """Forwarding probability of each mote over its parent links."""
    _check_option(topology, option)
    table = {}
    pairs = dict(zip(topology.dual_parent_motes, option.distribution))
    for m in topology.motes:
        if len(m.links) == 1:
            table[m.mote_id] = (1.0,)
        else:
            a, b = pairs[m.mote_id]
            table[m.mote_id] = (a / 100.0, b / 100.0)
    return table


def _check_option(topology: NetworkTopology, option: AdaptationOption) -> None:
    if len(option.distribution) != len(topology.dual_parent_motes):
        raise ContractViolation(
            f"option has {len(option.distribution)} pairs, topology has "
            f"{len(topology.dual_parent_motes)} dual-parent motes"
        )
    if len(option.power_choice) != len(topology.toggles):
        raise ContractViolation("option power toggles do not match topology")
    for pair in option.distribution:
        if pair[0] + pair[1] != 100:
            raise ContractViolation(f"distribution pair {pair} does not sum to 100")


@dataclass
class SimulationOutcome:
    packet_loss: np.ndarray  # per run
    latency: np.ndarray
    energy: np.ndarray
    delayed: np.ndarray  # (runs, motes)

    def means(self) -> QualityVector:
        return QualityVector(
            float(np.clip(self.packet_loss.mean(), 0.0, 1.0)),
            float(np.clip(self.latency.mean(), 0.0, 1.0)),
            float(max(self.energy.mean(), 0.0)),
        )


def seed_to_u32(seed) -> int:
    """Collapse arbitrary seed material into the 32-bit seed of the simulation kernel."""
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint32)[0])


def simulate(
    topology: NetworkTopology,
    state: NetworkState,
    option: AdaptationOption,
    runs: int,
    seed=0,
    energy_model: EnergyModel = EnergyModel(),
) -> SimulationOutcome:
    if runs < 1:
        raise ContractViolation("runs must be >= 1")
    routing = apply_option(topology, option)
    powers = topology.link_powers(option)
    snr = state.snr + topology.snr_per_power_db * (powers - topology.base_powers())
    p_loss = loss_probability(snr)
    cost = energy_model.base_cost + powers * energy_model.unit_cost

    plan = topology.kernel_plan()
    probs = np.zeros((len(topology.motes), 2))
    link_loss = np.zeros_like(probs)
    link_cost = np.zeros_like(probs)
    for mi, m in enumerate(topology.motes):
        for k, l in enumerate(m.links):
            li = plan.link_ids[mi, k]
            probs[mi, k] = routing[m.mote_id][k]
            link_loss[mi, k] = p_loss[li]
            link_cost[mi, k] = cost[li]
    pl, la, ec, delayed = _kernel.run(
        runs, plan.order, plan.n_links, plan.targets, probs, link_loss, link_cost,
        plan.capacity, state.load.astype(np.int64), seed_to_u32(seed),
    )
    return SimulationOutcome(pl, la, ec, delayed)


def ground_truth_qualities(
    topology: NetworkTopology,
    state: NetworkState,
    option: AdaptationOption,
    runs: int,
    seed=0,
    energy_model: EnergyModel = EnergyModel(),
) -> QualityVector:
    """Monte-Carlo sample means of packet loss, latency and energy over ``runs`` simulated cycles."""
    return simulate(topology, state, option, runs, seed, energy_model).means()


def execute_cycle(
    topology: NetworkTopology,
    state: NetworkState,
    option: AdaptationOption,
    seed: int,
    energy_model: EnergyModel = EnergyModel(),
) -> tuple[QualityVector, NetworkState]:
    """Let the managed system run one real cycle under ``option``.

    Returns the observed qualities and the state with the observed per-mote backlog.
    Delayed packets are flushed first in the next cycle, so the backlog is monitoring
    data only and does not enter the next cycle's quality model.
    """
    out = simulate(topology, state, option, 1, [seed, _EXEC_TAG, state.cycle_index], energy_model)
    return out.means(), replace(state, buffers=out.delayed[0].copy())
