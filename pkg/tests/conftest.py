import pytest

from adaptspace.domain import GoalSpec
from adaptspace.simnet import Link, Mote, NetworkTopology, load_topology

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def topo_v1():
    return load_topology("topo_v1")


@pytest.fixture
def tto_goals():
    return [
        GoalSpec("threshold-below", "packet_loss", 0.10),
        GoalSpec("threshold-below", "latency", 0.05),
        GoalSpec("minimize", "energy"),
    ]


def chain(n_hops=1, snr=0.0, power=5, load=5, capacity=1000):
    """Single-parent chain of ``n_hops`` motes ending at gateway 0; mote ``n_hops`` is the leaf."""
    motes = []
    for i in range(1, n_hops + 1):
        motes.append(Mote(i, (Link(i, i - 1, power, snr),), load if i == n_hops else 0, capacity))
    return NetworkTopology(motes, 0, name="chain")


def diamond(snr=0.0, capacity=1000, load=6):
    """Mote 3 splits between motes 1 and 2, which both reach the gateway."""
    motes = [
        Mote(1, (Link(1, 0, 4, snr),), 0, capacity),
        Mote(2, (Link(2, 0, 6, snr),), 0, capacity),
        Mote(3, (Link(3, 1, 3, snr), Link(3, 2, 7, snr)), load, capacity),
    ]
    return NetworkTopology(motes, 0, name="diamond")
