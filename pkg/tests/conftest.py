import pathlib

import pytest

from wavetime import netlist

DATA = pathlib.Path(__file__).parent / "data"


def load(name):
    return netlist.parse_netlist((DATA / name).read_text())


@pytest.fixture
def fig_a():
    return load("fig_a.net")


@pytest.fixture
def fig_b():
    return load("fig_b.net")


@pytest.fixture
def fig_c():
    return load("fig_c.net")


@pytest.fixture
def fig_chain():
    return load("fig_chain.net")
