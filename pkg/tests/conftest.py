import numpy as np
import pytest

from ohm.env import Box, ConstantWeights, LatticeRCM, make_environment
from ohm.network import aggregate_reservoirs, box_frame, build_network
from ohm.solver import conductivity_report, solve_potential


def lattice_env(dim, half, law=None, seed=0, model=None):
    model = model or LatticeRCM(law or ConstantWeights((1.0,) * dim))
    return make_environment(model, Box.cube(-half, half, dim), seed)


def pipeline(env, ell, direction=None, aggregate=True, **solve_kw):
    frame = box_frame(env.dim, direction)
    net = build_network(env, frame, ell)
    if aggregate:
        net = aggregate_reservoirs(net)
    sol = solve_potential(net, **solve_kw)
    return net, sol, conductivity_report(net, sol)


@pytest.fixture
def unit_lattice():
    return lattice_env


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
