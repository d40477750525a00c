import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ohm.env import Box, BondPercolation, ExplicitEdges, LatticeRCM, MillerAbrahams, UniformWeights, make_environment
from ohm.errors import ContractError, ParameterError
from ohm.network import NodeClass, aggregate_reservoirs, box_frame, build_network
from ohm.solver import (assemble_reduced_system, competitor_energy, conductivity_report, conjugate_gradient,
                        dissipated_energy, dump_solution, flux_through_hyperplane, kirchhoff_residual,
                        parse_solution, psi_epsilon, solve_potential)

from conftest import lattice_env, pipeline
from test_network import explicit_env


def chain3():
    return build_network(lattice_env(1, 4), box_frame(1), 3)


def square3():
    return build_network(lattice_env(2, 4), box_frame(2), 3)


# ------------------------------------------------------------- assembly

def test_assemble_chain():
    sys_ = assemble_reduced_system(chain3())
    assert sys_.matrix.toarray().tolist() == [[2, -1, 0], [-1, 2, -1], [0, -1, 2]]
    assert sys_.rhs.tolist() == [0, 0, 1]


def test_two_resistor_divider():
    net = build_network(explicit_env([[-3.0], [0.0], [3.0]], [(0, 1, 1.0), (1, 2, 3.0)]), box_frame(1), 4)
    sys_ = assemble_reduced_system(net)
    assert sys_.matrix.toarray().tolist() == [[4.0]] and sys_.rhs.tolist() == [3.0]
    sol = solve_potential(net)
    assert sol.values[1] == pytest.approx(0.75, abs=1e-15)


def test_empty_system():
    env = make_environment(BondPercolation(0.0), Box.cube(-4, 4, 2), 0)
    net = build_network(env, box_frame(2), 3)
    assert assemble_reduced_system(net).matrix.shape == (0, 0)
    sol = solve_potential(net)
    assert sol.iterations == 0 and np.all(sol.values == 0)
    rep = conductivity_report(net, sol)
    assert rep.sigma_flux == 0 and rep.sigma_energy == 0 and rep.rescaled == 0
    assert all(f == 0 for _, f in rep.flux_profile)


def test_unclassified_network_is_rejected():
    net = build_network(lattice_env(1, 4), box_frame(1), 3, classify=False)
    with pytest.raises(ContractError):
        assemble_reduced_system(net)


# -------------------------------------------------------------- solving

def test_chain_potential_and_functionals():
    net = chain3()
    sol = solve_potential(net)
    assert sol.values.tolist() == pytest.approx([0, 0.25, 0.5, 0.75, 1], abs=1e-14)
    assert flux_through_hyperplane(net, sol, 0.0) == pytest.approx(0.25, abs=1e-14)
    assert flux_through_hyperplane(net, sol, -1.2) == pytest.approx(0.25, abs=1e-14)
    assert dissipated_energy(net, sol) == pytest.approx(0.25, abs=1e-14)
    rep = conductivity_report(net, sol)
    assert rep.rescaled == pytest.approx(0.75, abs=1e-14)
    assert dissipated_energy(net, np.zeros(net.n_nodes)) == 0.0


def test_square_potential_is_linear():
    net = square3()
    sol = solve_potential(net)
    assert np.allclose(sol.values, (net.coords[:, 0] + 2) / 4, atol=1e-13)
    assert np.max(kirchhoff_residual(net, sol)) < 1e-12
    for g in np.linspace(-1.5, 1.49, 9):
        assert flux_through_hyperplane(net, sol, g) == pytest.approx(0.75, abs=1e-13)
    assert dissipated_energy(net, sol) == pytest.approx(0.75, abs=1e-13)
    assert conductivity_report(net, sol).rescaled == pytest.approx(0.75, abs=1e-13)


def test_gamma_out_of_range():
    net = chain3()
    sol = solve_potential(net)
    for g in (-1.6, 1.5, 3.0):
        with pytest.raises(ParameterError):
            flux_through_hyperplane(net, sol, g)


def test_psi_epsilon_competitor_energy():
    net = chain3()
    psi = psi_epsilon(net)
    assert psi.tolist() == pytest.approx([0, 1 / 6, 1 / 2, 5 / 6, 1])
    # the affine competitor sees the box [-3/2, 3/2] while V spreads over 4 bonds
    e = competitor_energy(net, psi)
    assert e == pytest.approx(5 / 18, abs=1e-15)
    assert e >= solve_potential(net).energy


def test_step_competitor():
    net = chain3()
    step = (net.coords[:, 0] >= 0).astype(float)
    assert competitor_energy(net, step) == 1.0


def test_competitor_constraints():
    net = chain3()
    bad = np.full(net.n_nodes, 0.5)
    with pytest.raises(ContractError):
        competitor_energy(net, bad)
    with pytest.raises(ContractError):
        competitor_energy(net, np.zeros(3))


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    kind = seed % 3
    if kind == 0:
        env = make_environment(LatticeRCM(UniformWeights(0.1, 5.0)), Box.cube(-7, 7, 2), seed)
    elif kind == 1:
        env = make_environment(BondPercolation(0.65), Box.cube(-7, 7, 2), seed)
    else:
        model = MillerAbrahams(1.0, float(rng.uniform(0.5, 3.0)), cutoff=1e-8)
        frame = box_frame(2)
        env = make_environment(model, frame.covering_window(5, model.interaction_range).grow(1), seed,
                               intensity=1.0)
    ell = 5 if kind == 2 else 6
    return aggregate_reservoirs(build_network(env, box_frame(2), ell))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 2**31))
def test_minimality_against_random_competitors(seed, cseed):
    net = _random_instance(seed)
    sol = solve_potential(net)
    rng = np.random.default_rng(cseed)
    free = net.classes == NodeClass.INTERIOR
    comp = sol.values.copy()
    comp[free] = np.clip(comp[free] + rng.normal(0, rng.choice([1e-3, 0.1, 1.0]), free.sum()), -1, 2)
    assert dissipated_energy(net, sol) <= competitor_energy(net, comp) + 1e-9


@pytest.mark.parametrize("seed", range(12))
def test_identities_and_maximum_principle(seed):
    net = _random_instance(seed)
    sol = solve_potential(net)
    rep = conductivity_report(net, sol)
    tol = 1e-12
    assert rep.flux_spread <= 10 * tol or rep.sigma_flux == 0
    assert abs(rep.sigma_energy - rep.sigma_flux) <= 10 * tol * max(1.0, rep.sigma_flux)
    assert sol.values.min() >= -1e-10 and sol.values.max() <= 1 + 1e-10
    assert np.all(sol.values[net.classes == NodeClass.ISOLATED] == 0)
    scale = np.max(net.ec) if net.n_edges else 1.0
    assert np.max(kirchhoff_residual(net, sol), initial=0.0) <= 1e-9 * scale


@pytest.mark.parametrize("seed", range(6))
def test_dense_oracle_and_guess_independence(seed):
    net = _random_instance(seed)
    sys_ = assemble_reduced_system(net)
    dense = np.linalg.solve(sys_.matrix.toarray(), sys_.rhs) if len(sys_.rhs) else np.zeros(0)
    sol = solve_potential(net)
    assert np.max(np.abs(sol.values[sys_.free] - dense), initial=0.0) < 1e-8
    other = solve_potential(net, x0=np.random.default_rng(seed).random(len(sys_.free)))
    assert np.max(np.abs(other.values - sol.values)) < 1e-8
    direct = solve_potential(net, method="direct")
    assert np.max(np.abs(direct.values - sol.values)) < 1e-8


def test_cg_on_spd_matrix():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(30, 30))
    A = M @ M.T + 30 * np.eye(30)
    b = rng.normal(size=30)
    import scipy.sparse as sp
    x, res, it, ok = conjugate_gradient(sp.csr_matrix(A), b, tol=1e-13)
    assert ok and np.allclose(x, np.linalg.solve(A, b), atol=1e-10)


def test_unknown_method():
    with pytest.raises(ParameterError):
        solve_potential(chain3(), method="multigrid")


def test_solution_dump_round_trip():
    net = _random_instance(4)
    sol = solve_potential(net)
    text = dump_solution(sol)
    back = parse_solution(text)
    assert np.array_equal(back, sol.values)
    assert dump_solution(back) == text
