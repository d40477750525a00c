import networkx as nx
import numpy as np
import pytest

from ohm.env import Box, BondPercolation, ExplicitEdges, MillerAbrahams, PointCloud, Environment, make_environment
from ohm.errors import GeometryError, ParameterError
from ohm.network import (DirectionFrame, NodeClass, aggregate_reservoirs, box_frame, build_network,
                         classify_and_prune, dump_network, householder, parse_network)
from ohm.solver import conductivity_report, solve_potential

from conftest import lattice_env

L, R, I, ISO = NodeClass.LEFT, NodeClass.RIGHT, NodeClass.INTERIOR, NodeClass.ISOLATED


def explicit_env(points, edges):
    pts = np.asarray(points, dtype=float)
    lo, hi = pts.min(axis=0) - 1, pts.max(axis=0) + 1
    return Environment(PointCloud(pts.shape[1], pts, Box(tuple(lo), tuple(hi))), ExplicitEdges(tuple(edges)), 0)


# -------------------------------------------------------------- examples

def test_chain_of_length_three():
    net = build_network(lattice_env(1, 4), box_frame(1), 3)
    assert net.coords.ravel().tolist() == [-2, -1, 0, 1, 2]
    assert net.classes.tolist() == [L, I, I, I, R]
    assert net.edges == [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)]


def test_square_of_side_three():
    net = build_network(lattice_env(2, 4), box_frame(2), 3)
    assert net.count(I) == 9 and net.count(L) == 3 and net.count(R) == 3
    assert net.n_edges == 18
    horizontal = sum(1 for i, j, _ in net.edges if net.coords[i][1] == net.coords[j][1])
    assert horizontal == 12


def test_empty_percolation_isolates_everything():
    env = make_environment(BondPercolation(0.0), Box.cube(-6, 6, 2), 1)
    net = build_network(env, box_frame(2), 5)
    assert net.n_edges == 0
    assert net.count(ISO) == 25 and net.count(I) == 0
    assert net.count(L) == 0 and net.count(R) == 0  # dangling reservoir nodes are dropped


def test_isolated_pair_inside_box():
    #   left(-3) - a(-1) - right(3); b(0) - c(1) isolated from the reservoirs
    env = explicit_env([[-3.0], [-1.0], [0.0], [1.0], [3.0]], [(0, 1, 1.0), (1, 4, 1.0), (2, 3, 1.0)])
    net = build_network(env, box_frame(1), 4)
    cls = dict(zip(net.coords.ravel().tolist(), net.classes.tolist()))
    assert cls == {-3.0: L, -1.0: I, 0.0: ISO, 1.0: ISO, 3.0: R}


def test_homogeneous_lattice_has_no_isolated_nodes():
    net = build_network(lattice_env(2, 8), box_frame(2), 7)
    assert net.count(ISO) == 0


def test_union_find_matches_bfs_on_subcritical_percolation():
    no_crossing = 0
    for seed in range(5):
        env = make_environment(BondPercolation(0.2), Box.cube(-18, 18, 2), seed)
        net = build_network(env, box_frame(2), 32)
        g = nx.Graph()
        g.add_nodes_from(range(net.n_nodes))
        g.add_edges_from(zip(net.ei.tolist(), net.ej.tolist()))
        res = {k for k in range(net.n_nodes) if net.classes[k] in (L, R)}
        for comp in nx.connected_components(g):
            touches = bool(comp & res)
            for k in comp:
                if net.classes[k] in (I, ISO):
                    assert (net.classes[k] == I) == touches
        agg = aggregate_reservoirs(net)
        ga = nx.Graph(list(zip(agg.ei.tolist(), agg.ej.tolist())))
        ends = [int(np.nonzero(agg.classes == side)[0][0]) if np.any(agg.classes == side) else None for side in (L, R)]
        crossing = None not in ends and all(e in ga for e in ends) and nx.has_path(ga, *ends)
        no_crossing += not crossing
        if not crossing:
            assert conductivity_report(agg, solve_potential(agg)).sigma_energy == 0.0
    assert no_crossing >= 4


def test_classification_is_idempotent():
    env = make_environment(BondPercolation(0.5), Box.cube(-12, 12, 2), 4)
    net = build_network(env, box_frame(2), 20)
    again = classify_and_prune(net)
    assert np.array_equal(net.classes, again.classes)
    assert np.array_equal(net.ei, again.ei) and np.array_equal(net.coords, again.coords)


# ----------------------------------------------------------- aggregation

def test_aggregate_chain():
    agg = aggregate_reservoirs(build_network(lattice_env(1, 4), box_frame(1), 3))
    assert agg.n_nodes == 5 and agg.n_edges == 4 and agg.aggregated


def test_aggregate_merges_parallel_conductances():
    # two left reservoir nodes both wired to the same interior node
    env = explicit_env([[-3.0], [-2.5], [0.0], [3.0]], [(0, 2, 2.0), (1, 2, 3.0), (2, 3, 1.0)])
    agg = aggregate_reservoirs(build_network(env, box_frame(1), 4))
    left = [k for k in range(agg.n_nodes) if agg.classes[k] == L]
    assert len(left) == 1
    assert [c for i, j, c in agg.edges if left[0] in (i, j)] == [5.0]


def test_aggregate_square_left_supernode():
    agg = aggregate_reservoirs(build_network(lattice_env(2, 4), box_frame(2), 3))
    left = int(np.nonzero(agg.classes == L)[0][0])
    assert sorted(c for i, j, c in agg.edges if left in (i, j)) == [1.0, 1.0, 1.0]


@pytest.mark.parametrize("seed", range(4))
def test_conductivity_invariant_under_aggregation_and_pruning(seed):
    env = make_environment(BondPercolation(0.6), Box.cube(-12, 12, 2), seed)
    raw = build_network(env, box_frame(2), 16, classify=False)
    pruned = classify_and_prune(raw)
    agg = aggregate_reservoirs(pruned)
    s1 = conductivity_report(pruned, solve_potential(pruned)).sigma_energy
    s2 = conductivity_report(agg, solve_potential(agg)).sigma_energy
    assert abs(s1 - s2) <= 1e-10 * max(1.0, s1)


# ------------------------------------------------------------ invariants

@pytest.mark.parametrize("model", [BondPercolation(0.7), MillerAbrahams(1.0, 1.0, cutoff=1e-6)], ids=str)
def test_edge_rule_and_ordering(model):
    frame = box_frame(2)
    env = make_environment(model, frame.covering_window(8, model.interaction_range).grow(1), 2, intensity=1.0)
    net = build_network(env, frame, 8)
    inside = net.in_box()
    assert np.all(inside[net.ei] | inside[net.ej])
    assert np.all(net.ei < net.ej)
    assert np.all(net.ec > 0)
    half = 4.0
    t = net.progress()
    u = net.coords[:, 1]
    assert np.all(np.abs(u) < half)
    assert np.all((np.abs(t[inside]) < half))
    assert np.all(t[net.classes == L] <= -half) and np.all(t[net.classes == R] >= half)


def test_boundary_points_belong_to_reservoirs():
    # ell = 4: the points with x_1 = +-2 sit on the faces and are closed-stripe points
    net = build_network(lattice_env(1, 5), box_frame(1), 4)
    cls = dict(zip(net.coords.ravel().tolist(), net.classes.tolist()))
    assert cls[-2.0] == L and cls[2.0] == R and cls[-1.0] == I


def test_lateral_boundary_is_open():
    net = build_network(lattice_env(2, 5), box_frame(2), 4)
    assert np.all(np.abs(net.coords[:, 1]) < 2.0)
    assert net.count(I) == 9


def test_geometry_and_parameter_errors():
    env = lattice_env(2, 3)
    with pytest.raises(GeometryError):
        build_network(env, box_frame(2), 9)
    with pytest.raises(ParameterError):
        build_network(env, box_frame(2), 0.0)


def test_frame_validation():
    with pytest.raises(ParameterError):
        DirectionFrame(2, np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([1.0, 0.0]), np.array([[0.0, 1.0]]))
    with pytest.raises(ParameterError):
        DirectionFrame(2, np.eye(2), np.array([-1.0, 0.0]), np.array([[0.0, 1.0]]))
    with pytest.raises(ParameterError):
        DirectionFrame(2, np.eye(2), np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), c=0.7)


def test_householder_maps_e1():
    for e in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.0], [0.3, -0.2, 0.9]):
        e = np.asarray(e) / np.linalg.norm(e)
        O = householder(e)
        assert np.allclose(O @ np.eye(len(e))[0], e, atol=1e-15)
        assert np.max(np.abs(O.T @ O - np.eye(len(e)))) < 1e-12


def test_tilted_segments_meet_both_faces():
    w = np.array([2.0, -1.0]) / np.sqrt(5.0)
    frame = DirectionFrame(2, np.eye(2), w, np.array([[0.0, 1.0]]), c=0.5, kind="tilted")
    q = np.random.default_rng(0).uniform(-0.5, 0.5, size=(200, 2))
    q[:, 0] = q[:, 0] * 0.1
    # along x + s e_1 the progress coordinate moves at unit speed, so both faces are reached
    t0 = frame.progress(q)
    for s_face in (-0.5, 0.5):
        s = s_face - t0
        hit = q + np.outer(s, [1.0, 0.0])
        assert np.allclose(frame.progress(hit), s_face)
        assert np.allclose(frame.lateral_coords(hit), frame.lateral_coords(q))


def test_dump_round_trip():
    env = make_environment(BondPercolation(0.6), Box.cube(-8, 8, 2), 1)
    net = aggregate_reservoirs(build_network(env, box_frame(2), 10))
    text = dump_network(net)
    assert text.splitlines()[0] == f"2 10.0 {net.n_nodes} {net.n_edges}"
    back = parse_network(text)
    assert dump_network(back) == text
    assert np.array_equal(back.ec, net.ec) and np.array_equal(back.classes, net.classes)
