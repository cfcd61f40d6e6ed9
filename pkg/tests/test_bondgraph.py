import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coftherm.bondgraph import OverlapError, boundary_atoms, build_bond_graph, minimum_image_distance
from coftherm.structio import Structure
from coftherm.synthetic import benzene, ch_chain, honeycomb, honeycomb_no2, para_phenylene

from oracles import brute_edges, tiled_boundary_atoms


def pair(d, box=10.0):
    return Structure("pair", (box, box, box), ("C", "C"), np.array([[0.3, 0.5, 0.5], [0.3 + d / box, 0.5, 0.5]]))


def edge_set(g):
    return {(int(i), int(j), tuple(int(x) for x in s)) for i, j, s in zip(g.src, g.dst, g.shift)}


def test_two_carbons_bonded_at_1p4():
    g = build_bond_graph(pair(1.4), 1.15)
    assert g.n_edges == 1
    assert 1.4 <= 1.15 * (0.76 + 0.76)
    assert g.length[0] == pytest.approx(1.4, abs=1e-9)


def test_two_carbons_apart_at_3():
    assert build_bond_graph(pair(3.0)).n_edges == 0


def test_overlap_through_boundary():
    s = Structure("ov", (10, 10, 10), ("C", "C"), np.array([[0.02, 0, 0], [0.98, 0, 0]]))
    assert minimum_image_distance(s, 0, 1) == pytest.approx(0.4, abs=1e-12)
    with pytest.raises(OverlapError, match="0.400"):
        build_bond_graph(s)


def test_scale_precondition():
    with pytest.raises(ValueError, match="scale"):
        build_bond_graph(pair(1.4), 2.0)


def test_benzene_has_no_boundary_atoms():
    g = build_bond_graph(benzene())
    assert boundary_atoms(g) == set()
    assert g.n_edges == 12


def test_single_atom_chain_is_boundary():
    s = Structure("c1", (1.4, 10, 10), ("C",), np.array([[0.0, 0.5, 0.5]]))
    g = build_bond_graph(s)
    assert boundary_atoms(g) == {0}
    assert sorted(tuple(x) for x in g.shift.tolist()) == [(-1, 0, 0), (1, 0, 0)]


@pytest.mark.parametrize("factory", [honeycomb, honeycomb_no2, ch_chain, para_phenylene, lambda: honeycomb((2, 3))])
def test_boundary_matches_tiled_oracle(factory):
    s = factory()
    assert boundary_atoms(build_bond_graph(s)) == tiled_boundary_atoms(s)


@pytest.mark.parametrize("factory", [honeycomb, honeycomb_no2, ch_chain, benzene, lambda: para_phenylene(True)])
def test_edges_match_explicit_image_scan(factory):
    s = factory()
    g = build_bond_graph(s)
    assert edge_set(g) == brute_edges(s)
    for i, j, sh, length in zip(g.src, g.dst, g.shift, g.length):
        d = s.cart[j] + sh * np.array(s.cell_lengths) - s.cart[i]
        assert length == pytest.approx(np.linalg.norm(d), abs=1e-9)


def test_boundary_is_definition_scan():
    g = build_bond_graph(honeycomb_no2())
    scan = {int(i) for i, sh in zip(g.src, g.shift) if any(sh)}
    assert boundary_atoms(g) == scan


@pytest.mark.parametrize("factory", [honeycomb, honeycomb_no2, para_phenylene])
def test_supercell_edge_count(factory):
    s = factory()
    g1 = build_bond_graph(s)
    g4 = build_bond_graph(s.replicate(2, 2, 1))
    assert g4.n_edges == 4 * g1.n_edges


def test_graph_symmetric_no_zero_self_loops():
    g = build_bond_graph(honeycomb_no2())
    assert g.is_symmetric()
    assert not any(i == j and not any(sh) for i, j, sh in zip(g.src, g.dst, g.shift))


def canonical(g):
    return sorted((int(i), int(j), tuple(map(int, s))) for i, j, s in zip(g.src, g.dst, g.shift))


def degree_profile(g):
    return sorted((g.degree(i), tuple(sorted(round(x, 9) for x in g.length[g.src == i]))) for i in range(g.n_atoms))


@settings(max_examples=30, deadline=None)
@given(st.tuples(*[st.floats(0, 1, exclude_max=True)] * 3))
def test_translation_invariance(t):
    s = honeycomb_no2()
    moved = Structure(s.name, s.cell_lengths, s.elements, (s.frac + np.array(t)) % 1.0)
    g0, g1 = build_bond_graph(s), build_bond_graph(moved)
    assert g0.n_edges == g1.n_edges
    # same atoms, same bonds; image shifts may differ, but the lifted graph is the same
    assert sorted((int(i), int(j)) for i, j in zip(g0.src, g0.dst)) == sorted((int(i), int(j)) for i, j in zip(g1.src, g1.dst))
    assert degree_profile(g0) == degree_profile(g1)
    assert g1.is_symmetric()


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.sampled_from("CHNO"), *[st.floats(0, 1, exclude_max=True)] * 3), min_size=1, max_size=7),
    st.tuples(*[st.floats(2.5, 8.0)] * 3),
)
def test_random_structures_match_image_scan(atoms, cell):
    s = Structure("r", cell, tuple(a[0] for a in atoms), np.array([a[1:] for a in atoms]))
    try:
        g = build_bond_graph(s)
    except OverlapError:
        L = np.array(cell)
        d = s.cart[:, None, :] - s.cart[None, :, :]
        d -= L * np.round(d / L)
        r = np.linalg.norm(d, axis=-1) + np.eye(s.n_atoms) * 1e9
        assert r.min() < 0.5
        return
    assert edge_set(g) == brute_edges(s)
    assert g.is_symmetric()
