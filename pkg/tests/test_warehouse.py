import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from presched.warehouse import (
    Edge,
    Roadmap,
    TaskFlowTensor,
    build_sector_adjacency,
    build_sector_graph,
    load_map,
    save_map,
    sector_center,
    shortest_path_cost,
)


def line_map():
    # a=0 -> b=1 -> c=2, lengths 1 and 2
    return Roadmap([0, 1, 2], [Edge(0, 1, 1.0), Edge(1, 2, 2.0)], {0: 0, 1: 0, 2: 0})


def grid_map(rows=3, cols=4, sectors_by_col=2):
    verts = list(range(rows * cols))
    edges = []
    for v in verts:
        r, c = divmod(v, cols)
        if c + 1 < cols:
            edges.append(Edge(v, v + 1, 1.0, directed=False, kind="aisle"))
        if r + 1 < rows:
            edges.append(Edge(v, v + cols, 1.0, directed=False, kind="cross"))
    sector_of = {v: (v % cols) * sectors_by_col // cols for v in verts}
    return Roadmap(verts, edges, sector_of, {v: divmod(v, cols)[::-1] for v in verts}, depots=[0])


# ---------------------------------------------------------------- adjacency


def test_adjacency_diagonal_zero():
    A = build_sector_adjacency(np.zeros((3, 3)), sigma=1.0)
    assert np.all(np.diag(A) == 0)


def test_adjacency_kernel_value():
    A = build_sector_adjacency(np.array([[0.0, 2.0], [2.0, 0.0]]), sigma=2.0, epsilon=0.1)
    assert A[0, 1] == pytest.approx(0.36788, abs=1e-5)
    assert A[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)


def test_adjacency_threshold_cuts():
    A = build_sector_adjacency(np.array([[0.0, 3.0], [3.0, 0.0]]), sigma=1.0, epsilon=0.1)
    assert A[0, 1] == 0.0


def test_adjacency_errors():
    with pytest.raises(ValueError):
        build_sector_adjacency(np.ones((2, 2)), sigma=0.0)
    with pytest.raises(ValueError):
        build_sector_adjacency(np.ones((2, 3)), sigma=1.0)
    with pytest.warns(RuntimeWarning):
        build_sector_adjacency(np.ones((2, 2)), sigma=1.0, epsilon=1.0)


@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=9, max_size=9),
    st.floats(0.1, 5.0),
    st.floats(0.0, 0.9),
    st.floats(0.0, 0.9),
)
def test_adjacency_monotone_in_epsilon(d, sigma, e1, e2):
    d = np.array(d).reshape(3, 3)
    lo, hi = sorted((e1, e2))
    a_lo = build_sector_adjacency(d, sigma, lo)
    a_hi = build_sector_adjacency(d, sigma, hi)
    assert np.all((a_hi > 0) <= (a_lo > 0))
    assert np.all((a_lo >= 0) & (a_lo <= 1))


# ---------------------------------------------------------------- paths


def test_path_self_is_zero():
    assert shortest_path_cost(line_map(), 1, 1) == (0.0, [1])


def test_path_line():
    cost, path = shortest_path_cost(line_map(), 0, 2)
    assert cost == 3.0 and path == [0, 1, 2]


def test_path_unreachable():
    cost, path = shortest_path_cost(line_map(), 1, 0)
    assert cost == float("inf") and path == []


def test_path_unknown_vertex():
    with pytest.raises(ValueError):
        shortest_path_cost(line_map(), 0, 9)


@settings(max_examples=30)
@given(st.integers(0, 11), st.integers(0, 11), st.integers(0, 11))
def test_triangle_inequality(a, b, c):
    g = grid_map()
    assert g.distance(a, c) <= g.distance(a, b) + g.distance(b, c) + 1e-12


def test_next_hop_prefers_smallest_id():
    g = grid_map(2, 2, 1)
    # 0 -> 3 via 1 or 2, both length 2
    assert g.next_hop(0, 3) == (1, 1.0)


def test_roadmap_validation():
    with pytest.raises(ValueError):
        Roadmap([0], [Edge(0, 1, 1.0)], {0: 0})
    with pytest.raises(ValueError):
        Roadmap([0, 1], [Edge(0, 1, 0.0)], {0: 0, 1: 0})
    with pytest.raises(ValueError):
        Roadmap([0, 1], [Edge(0, 1, 1.0)], {0: 0})


# ---------------------------------------------------------------- centers


def test_center_single_vertex():
    g = Roadmap([5], [], {5: 2})
    assert sector_center(g, 2) == 5


def test_center_path_is_middle():
    g = Roadmap([0, 1, 2], [Edge(0, 1, 1.0, False), Edge(1, 2, 1.0, False)], {0: 0, 1: 0, 2: 0})
    assert sector_center(g, 0) == 1


def test_center_tie_smaller_id():
    g = Roadmap([3, 7], [Edge(3, 7, 2.0, False)], {3: 0, 7: 0})
    assert sector_center(g, 0) == 3


def test_center_empty_sector():
    with pytest.raises(ValueError):
        sector_center(line_map(), 4)


@given(st.permutations(range(5)))
def test_center_relabeling(perm):
    base = [(0, 1), (1, 2), (2, 3), (1, 4)]
    g1 = Roadmap(range(5), [Edge(a, b, 1.0, False) for a, b in base], {v: 0 for v in range(5)})
    relabel = {v: 10 + perm[v] for v in range(5)}
    g2 = Roadmap(relabel.values(), [Edge(relabel[a], relabel[b], 1.0, False) for a, b in base],
                 {relabel[v]: 0 for v in range(5)})
    assert relabel[sector_center(g1, 0)] == sector_center(g2, 0)


# ---------------------------------------------------------------- sector graph


def test_sector_graph_invariants():
    sg = build_sector_graph(grid_map(4, 6, 3))
    assert np.all(np.diag(sg.adjacency) == 0)
    assert np.all((sg.adjacency >= 0) & (sg.adjacency <= 1))
    assert sg.incidence.shape == (sg.n_sectors, sg.n_edges)
    assert np.all(sg.incidence.sum(axis=0) == 2)
    for k, (i, j) in enumerate(sg.edges):
        assert sg.incidence[i, k] == sg.incidence[j, k] == 1
        assert sg.dist[k] == sg.pairwise[i, j]
    g = grid_map(4, 6, 3)
    for s, v in sg.centers.items():
        assert g.sector_of[v] == s
    assert len(sg.edge_types) == sg.n_edges


def test_task_flow_tensor_checks():
    t = TaskFlowTensor(np.ones((2, 5)))
    assert t.data.shape == (2, 5, 1) and t.n_frames == 5
    with pytest.raises(ValueError):
        TaskFlowTensor(-np.ones((2, 5)))
    with pytest.raises(ValueError):
        TaskFlowTensor(np.ones((2, 5)), frame_interval=0)


def test_map_round_trip(tmp_path):
    g = grid_map()
    save_map(g, tmp_path / "m.json")
    h = load_map(tmp_path / "m.json")
    assert h.vertices == g.vertices and h.sector_of == g.sector_of and h.depots == g.depots
    assert h.distance(0, 11) == g.distance(0, 11)
