import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogp.errors import DimensionError, InvalidArityError, InvalidSizeError, ParameterError, ResourceError
from ogp.model import (
    PRIVATE_1,
    PRIVATE_2,
    SHARED,
    CoupledInstance,
    Hypergraph,
    cut_density,
    feasible_overlaps,
    hamiltonian,
    magnetization,
    mf_energy,
    overlap,
    sample_coupled,
    sample_coupled_gw,
    sample_er,
    sample_mean_field,
    spins,
    theta,
)


def ones(n):
    return np.ones(n, dtype=np.int8)


def test_sample_er_zero_rate():
    for seed in range(5):
        assert sample_er(4, 0.0, 10, seed).num_edges == 0


def test_sample_er_edge_count_mean():
    counts = [sample_er(4, 2.0, 100, s).num_edges for s in range(2000)]
    assert abs(np.mean(counts) - 200) < 3 * math.sqrt(200 / 2000)
    # Poisson: variance equals mean (loose moment check)
    assert abs(np.var(counts, ddof=1) / 200 - 1) < 0.15


def test_sample_er_deterministic():
    a = sample_er(4, 1.5, 50, 123)
    b = sample_er(4, 1.5, 50, 123)
    assert a.edges.tobytes() == b.edges.tobytes()
    assert a.to_json() == b.to_json()
    assert sample_er(4, 1.5, 50, 124) != a


def test_sample_er_edges_uniform():
    g = sample_er(2, 50.0, 20, 7)
    counts = np.bincount(g.edges.ravel(), minlength=20)
    expect = g.edges.size / 20
    chi2 = ((counts - expect) ** 2 / expect).sum()
    assert chi2 < 50  # 19 degrees of freedom


@pytest.mark.parametrize("k", [0, 1, 3, 5])
def test_sample_er_bad_arity(k):
    with pytest.raises(InvalidArityError):
        sample_er(k, 1.0, 10, 0)


def test_sample_er_bad_size():
    with pytest.raises(InvalidSizeError):
        sample_er(4, 1.0, 0, 0)
    with pytest.raises(ParameterError):
        sample_er(4, -1.0, 10, 0)


def test_hypergraph_validation():
    with pytest.raises(IndexError):
        Hypergraph(3, 2, [[0, 3]])
    with pytest.raises(DimensionError):
        Hypergraph(3, 2, [[0, 1, 2]])
    g = Hypergraph(3, 2, [[0, 0], [0, 0]])  # multigraph semantics
    assert g.num_edges == 2


def test_hypergraph_json_roundtrip():
    g = sample_er(4, 2.0, 15, 3)
    text = g.to_json()
    assert set(json.loads(text)) == {"n", "k", "edges"}
    assert Hypergraph.from_json(text) == g


def test_theta_examples():
    s = ones(5)
    assert theta(s, (1, 2, 3, 4)) == -1
    s[1] = -1
    assert theta(s, (1, 2, 3, 4)) == 1
    rng = np.random.default_rng(0)
    for _ in range(10):
        s = rng.choice([-1, 1], size=5)
        assert theta(s, (1, 1, 2, 2)) == -1
    with pytest.raises(IndexError):
        theta(ones(3), (0, 1, 2, 3))


def test_hamiltonian_examples():
    g = Hypergraph(6, 4, [[1, 2, 3, 4], [1, 1, 2, 2]])
    s = np.array([1, -1, 1, -1, 1, -1])
    assert hamiltonian(g, s) == -2
    assert cut_density(g, s) == pytest.approx(-2 / 6)
    assert hamiltonian(Hypergraph(4, 4, []), ones(4)) == 0
    with pytest.raises(DimensionError):
        hamiltonian(g, ones(5))


def test_hamiltonian_sign_symmetry_many():
    rng = np.random.default_rng(1)
    for i in range(100):
        g = sample_er(4, 1.0, 12, i)
        s = rng.choice([-1, 1], size=12)
        assert hamiltonian(g, s) == hamiltonian(g, -s)


def test_magnetization_examples():
    assert magnetization(ones(7)) == 1.0
    assert magnetization([1, 1, -1, -1]) == 0.0
    assert magnetization([1, 1, 1, 1, -1]) == pytest.approx(0.6)
    with pytest.raises(DimensionError):
        magnetization([])


def test_overlap_examples():
    s = np.array([1, -1, 1, 1, -1])
    assert overlap(s, s) == 1.0
    assert overlap(s, -s) == -1.0
    assert overlap([1, 1, 1, 1], [1, 1, -1, -1]) == 0.0
    with pytest.raises(DimensionError):
        overlap([1, 1], [1, 1, 1])


def test_spins_rejects_non_pm_one():
    with pytest.raises(ParameterError):
        spins([1, 0, -1])
    with pytest.raises(DimensionError):
        spins([])
    assert spins([1, -1]).dtype == np.int8


spin_vectors = st.integers(1, 30).flatmap(
    lambda n: st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 40), st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 6]))
def test_hamiltonian_properties(n, m, seed, k):
    rng = np.random.default_rng(seed)
    edges = rng.integers(0, n, size=(m, k))
    g = Hypergraph(n, k, edges)
    s = rng.choice([-1, 1], size=n)
    h = hamiltonian(g, s)
    assert isinstance(h, int)
    assert abs(h) <= m
    assert h == hamiltonian(g, -s)
    assert (h + m) % 2 == 0
    for e in edges[:5]:
        assert theta(s, e) in (-1, 1)
        assert theta(-s, e) == theta(s, e)


@settings(max_examples=60, deadline=None)
@given(spin_vectors, st.integers(0, 2**32 - 1))
def test_overlap_properties(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).choice([-1, 1], size=a.size)
    r = overlap(a, b)
    assert r == overlap(b, a)
    assert abs(r) <= 1
    grid = feasible_overlaps(a.size)
    assert np.min(np.abs(grid - r)) < 1e-12
    m = magnetization(a)
    assert np.min(np.abs(grid - m)) < 1e-12


def test_feasible_overlaps():
    assert np.allclose(feasible_overlaps(4), [-1, -0.5, 0, 0.5, 1])


# -- coupled model ----------------------------------------------------------


def test_coupled_extremes():
    c1 = sample_coupled(4, 2.0, 1.0, 50, 1)
    assert len(c1.private_edges_1) == 0 and len(c1.private_edges_2) == 0
    assert c1.graph(1) == c1.graph(2)
    c0 = sample_coupled(4, 2.0, 0.0, 50, 1)
    assert len(c0.shared_edges) == 0
    assert not c0.shared_vertices.any()


def test_coupled_shared_vertices_rule():
    for seed in range(20):
        c = sample_coupled(4, 0.3, 0.4, 60, seed)
        touched = np.zeros(60, dtype=bool)
        touched[np.asarray(c.shared_edges, dtype=int).ravel()] = True
        assert np.array_equal(touched, c.shared_vertices)
        g1 = c.graph(1)
        assert g1.num_edges == len(c.shared_edges) + len(c.private_edges_1)


def test_coupled_marginal_edge_count():
    counts = [sample_coupled(4, 2.0, 0.5, 100, s).graph(1).num_edges for s in range(2000)]
    assert abs(np.mean(counts) - 200) < 3 * math.sqrt(200 / 2000)


def test_coupled_serialization():
    c = sample_coupled(4, 1.0, 0.3, 20, 9)
    d = c.to_dict()
    for key in ("t", "shared_edges", "private_edges_1", "private_edges_2"):
        assert key in d
    c2 = CoupledInstance.from_dict(json.loads(json.dumps(d)))
    assert c2.graph(1) == c.graph(1) and c2.graph(2) == c.graph(2)
    assert np.array_equal(c2.shared_vertices, c.shared_vertices)


def test_coupled_bad_t():
    with pytest.raises(ParameterError):
        sample_coupled(4, 1.0, 1.5, 10, 0)


# -- mean field -------------------------------------------------------------


def test_mean_field_exact_sum():
    inst = sample_mean_field(4, 5, 2)
    s = np.array([1, -1, -1, 1, 1])
    brute = 0.0
    for idx in np.ndindex(*(5,) * 4):
        brute += inst.couplings[idx] * np.prod(s[list(idx)])
    assert mf_energy(inst, s) == pytest.approx(brute * 5 ** (-1.5), rel=1e-12)
    assert mf_energy(inst, s) == pytest.approx(mf_energy(inst, -s), abs=1e-12)


def test_mean_field_zero_mean():
    s = ones(10)
    vals = [mf_energy(sample_mean_field(4, 10, seed), s) for seed in range(2000)]
    assert abs(np.mean(vals)) < 3 * math.sqrt(10 / 2000)


def test_mean_field_cap():
    with pytest.raises(ResourceError):
        sample_mean_field(4, 200, 0)


# -- coupled Galton-Watson trees ----------------------------------------------


def test_gw_t0():
    for seed in range(50):
        tr = sample_coupled_gw(4, 1.0, 0.0, 3, seed)
        assert not tr.node_shared[0]
        assert not (tr.edge_kind == SHARED).any()


def test_gw_t1():
    for seed in range(50):
        tr = sample_coupled_gw(4, 1.0, 1.0, 3, seed)
        assert (tr.edge_kind == SHARED).all()
        if tr.edges.shape[0]:
            assert tr.node_shared.all()


def test_gw_root_offspring_mean():
    counts = []
    for seed in range(5000):
        tr = sample_coupled_gw(4, 1.0, 0.5, 1, seed)
        counts.append(int(np.sum(tr.edges[:, 0] == 0)) if tr.edges.shape[0] else 0)
    counts = np.array(counts)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - 6.0) < 3 * se


def test_gw_structure_invariants():
    for seed in range(30):
        tr = sample_coupled_gw(4, 0.8, 0.5, 3, seed)
        shared = tr.node_shared
        assert np.array_equal(tr.labels[shared, 0], tr.labels[shared, 1])
        if (~shared).any():
            assert not np.array_equal(tr.labels[~shared, 0], tr.labels[~shared, 1])
        for e, kind in zip(tr.edges, tr.edge_kind):
            parent, children = e[0], e[1:]
            if kind == SHARED:
                assert shared[parent] and shared[children].all()
            else:
                assert not shared[children].any()
                tree = 1 if kind == PRIVATE_1 else 2
                assert (tr.node_tree[children] == tree).all()
                if parent != 0 and not shared[parent]:
                    assert tr.node_tree[parent] == tree
        assert tr.node_depth.max(initial=0) <= 3


def test_gw_views_drop_other_private_edges():
    tr = sample_coupled_gw(4, 1.0, 0.5, 2, 11)
    g1, lab1, root = tr.view(1)
    g2, lab2, _ = tr.view(2)
    assert root == 0
    n1 = int(np.sum(tr.edge_kind != PRIVATE_2))
    n2 = int(np.sum(tr.edge_kind != PRIVATE_1))
    assert g1.num_edges == n1 and g2.num_edges == n2


def test_gw_deterministic():
    a = sample_coupled_gw(4, 1.0, 0.5, 3, 5)
    b = sample_coupled_gw(4, 1.0, 0.5, 3, 5)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.labels, b.labels)
