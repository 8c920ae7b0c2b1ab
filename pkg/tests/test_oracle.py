import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogp.errors import InfeasibleError, InsufficientDataError, ParameterError, ResourceError
from ogp.model import Hypergraph, hamiltonian, mf_energy, sample_er, sample_mean_field
from ogp.oracle import (
    AnnealOpts,
    aligned_bins,
    anneal,
    brute_force_max,
    build_energy_table,
    constrained_pair_max,
    dilution_compare,
    mask_to_spins,
    mce_by_overlap,
    near_optimal_sample,
    overlap_gap_scan,
    pair_profile,
    relative_threshold,
    spins_to_mask,
)


def all_spins(n):
    masks = np.arange(2**n)
    return np.where((masks[:, None] >> np.arange(n)) & 1, 1, -1)


def direct_energies(source):
    """Independent per-configuration evaluation of every mask."""
    sig = all_spins(source.n)
    if isinstance(source, Hypergraph):
        return np.array([hamiltonian(source, s) for s in sig])
    return np.array([mf_energy(source, s) for s in sig])


def test_single_edge():
    g = Hypergraph(4, 4, [[0, 1, 2, 3]])
    best, sigma = brute_force_max(g)
    assert best == 1
    assert np.prod(sigma) == -1


def test_empty_graph():
    best, _ = brute_force_max(Hypergraph(6, 4, []))
    assert best == 0


def test_mask_convention():
    s = mask_to_spins(0b101, 3)
    assert list(s) == [1, -1, 1]
    assert spins_to_mask(s) == 0b101


@pytest.mark.parametrize("seed", range(5))
def test_table_matches_direct_evaluation(seed):
    g = sample_er(4, 2.0, 10, seed)
    t = build_energy_table(g)
    assert np.array_equal(t.values, direct_energies(g))
    mf = sample_mean_field(4, 7, seed)
    tm = build_energy_table(mf)
    np.testing.assert_allclose(tm.values, direct_energies(mf), atol=1e-10)


def test_table_random_mask_recompute():
    g = sample_er(4, 2.0, 20, 3)
    t = build_energy_table(g)
    rng = np.random.default_rng(0)
    for mk in rng.integers(0, 2**20, size=100):
        assert t.values[mk] == hamiltonian(g, mask_to_spins(int(mk), 20))


def test_table_complement_symmetry():
    g = sample_er(4, 1.5, 12, 4)
    v = build_energy_table(g).values
    full = (1 << 12) - 1
    masks = np.arange(1 << 12)
    assert np.array_equal(v, v[full ^ masks])


@pytest.mark.parametrize("seed", range(10))
def test_brute_equals_table_max(seed):
    g = sample_er(4, 2.0, 14, seed)
    best, sigma = brute_force_max(g)
    assert best == build_energy_table(g).max
    assert hamiltonian(g, sigma) == best


def test_brute_mean_field():
    mf = sample_mean_field(4, 10, 3)
    best, sigma = brute_force_max(mf)
    assert best == pytest.approx(direct_energies(mf).max(), abs=1e-10)
    assert mf_energy(mf, sigma) == pytest.approx(best, abs=1e-10)


def test_size_caps():
    with pytest.raises(ResourceError):
        brute_force_max(Hypergraph(40, 4, [[0, 1, 2, 3]]))
    with pytest.raises(ResourceError):
        build_energy_table(sample_mean_field(2, 22, 0))


def test_anneal_vs_exact():
    hits = 0
    for seed in range(20):
        g = sample_er(4, 2.0, 16, seed)
        exact, _ = brute_force_max(g)
        res = anneal(g, AnnealOpts(restarts=50), seed)
        assert res.best_energy <= exact
        assert hamiltonian(g, res.best_sigma) == res.best_energy
        hits += res.best_energy == exact
    assert hits >= 18


def naive_pair_max(source, allowed):
    e = direct_energies(source)
    sig = all_spins(source.n)
    r = sig @ sig.T / source.n
    mask = np.zeros_like(r, dtype=bool)
    for a in allowed:
        mask |= np.abs(r - a) < 1e-9
    tot = e[:, None] + e[None, :]
    return tot[mask].max() / source.n


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(4, 8))
def test_pair_max_vs_naive(seed, n):
    g = sample_er(4, 2.0, n, seed)
    t = build_energy_table(g)
    grid = 1 - 2 * np.arange(n + 1) / n
    rng = np.random.default_rng(seed)
    allowed = list(rng.choice(grid, size=2, replace=False))
    assert constrained_pair_max(t, values=allowed) == pytest.approx(naive_pair_max(g, allowed), abs=1e-12)


def test_pair_max_mean_field_vs_naive():
    mf = sample_mean_field(4, 7, 11)
    t = build_energy_table(mf)
    q, mce = mce_by_overlap(t)
    for qi, v in zip(q, mce):
        assert v == pytest.approx(naive_pair_max(mf, [qi]), abs=1e-10)


def test_pair_max_examples():
    g = sample_er(4, 2.0, 12, 5)
    t = build_energy_table(g)
    top = 2 * t.max / 12
    assert constrained_pair_max(t, values=[1.0]) == pytest.approx(top)
    assert constrained_pair_max(t, interval=(-1.0, 1.0)) == pytest.approx(top)
    assert constrained_pair_max(t, values=[-1.0]) == constrained_pair_max(t, values=[1.0])
    with pytest.raises(InfeasibleError):
        constrained_pair_max(t, values=[0.123])


def test_pair_profile_shape():
    g = sample_er(4, 2.0, 8, 5)
    prof = pair_profile(build_energy_table(g))
    assert prof.shape[0] == 9


def test_near_optimal_sample_exact_recheck():
    g = sample_er(4, 2.0, 16, 2)
    t = build_energy_table(g)
    samp, info = near_optimal_sample(g, 0.1, AnnealOpts(sweeps_per_spin=500, restarts=10), seed=3)
    assert samp
    assert info["best_energy"] <= t.max
    for s in samp:
        e = t.values[spins_to_mask(s)]
        assert e == hamiltonian(g, s)
        assert e >= info["threshold"] - 1e-9
    again, _ = near_optimal_sample(g, 0.1, AnnealOpts(sweeps_per_spin=500, restarts=10), seed=3)
    assert len(again) == len(samp) and all(np.array_equal(a, b) for a, b in zip(samp, again))


def test_near_optimal_sample_validation():
    with pytest.raises(ParameterError):
        near_optimal_sample(sample_er(4, 1.0, 8, 0), 1.5)


def test_relative_threshold():
    assert relative_threshold(10.0, 0.1) == pytest.approx(9.0)
    assert relative_threshold(-2.0, 0.5) == pytest.approx(-3.0)


def test_scan_duplicated_sample():
    s = np.array([1, -1, 1, 1, -1, 1])
    h = overlap_gap_scan(None, 0.1, samples=[s, s])
    assert h.n_pairs == 1
    assert h.counts[-1] == 1
    with pytest.raises(InsufficientDataError):
        overlap_gap_scan(None, 0.1, samples=[s])


def test_aligned_bins_partition():
    for n in (5, 10, 14):
        e = aligned_bins(n)
        assert e[0] == 0.0 and e[-1] == 1.0 and np.all(np.diff(e) > 0)
        levels = np.arange(n % 2, n + 1, 2) / n
        counts, _ = np.histogram(levels, bins=e)
        assert np.all(counts == 1)


def test_scan_counts_all_pairs():
    mf = sample_mean_field(4, 10, 1)
    h = overlap_gap_scan(mf, 0.1)
    m = h.meta["n_configs"]
    assert h.n_pairs == m * (m - 1) // 2
    assert h.meta["mode"] == "exhaustive"
    assert h.counts[-1] >= m // 2  # every sigma pairs with -sigma at |R| = 1


def test_dilution_zero_and_monotone():
    rows = dilution_compare(4, [0.0], 8, 3, 0)
    assert rows[0]["mean_max_cut_density"] == 0 and rows[0]["ratio"] is None
    rows = dilution_compare(4, [1, 2, 4, 8], 16, 10, 1)
    means = [r["mean_max_cut_density"] for r in rows]
    assert all(b >= a for a, b in zip(means, means[1:]))
    assert rows[0]["mode"] == "exact"
