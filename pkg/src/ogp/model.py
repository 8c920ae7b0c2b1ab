"""Random K-uniform hypergraphs, the coupled model, the mean-field K-spin
Hamiltonian, coupled Galton-Watson hypertrees and the basic observables.

Spin configurations are plain ``numpy`` arrays of ``int8`` with entries in
{-1, +1}. Vertex ids are dense 0-based integers and edges are ordered
K-tuples; repeated edges and repeated vertices inside an edge are allowed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    InvalidArityError,
    InvalidSizeError,
    ParameterError,
    ResourceError,
)
from .seeding import stream

MAX_MEAN_FIELD_COUPLINGS = 10**8


def _check_arity(k):
    if int(k) != k or k < 2 or k % 2:
        raise InvalidArityError(f"edge arity must be an even integer >= 2, got {k}")


def _check_size(n):
    if int(n) != n or n < 1:
        raise InvalidSizeError(f"vertex count must be a positive integer, got {n}")


def _check_rate(lam):
    if not np.isfinite(lam) or lam < 0:
        raise ParameterError(f"connectivity must be a finite nonnegative number, got {lam}")


def _as_edges(edges, k) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, k), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != k:
        raise DimensionError(f"edges must have shape (m, {k}), got {arr.shape}")
    return arr


def spins(values) -> np.ndarray:
    """Validate and return a spin configuration as an ``int8`` array."""
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("a spin configuration is a nonempty 1-d vector")
    if not np.all((arr == 1) | (arr == -1)):
        raise ParameterError("spin entries must be exactly -1 or +1")
    return arr.astype(np.int8)


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """A K-uniform directed multigraph on vertices ``0..n-1``."""

    n: int
    k: int
    edges: np.ndarray

    def __post_init__(self):
        _check_size(self.n)
        _check_arity(self.k)
        edges = _as_edges(self.edges, self.k)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n):
            raise IndexError("edge entry outside [0, n)")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def degree(self) -> np.ndarray:
        """Vertex degrees counted with multiplicity."""
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def relabel(self, perm) -> "Hypergraph":
        """Return the graph with vertex ``v`` renamed ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Hypergraph(self.n, self.k, perm[self.edges])

    def to_dict(self) -> dict:
        return {"n": int(self.n), "k": int(self.k), "edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Hypergraph":
        return cls(int(d["n"]), int(d["k"]), d["edges"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Hypergraph":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (self.n, self.k) == (other.n, other.k) and np.array_equal(self.edges, other.edges)


def theta(sigma, edge) -> int:
    """Minus the product of the spins on ``edge``, counting repeats."""
    sigma = np.asarray(sigma)
    idx = np.asarray(edge, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= sigma.shape[0]):
        raise IndexError("edge index outside the configuration")
    return -int(np.prod(sigma[idx], dtype=np.int64))


def edge_products(g: Hypergraph, sigma) -> np.ndarray:
    """Product of spins over each edge, shape ``(num_edges,)``."""
    sigma = np.asarray(sigma, dtype=np.int8)
    if g.num_edges == 0:
        return np.zeros(0, dtype=np.int64)
    return np.prod(sigma[g.edges], axis=1, dtype=np.int64)


def hamiltonian(g: Hypergraph, sigma) -> int:
    """Sum of ``theta(sigma, e)`` over the edges of ``g`` (an integer)."""
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or sigma.shape[0] != g.n:
        raise DimensionError(f"configuration length {sigma.shape} does not match n={g.n}")
    return -int(edge_products(g, sigma).sum())


def cut_density(g: Hypergraph, sigma) -> float:
    return hamiltonian(g, sigma) / g.n


def magnetization(sigma) -> float:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or sigma.size == 0:
        raise DimensionError("magnetization of an empty configuration")
    return float(sigma.sum(dtype=np.int64)) / sigma.size


def overlap(s1, s2) -> float:
    s1 = np.asarray(s1)
    s2 = np.asarray(s2)
    if s1.ndim != 1 or s1.shape != s2.shape or s1.size == 0:
        raise DimensionError(f"overlap of configurations with shapes {s1.shape}, {s2.shape}")
    return float(np.dot(s1.astype(np.int64), s2.astype(np.int64))) / s1.size


def feasible_overlaps(n: int) -> np.ndarray:
    """The set S_N = {-1 + 2j/n : j = 0..n} of attainable overlaps."""
    return -1.0 + 2.0 * np.arange(n + 1) / n


# --------------------------------------------------------------------------
# samplers


def _uniform_edges(rng, count, n, k):
    return rng.integers(0, n, size=(count, k), dtype=np.int64)


def sample_er(k: int, lam: float, n: int, seed: int) -> Hypergraph:
    """Sample ER(K, lambda, N): Poisson(lambda*n) edges, each K uniform vertex ids."""
    _check_arity(k)
    _check_size(n)
    _check_rate(lam)
    count = int(stream(seed, "er", "count").poisson(lam * n))
    edges = _uniform_edges(stream(seed, "er", "edges"), count, n, k)
    return Hypergraph(n, k, edges)


@dataclass(frozen=True, eq=False)
class CoupledInstance:
    """Two hypergraphs sharing the edge set ``shared_edges``.

    Graph ``l`` (1 or 2) has edge set ``shared_edges + private_edges_l``.
    """

    n: int
    k: int
    t: float
    shared_edges: np.ndarray
    private_edges_1: np.ndarray
    private_edges_2: np.ndarray
    shared_vertices: np.ndarray = field(init=False)

    def __post_init__(self):
        _check_size(self.n)
        _check_arity(self.k)
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError(f"coupling t must lie in [0, 1], got {self.t}")
        for name in ("shared_edges", "private_edges_1", "private_edges_2"):
            arr = _as_edges(getattr(self, name), self.k)
            if arr.size and (arr.min() < 0 or arr.max() >= self.n):
                raise IndexError(f"{name} entry outside [0, n)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        mask = np.zeros(self.n, dtype=bool)
        mask[self.shared_edges.ravel()] = True
        mask.setflags(write=False)
        object.__setattr__(self, "shared_vertices", mask)

    def graph(self, which: int) -> Hypergraph:
        private = {1: self.private_edges_1, 2: self.private_edges_2}[which]
        return Hypergraph(self.n, self.k, np.concatenate([self.shared_edges, private]))

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "k": int(self.k),
            "t": float(self.t),
            "shared_edges": self.shared_edges.tolist(),
            "private_edges_1": self.private_edges_1.tolist(),
            "private_edges_2": self.private_edges_2.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoupledInstance":
        return cls(int(d["n"]), int(d["k"]), float(d["t"]), d["shared_edges"],
                   d["private_edges_1"], d["private_edges_2"])


def sample_coupled(k: int, lam: float, t: float, n: int, seed: int) -> CoupledInstance:
    """Sample the t-coupled pair: Poisson(t*lam*n) shared edges and two
    independent Poisson((1-t)*lam*n) private edge sets."""
    _check_arity(k)
    _check_size(n)
    _check_rate(lam)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"coupling t must lie in [0, 1], got {t}")
    sets = []
    for tag, rate in (("shared", t * lam * n), ("private1", (1 - t) * lam * n),
                      ("private2", (1 - t) * lam * n)):
        count = int(stream(seed, "coupled", tag, "count").poisson(rate))
        sets.append(_uniform_edges(stream(seed, "coupled", tag, "edges"), count, n, k))
    return CoupledInstance(n, k, float(t), *sets)


@dataclass(frozen=True, eq=False)
class MeanFieldInstance:
    """Gaussian couplings ``g[i1, ..., iK]`` of the fully connected K-spin model."""

    n: int
    k: int
    couplings: np.ndarray

    def __post_init__(self):
        _check_size(self.n)
        _check_arity(self.k)
        g = np.asarray(self.couplings, dtype=np.float64)
        if g.shape != (self.n,) * self.k:
            raise DimensionError(f"couplings must have shape {(self.n,) * self.k}")
        g.setflags(write=False)
        object.__setattr__(self, "couplings", g)

    @property
    def scale(self) -> float:
        return self.n ** (-(self.k - 1) / 2)

    def energy(self, sigma) -> float:
        return float(self.energies(np.asarray(sigma)[None, :])[0])

    def energies(self, sigmas) -> np.ndarray:
        """Exact energies of a batch of configurations, shape ``(B, n)``."""
        s = np.asarray(sigmas, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != self.n:
            raise DimensionError(f"expected configurations of length {self.n}")
        # contract the last coupling index first, carrying the batch axis last
        t = np.tensordot(self.couplings, s.T, axes=([self.k - 1], [0]))
        for axis in range(self.k - 2, -1, -1):
            t = np.einsum("...ib,bi->...b", t, s)
        return self.scale * t


def mf_energy(instance: MeanFieldInstance, sigma) -> float:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1 or sigma.shape[0] != instance.n:
        raise DimensionError(f"configuration length {sigma.shape} does not match n={instance.n}")
    return instance.energy(sigma)


def sample_mean_field(k: int, n: int, seed: int, max_couplings: int = MAX_MEAN_FIELD_COUPLINGS) -> MeanFieldInstance:
    _check_arity(k)
    _check_size(n)
    if n**k > max_couplings:
        raise ResourceError(f"n^K = {n}^{k} couplings exceeds the cap {max_couplings}")
    g = stream(seed, "mean_field").standard_normal(size=(n,) * k)
    return MeanFieldInstance(n, k, g)


# --------------------------------------------------------------------------
# coupled Galton-Watson hypertrees

SHARED, PRIVATE_1, PRIVATE_2 = 0, 1, 2


@dataclass(frozen=True, eq=False)
class CoupledGwTree:
    """A pair of coupled Galton-Watson hypertrees truncated at ``depth``.

    Node 0 is the root. ``node_shared[v]`` is the shared/non-shared tag,
    ``node_tree[v]`` is 0 for nodes present in both views and 1 or 2 for
    nodes that exist only in that tree's view, ``labels[v] = (x1, x2)``.
    Each edge row lists its kind (``SHARED``, ``PRIVATE_1``, ``PRIVATE_2``),
    and its K vertices with the parent in slot 0.
    """

    k: int
    depth: int
    node_shared: np.ndarray
    node_tree: np.ndarray
    node_depth: np.ndarray
    labels: np.ndarray
    edge_kind: np.ndarray
    edges: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.node_shared.shape[0])

    def view(self, which: int):
        """Tree ``which`` as ``(Hypergraph, labels, root)`` with nodes renumbered."""
        keep_edges = (self.edge_kind == SHARED) | (self.edge_kind == which)
        keep_nodes = (self.node_tree == 0) | (self.node_tree == which)
        ids = np.flatnonzero(keep_nodes)
        new_id = np.full(self.num_nodes, -1, dtype=np.int64)
        new_id[ids] = np.arange(ids.size)
        edges = new_id[self.edges[keep_edges]]
        return Hypergraph(int(ids.size), self.k, edges), self.labels[ids, which - 1].copy(), 0


def sample_coupled_gw(k: int, lam: float, t: float, depth: int, seed: int) -> CoupledGwTree:
    """Grow the coupled hypertrees generation by generation.

    The root and every shared node draw Poisson(t*lam*K) shared edges plus two
    independent Poisson((1-t)*lam*K) private sets, one per tree. A node that
    exists in only one tree draws Poisson(lam*K) private edges of that tree.
    The root is shared iff it has at least one shared edge; children of a
    shared edge are shared, all other children are not.
    """
    _check_arity(k)
    _check_rate(lam)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"coupling t must lie in [0, 1], got {t}")
    if int(depth) != depth or depth < 0:
        raise ParameterError(f"depth must be a nonnegative integer, got {depth}")
    rng = stream(seed, "coupled_gw")
    mean_shared = t * lam * k
    mean_private = (1 - t) * lam * k

    shared = [False]
    tree = [0]
    level = [0]
    edge_kind: list[int] = []
    edge_rows: list[list[int]] = []

    def add_children(parent, kind, child_shared, child_tree):
        row = [parent]
        for _ in range(k - 1):
            shared.append(child_shared)
            tree.append(child_tree)
            level.append(level[parent] + 1)
            row.append(len(shared) - 1)
        edge_kind.append(kind)
        edge_rows.append(row)

    frontier = [0]
    for gen in range(depth):
        nxt_start = len(shared)
        for v in frontier:
            if tree[v] == 0:
                n_sh = int(rng.poisson(mean_shared))
                n_p1 = int(rng.poisson(mean_private))
                n_p2 = int(rng.poisson(mean_private))
                if v == 0:
                    shared[0] = n_sh > 0
                for _ in range(n_sh):
                    add_children(v, SHARED, True, 0)
                for _ in range(n_p1):
                    add_children(v, PRIVATE_1, False, 1)
                for _ in range(n_p2):
                    add_children(v, PRIVATE_2, False, 2)
            else:
                for _ in range(int(rng.poisson(lam * k))):
                    add_children(v, tree[v], False, tree[v])
        frontier = list(range(nxt_start, len(shared)))
    if depth == 0:
        # the root's tag still depends on its (unexpanded) shared degree
        shared[0] = int(rng.poisson(mean_shared)) > 0

    node_shared = np.array(shared, dtype=bool)
    x1 = rng.random(len(shared))
    x2 = rng.random(len(shared))
    x2 = np.where(node_shared, x1, x2)
    return CoupledGwTree(
        k=k,
        depth=int(depth),
        node_shared=node_shared,
        node_tree=np.array(tree, dtype=np.int8),
        node_depth=np.array(level, dtype=np.int64),
        labels=np.stack([x1, x2], axis=1),
        edge_kind=np.array(edge_kind, dtype=np.int8),
        edges=np.array(edge_rows, dtype=np.int64).reshape(-1, k),
    )
