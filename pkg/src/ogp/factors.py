"""Factor-of-i.i.d. local algorithms on hypergraphs, coupled pairs and coupled trees.

Each vertex receives one uniform label X(v). A factor of radius r maps the
labelled r-neighbourhood of a vertex to a spin; all factors here are run
synchronously on the whole graph, so the value at v depends only on B_r(v).

Kinds:

* ``random``: sigma_v = +1 iff X(v) >= 1/2 (radius 0);
* ``glauber:rounds=R,beta=B``: R synchronous heat-bath rounds started from
  the random rule, with per-round uniforms drawn from a counter generator
  keyed by floor(X(v) 2^53) (radius R);
* ``edge_majority:radius=R``: R synchronous rounds of sigma_v <- sign(h_v)
  from the random rule, zero field resolving to +1 (radius R);
* ``constant``: sigma = +1 everywhere (a degenerate radius-0 test factor).

The local field is h_v = sum over occurrences (e, slot) of v of minus the
product of the other K-1 spins of e, so H changes by -2 sigma_v h_v when
sigma_v flips (for vertices that appear once in each edge).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DepthError, ParameterError
from .model import (
    CoupledGwTree,
    CoupledInstance,
    Hypergraph,
    cut_density,
    magnetization,
    overlap,
    sample_coupled,
    sample_coupled_gw,
    sample_er,
)
from .seeding import counter_uniforms, derive_seed, stream

KINDS = ("random", "glauber", "edge_majority", "constant")


@dataclass(frozen=True)
class FactorSpec:
    kind: str
    radius: int = 0
    beta: float | None = None
    rounds: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown factor kind {self.kind!r}")
        if int(self.radius) != self.radius or self.radius < 0:
            raise ParameterError("radius must be a nonnegative integer")
        if self.kind == "glauber":
            if self.rounds is None or self.rounds < 0 or int(self.rounds) != self.rounds:
                raise ParameterError("glauber needs an integer rounds >= 0")
            if self.beta is None or not self.beta > 0:
                raise ParameterError("glauber needs beta > 0")
            if self.radius != self.rounds:
                raise ParameterError("glauber radius equals its number of rounds")
        elif self.kind in ("random", "constant") and self.radius != 0:
            raise ParameterError(f"{self.kind} factor has radius 0")

    @classmethod
    def random(cls):
        return cls("random")

    @classmethod
    def glauber(cls, rounds: int, beta: float):
        return cls("glauber", radius=int(rounds), beta=float(beta), rounds=int(rounds))

    @classmethod
    def edge_majority(cls, radius: int):
        return cls("edge_majority", radius=int(radius))

    @classmethod
    def parse(cls, text: str) -> "FactorSpec":
        """Parse ``random``, ``constant``, ``glauber:rounds=R,beta=B`` or
        ``edge_majority:radius=R``."""
        kind, _, rest = text.strip().partition(":")
        params = {}
        if rest:
            for item in rest.split(","):
                key, eq, val = item.partition("=")
                if not eq:
                    raise ParameterError(f"malformed factor parameter {item!r}")
                params[key.strip()] = val.strip()
        try:
            if kind == "glauber":
                if set(params) - {"rounds", "beta"}:
                    raise ParameterError(f"unknown glauber parameters in {text!r}")
                return cls.glauber(int(params["rounds"]), float(params["beta"]))
            if kind == "edge_majority":
                if set(params) - {"radius"}:
                    raise ParameterError(f"unknown edge_majority parameters in {text!r}")
                return cls.edge_majority(int(params["radius"]))
        except KeyError as exc:
            raise ParameterError(f"factor {text!r} is missing {exc.args[0]}") from None
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"bad number in factor {text!r}") from None
        if params:
            raise ParameterError(f"factor {kind!r} takes no parameters")
        return cls(kind)

    def __str__(self):
        if self.kind == "glauber":
            return f"glauber:rounds={self.rounds},beta={self.beta!r}"
        if self.kind == "edge_majority":
            return f"edge_majority:radius={self.radius}"
        return self.kind


def local_field(g: Hypergraph, sigma: np.ndarray) -> np.ndarray:
    """h_v = -sum_{(e, s): e[s] = v} prod_{s' != s} sigma_{e[s']}."""
    if g.num_edges == 0:
        return np.zeros(g.n)
    prod = np.prod(sigma[g.edges], axis=1, dtype=np.int64)
    # product of the other slots equals prod * sigma_v since sigma_v = +-1
    tot = np.bincount(g.edges.ravel(), weights=np.repeat(prod, g.k), minlength=g.n)
    return -sigma * tot


def run_factor(g: Hypergraph, f: FactorSpec, seed: int = 0, labels=None) -> np.ndarray:
    """Apply ``f`` at every vertex of ``g``; labels default to the seed's stream."""
    if labels is None:
        labels = stream(seed, "labels").random(g.n)
    labels = np.asarray(labels, dtype=float)
    if labels.shape != (g.n,):
        raise ParameterError(f"need {g.n} labels, got shape {labels.shape}")
    if f.kind == "constant":
        return np.ones(g.n, dtype=np.int8)
    sigma = np.where(labels >= 0.5, 1, -1).astype(np.int8)
    if f.kind == "random":
        return sigma
    if f.kind == "edge_majority":
        for _ in range(f.radius):
            h = local_field(g, sigma)
            sigma = np.where(h >= 0, 1, -1).astype(np.int8)
        return sigma
    keys = np.floor(labels * 2.0**53).astype(np.uint64)
    for r in range(f.rounds):
        h = local_field(g, sigma)
        u = counter_uniforms(keys, r)
        sigma = np.where(u < 0.5 * (1.0 + np.tanh(f.beta * h)), 1, -1).astype(np.int8)
    return sigma


def coupled_labels(ci: CoupledInstance, seed: int):
    """(X1, X2): X2 equals X1 on shared vertices and an independent Y elsewhere."""
    x1 = stream(seed, "labels", 1).random(ci.n)
    y = stream(seed, "labels", 2).random(ci.n)
    return x1, np.where(ci.shared_vertices, x1, y)


def run_factor_coupled(ci: CoupledInstance, f: FactorSpec, seed: int = 0):
    x1, x2 = coupled_labels(ci, seed)
    return run_factor(ci.graph(1), f, labels=x1), run_factor(ci.graph(2), f, labels=x2)


def _mean_se(a):
    a = np.asarray(a, dtype=float)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def overlap_curve(f: FactorSpec, k: int, lam: float, n: int, t_grid, reps: int, seed: int):
    """For each t, ``reps`` independent coupled instances and runs.

    Rows carry the CSV columns (t, mean_overlap, se_overlap, mean_mag,
    mean_cut_density) plus standard errors of the last two; magnetization and
    cut density average both systems of a run.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ParameterError("empty t grid")
    if reps < 2:
        raise ParameterError("reps must be at least 2")
    rows = []
    for ti, t in enumerate(t_grid):
        r_vals, m_vals, c_vals = [], [], []
        for r in range(reps):
            s = derive_seed(seed, "curve", ti, r)
            ci = sample_coupled(k, lam, t, n, s)
            s1, s2 = run_factor_coupled(ci, f, s)
            r_vals.append(overlap(s1, s2))
            m_vals.append(0.5 * (magnetization(s1) + magnetization(s2)))
            c_vals.append(0.5 * (cut_density(ci.graph(1), s1) + cut_density(ci.graph(2), s2)))
        mr, sr = _mean_se(r_vals)
        mm, sm = _mean_se(m_vals)
        mc, sc = _mean_se(c_vals)
        rows.append({"t": t, "mean_overlap": mr, "se_overlap": sr, "mean_mag": mm,
                     "mean_cut_density": mc, "se_mag": sm, "se_cut_density": sc})
    return rows


CURVE_COLUMNS = ("t", "mean_overlap", "se_overlap", "mean_mag", "mean_cut_density")


def eval_on_tree(tree: CoupledGwTree, f: FactorSpec):
    """(sigma1, sigma2) at the root of the two views of a coupled tree."""
    if tree.depth < f.radius:
        raise DepthError(f"tree depth {tree.depth} is below the factor radius {f.radius}")
    out = []
    for which in (1, 2):
        g, labels, root = tree.view(which)
        out.append(int(run_factor(g, f, labels=labels)[root]))
    return out[0], out[1]


def tree_overlap(f: FactorSpec, k: int, lam: float, t: float, trees: int, seed: int):
    """Monte Carlo estimate of R(f, t) = E sigma1 sigma2 at the root, with its
    standard error and the mean root spin of tree 1."""
    prods, first = [], []
    for i in range(trees):
        tree = sample_coupled_gw(k, lam, t, f.radius, derive_seed(seed, "tree", i))
        a, b = eval_on_tree(tree, f)
        prods.append(a * b)
        first.append(a)
    mr, sr = _mean_se(prods)
    mm, sm = _mean_se(first)
    return {"t": t, "mean_overlap": mr, "se_overlap": sr, "mean_root_spin": mm, "se_root_spin": sm}


def concentration_experiment(f: FactorSpec, k: int, lam: float, n_list, reps: int, seed: int):
    """Empirical variances of cut density and magnetization for each n."""
    if reps < 10:
        raise ParameterError("reps must be at least 10")
    rows = []
    for n in n_list:
        cuts, mags = [], []
        for r in range(reps):
            s = derive_seed(seed, "concentration", n, r)
            g = sample_er(k, lam, int(n), s)
            sigma = run_factor(g, f, s)
            cuts.append(cut_density(g, sigma))
            mags.append(magnetization(sigma))
        rows.append({"n": int(n), "var_cut_density": float(np.var(cuts, ddof=1)),
                     "var_magnetization": float(np.var(mags, ddof=1))})
    return rows
