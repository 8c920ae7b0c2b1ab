"""Exact and heuristic ground states, constrained pair maxima and overlap scans.

Every energy source (a hypergraph or a mean-field instance) is first reduced
to parity terms: H(sigma) = const + sum_t w_t prod_{v in t} sigma_v, where t
is the set of vertices that occur an odd number of times in an edge or
coupling index. Two independent exact routes are built on this:

* ``build_energy_table`` computes all 2^n energies with a fast Walsh-Hadamard
  transform of the term weights;
* ``brute_force_max`` walks a Gray code over half the hypercube and updates
  the energy incrementally, one spin flip at a time.

Bitmask convention: bit i set means sigma_i = +1.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import (
    DimensionError,
    InfeasibleError,
    InsufficientDataError,
    ParameterError,
    ResourceError,
)
from .model import Hypergraph, MeanFieldInstance, hamiltonian, mf_energy
from .seeding import derive_seed

MAX_EXACT_N = 28
MAX_EXACT_N_MEAN_FIELD = 20
MAX_PAIR_N = 20


# --------------------------------------------------------------------------
# parity-term representation


@dataclass(frozen=True, eq=False)
class Terms:
    """CSR list of parity terms: vertices of term t are ``verts[ptr[t]:ptr[t+1]]``."""

    n: int
    ptr: np.ndarray
    verts: np.ndarray
    weights: np.ndarray
    const: float
    integer: bool

    @property
    def count(self) -> int:
        return int(self.weights.size)

    def masks(self) -> np.ndarray:
        if self.n > 62:
            raise ResourceError("bitmask form needs n <= 62")
        return _term_masks(self.ptr, self.verts)


@numba.njit(cache=True)
def _odd_vertices(rows):
    m, k = rows.shape
    ptr = np.zeros(m + 1, dtype=np.int64)
    out = np.empty(m * k, dtype=np.int64)
    pos = 0
    for r in range(m):
        row = np.sort(rows[r])
        j = 0
        while j < k:
            c = 1
            while j + c < k and row[j + c] == row[j]:
                c += 1
            if c % 2 == 1:
                out[pos] = row[j]
                pos += 1
            j += c
        ptr[r + 1] = pos
    return ptr, out[:pos]


@numba.njit(cache=True)
def _term_masks(ptr, verts):
    m = ptr.size - 1
    out = np.zeros(m, dtype=np.int64)
    for t in range(m):
        acc = 0
        for j in range(ptr[t], ptr[t + 1]):
            acc ^= 1 << verts[j]
        out[t] = acc
    return out


def _merge_by_mask(n, ptr, verts, weights, integer):
    masks = _term_masks(ptr, verts)
    uniq, inv = np.unique(masks, return_inverse=True)
    w = np.zeros(uniq.size, dtype=np.int64 if integer else np.float64)
    np.add.at(w, inv, weights)
    const = w[0] if uniq.size and uniq[0] == 0 else 0
    keep = (uniq != 0) & (w != 0)
    uniq, w = uniq[keep], w[keep]
    bits = ((uniq[:, None] >> np.arange(n)) & 1).astype(bool)
    new_ptr = np.concatenate([[0], np.cumsum(bits.sum(axis=1))]).astype(np.int64)
    new_verts = np.nonzero(bits)[1].astype(np.int64)
    return Terms(n, new_ptr, new_verts, w, float(const), integer)


def terms(source, merge: bool | None = None) -> Terms:
    """Parity-term expansion of a hypergraph or mean-field instance.

    With ``merge`` (default when n <= 62) identical vertex sets are combined
    and the empty set is folded into the constant.
    """
    n = source.n
    merge = (n <= 62) if merge is None else merge
    if isinstance(source, Hypergraph):
        ptr, verts = _odd_vertices(source.edges)
        weights = -np.ones(source.num_edges, dtype=np.int64)
        integer = True
    elif isinstance(source, MeanFieldInstance):
        idx = np.indices((n,) * source.k).reshape(source.k, -1).T.astype(np.int64)
        ptr, verts = _odd_vertices(idx)
        weights = source.scale * source.couplings.ravel()
        integer = False
    else:
        raise TypeError(f"unsupported energy source {type(source).__name__}")
    if merge:
        return _merge_by_mask(n, ptr, verts, weights, integer)
    empty = ptr[1:] == ptr[:-1]
    const = weights[empty].sum()
    sizes = np.diff(ptr)[~empty]
    new_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return Terms(n, new_ptr, verts, weights[~empty], float(const), integer)


def energy(source, sigma):
    """H(sigma) for either kind of energy source."""
    if isinstance(source, Hypergraph):
        return hamiltonian(source, sigma)
    return mf_energy(source, sigma)


def mask_to_spins(mask: int, n: int) -> np.ndarray:
    return np.where((int(mask) >> np.arange(n)) & 1, 1, -1).astype(np.int8)


def spins_to_mask(sigma) -> int:
    sigma = np.asarray(sigma)
    return int(np.sum((sigma > 0).astype(np.int64) << np.arange(sigma.size, dtype=np.int64)))


def _check_exact_size(source, cap=None):
    if cap is None:
        cap = MAX_EXACT_N if isinstance(source, Hypergraph) else MAX_EXACT_N_MEAN_FIELD
    if source.n > cap:
        raise ResourceError(f"exhaustive enumeration needs n <= {cap}, got n={source.n}")


# --------------------------------------------------------------------------
# exhaustive energy table


@numba.njit(cache=True)
def _fwht(a):
    n = a.size
    hlen = 1
    while hlen < n:
        for i in range(0, n, 2 * hlen):
            for j in range(i, i + hlen):
                x = a[j]
                y = a[j + hlen]
                a[j] = x + y
                a[j + hlen] = x - y
        hlen *= 2


@dataclass(frozen=True, eq=False)
class EnergyTable:
    """All 2^n energies; ``values[mask]`` is H of the configuration ``mask``."""

    n: int
    values: np.ndarray

    @property
    def max(self):
        return self.values.max()

    def argmax(self) -> int:
        return int(np.argmax(self.values))


def build_energy_table(source) -> EnergyTable:
    """Exact table of H over all bitmasks via a Walsh-Hadamard transform."""
    _check_exact_size(source)
    tm = terms(source)
    n = source.n
    size = 1 << n
    dtype = np.int32 if tm.integer else np.float64
    if tm.integer and max(abs(tm.const) + np.abs(tm.weights).sum(), 1) >= 2**31:
        dtype = np.int64
    a = np.zeros(size, dtype=dtype)
    np.add.at(a, tm.masks(), tm.weights.astype(dtype))
    _fwht(a)
    # a[y] = sum_t w_t (-1)^{|t & y|}; values[mask] = const + a[~mask]
    values = a[::-1].copy()
    del a
    values += dtype(tm.const) if tm.integer else tm.const
    # every parity term has even size, so H(sigma) = H(-sigma); copy one half
    # onto the other so the symmetry holds bit for bit
    half = size >> 1
    values[:half] = values[half:][::-1]
    values.setflags(write=False)
    return EnergyTable(n, values)


@numba.njit(cache=True)
def _gray_scan(n, ptr, verts, weights, inc_ptr, inc_terms, const):
    # fix sigma_{n-1} = +1, start with every other spin at -1
    m = weights.size
    chi = np.empty(m, dtype=np.int8)
    h = const
    for t in range(m):
        c = 1
        for j in range(ptr[t], ptr[t + 1]):
            if verts[j] != n - 1:
                c = -c
        chi[t] = c
        h += weights[t] * c
    mask = np.int64(1) << (n - 1)
    best = h
    best_mask = mask
    total = np.int64(1) << (n - 1)
    for step in range(1, total):
        i = 0
        s = step
        while (s & 1) == 0:
            s >>= 1
            i += 1
        delta = weights[0] - weights[0]
        for j in range(inc_ptr[i], inc_ptr[i + 1]):
            t = inc_terms[j]
            delta -= 2 * weights[t] * chi[t]
            chi[t] = -chi[t]
        h += delta
        mask ^= np.int64(1) << i
        if h > best:
            best = h
            best_mask = mask
    return best, best_mask


def _incidence(tm: Terms):
    owner = np.repeat(np.arange(tm.count, dtype=np.int64), np.diff(tm.ptr))
    order = np.argsort(tm.verts, kind="stable")
    inc_terms = owner[order]
    counts = np.bincount(tm.verts, minlength=tm.n)
    inc_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return inc_ptr, inc_terms


def brute_force_max(source):
    """Exact ``(max H, argmax sigma)`` by a Gray-code walk over half the cube."""
    _check_exact_size(source, MAX_EXACT_N)
    tm = terms(source)
    n = source.n
    if tm.count == 0:
        sigma = np.ones(n, dtype=np.int8)
        best = energy(source, sigma)
        return best, sigma
    inc_ptr, inc_terms = _incidence(tm)
    w = tm.weights.astype(np.int64 if tm.integer else np.float64)
    const = np.int64(tm.const) if tm.integer else float(tm.const)
    _, best_mask = _gray_scan(n, tm.ptr, tm.verts, w, inc_ptr, inc_terms, const)
    sigma = mask_to_spins(best_mask, n)
    # report the energy recomputed from scratch on the original source
    return energy(source, sigma), sigma


# --------------------------------------------------------------------------
# pairs at prescribed overlap


@numba.njit(cache=True)
def _distance_profile(values, n):
    # g[d, m] = max over |x| = d (x within the bits processed so far) of values[m ^ x]
    size = values.size
    neg = -np.inf
    g = np.full((n + 1, size), neg)
    g[0, :] = values
    for j in range(n):
        bit = 1 << j
        for d in range(j + 1, 0, -1):
            for m in range(size):
                v = g[d - 1, m ^ bit]
                if v > g[d, m]:
                    g[d, m] = v
    out = np.full(n + 1, neg)
    for d in range(n + 1):
        for m in range(size):
            v = values[m] + g[d, m]
            if v > out[d]:
                out[d] = v
    return out


def pair_profile(table: EnergyTable) -> np.ndarray:
    """``best[d]`` = max of H(s1) + H(s2) over pairs at Hamming distance d."""
    if table.n > MAX_PAIR_N:
        raise ResourceError(f"pair maximization needs n <= {MAX_PAIR_N}")
    return _distance_profile(table.values.astype(np.float64), table.n)


def _admissible_distances(n, values=None, interval=None, tol=1e-9):
    overlaps = 1.0 - 2.0 * np.arange(n + 1) / n
    ok = np.zeros(n + 1, dtype=bool)
    if values is not None:
        for a in np.atleast_1d(np.asarray(values, dtype=float)):
            ok |= np.abs(overlaps - a) <= tol
    if interval is not None:
        lo, hi = interval
        ok |= (overlaps >= lo - tol) & (overlaps <= hi + tol)
    return ok, overlaps


def constrained_pair_max(table: EnergyTable, values=None, interval=None) -> float:
    """MCE_N(A) = (1/n) max over pairs with overlap in A of H(s1) + H(s2).

    ``A`` is given as a set of overlap ``values`` and/or a closed ``interval``.
    """
    if values is None and interval is None:
        raise ParameterError("give a set of overlap values or an interval")
    ok, _ = _admissible_distances(table.n, values, interval)
    if not ok.any():
        raise InfeasibleError("the admissible set contains no feasible overlap")
    prof = pair_profile(table)
    return float(prof[ok].max()) / table.n


def mce_by_overlap(table: EnergyTable):
    """Feasible overlaps q = 1 - 2d/n and MCE_N({q}) for each."""
    prof = pair_profile(table)
    d = np.arange(table.n + 1)
    return 1.0 - 2.0 * d / table.n, prof / table.n


# --------------------------------------------------------------------------
# simulated annealing


@dataclass
class AnnealOpts:
    sweeps_per_spin: int = 2000
    t_start: float = 2.0
    t_end: float = 0.01
    restarts: int = 50


@numba.njit(cache=True)
def _anneal(n, ptr, verts, weights, inc_ptr, inc_terms, const, steps, t0, t1, seed,
            record, rec_rel, track_masks):
    np.random.seed(seed)
    m = weights.size
    sigma = np.empty(n, dtype=np.int8)
    mask = np.int64(0)
    for i in range(n):
        if np.random.random() < 0.5:
            sigma[i] = 1
            if track_masks:
                mask |= np.int64(1) << i
        else:
            sigma[i] = -1
    chi = np.empty(m, dtype=np.int8)
    h = const
    for t in range(m):
        c = 1
        for j in range(ptr[t], ptr[t + 1]):
            c *= sigma[verts[j]]
        chi[t] = c
        h += weights[t] * c
    best = h
    best_sigma = sigma.copy()
    rec_masks = np.empty(0, dtype=np.int64)
    rec_vals = np.empty(0, dtype=np.float64)
    buf_m = np.empty(1024, dtype=np.int64)
    buf_v = np.empty(1024, dtype=np.float64)
    nrec = 0
    ratio = t1 / t0
    for k in range(steps):
        temp = t0 * ratio ** (k / max(steps - 1, 1))
        i = np.random.randint(0, n)
        delta = 0.0
        for j in range(inc_ptr[i], inc_ptr[i + 1]):
            t = inc_terms[j]
            delta -= 2.0 * weights[t] * chi[t]
        if delta >= 0 or np.random.random() < math.exp(delta / temp):
            for j in range(inc_ptr[i], inc_ptr[i + 1]):
                t = inc_terms[j]
                chi[t] = -chi[t]
            sigma[i] = -sigma[i]
            h += delta
            if track_masks:
                mask ^= np.int64(1) << i
            if h > best:
                best = h
                best_sigma[:] = sigma
            if record and h >= best - rec_rel * abs(best):
                if nrec == buf_m.size:
                    nb_m = np.empty(2 * nrec, dtype=np.int64)
                    nb_v = np.empty(2 * nrec, dtype=np.float64)
                    nb_m[:nrec] = buf_m
                    nb_v[:nrec] = buf_v
                    buf_m = nb_m
                    buf_v = nb_v
                buf_m[nrec] = mask
                buf_v[nrec] = h
                nrec += 1
    rec_masks = buf_m[:nrec].copy()
    rec_vals = buf_v[:nrec].copy()
    return best, best_sigma, sigma, rec_masks, rec_vals


@dataclass
class AnnealResult:
    best_energy: float
    best_sigma: np.ndarray
    restart_best: np.ndarray
    restart_sigmas: list
    visited_masks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    visited_energies: np.ndarray = field(default_factory=lambda: np.zeros(0))


def anneal(source, opts: AnnealOpts | None = None, seed: int = 0, record_rel: float | None = None) -> AnnealResult:
    """Metropolis single-flip annealing with geometric cooling, several restarts.

    With ``record_rel`` set (and n <= 62) every accepted state whose energy is
    within ``record_rel * |best so far|`` of the running best is recorded.
    """
    opts = opts or AnnealOpts()
    tm = terms(source)
    n = source.n
    inc_ptr, inc_terms = _incidence(tm)
    w = tm.weights.astype(np.float64)
    steps = int(opts.sweeps_per_spin * n)
    track = record_rel is not None and n <= 62
    best_e, best_s = -np.inf, None
    restart_best, restart_sigmas = [], []
    vm, ve = [], []
    for r in range(opts.restarts):
        s = derive_seed(seed, "anneal", r) & 0xFFFFFFFF
        b, bs, _, rm, rv = _anneal(n, tm.ptr, tm.verts, w, inc_ptr, inc_terms, float(tm.const), steps,
                                   opts.t_start, opts.t_end, s, track, record_rel or 0.0, track)
        # exact energy of the restart's best state
        e = energy(source, bs)
        restart_best.append(e)
        restart_sigmas.append(bs)
        if e > best_e:
            best_e, best_s = e, bs
        if track:
            vm.append(rm)
            ve.append(rv)
    res = AnnealResult(best_e, best_s, np.array(restart_best), restart_sigmas)
    if track:
        res.visited_masks = np.concatenate(vm)
        res.visited_energies = np.concatenate(ve)
    return res


def relative_threshold(best: float, eta: float) -> float:
    """(1 - eta) * best, written as best - eta * |best| so a nonpositive best
    still admits itself."""
    return float(best) - eta * abs(float(best))


def near_optimal_sample(source, eta: float, opts: AnnealOpts | None = None, seed: int = 0):
    """Distinct configurations met by annealing with H >= (1 - eta) * best,
    where best is the highest energy seen across all restarts.

    For n <= 62 every recorded visited state is considered; for larger n only
    the per-restart best states are.
    """
    if not 0.0 < eta < 1.0:
        raise ParameterError(f"eta must lie in (0, 1), got {eta}")
    n = source.n
    res = anneal(source, opts, seed, record_rel=eta if n <= 62 else None)
    best = res.best_energy
    thr = relative_threshold(best, eta)
    out = []
    if n <= 62:
        exact_masks = [spins_to_mask(s) for s in res.restart_sigmas]
        masks = np.unique(np.concatenate([res.visited_masks, np.array(exact_masks, dtype=np.int64)]))
        for mk in masks:
            s = mask_to_spins(mk, n)
            if energy(source, s) >= thr - 1e-9:
                out.append(s)
    else:
        seen = set()
        for s in res.restart_sigmas:
            key = s.tobytes()
            if key not in seen and energy(source, s) >= thr - 1e-9:
                seen.add(key)
                out.append(s)
    return out, {"best_energy": float(best), "threshold": float(thr)}


# --------------------------------------------------------------------------
# overlap histograms


@dataclass
class OverlapHistogram:
    edges: np.ndarray
    counts: np.ndarray
    threshold: float
    meta: dict = field(default_factory=dict)

    @property
    def n_pairs(self) -> int:
        return int(self.counts.sum())

    def mass(self, lo: float, hi: float) -> int:
        """Pairs in bins lying inside [lo, hi]."""
        inside = (self.edges[:-1] >= lo - 1e-12) & (self.edges[1:] <= hi + 1e-12)
        return int(self.counts[inside].sum())

    def counts_in(self, lo: float, hi: float) -> np.ndarray:
        """Counts of bins whose centre lies in [lo, hi]."""
        c = 0.5 * (self.edges[:-1] + self.edges[1:])
        return self.counts[(c >= lo) & (c <= hi)]

    def __add__(self, other: "OverlapHistogram") -> "OverlapHistogram":
        if not np.array_equal(self.edges, other.edges):
            raise DimensionError("histograms with different bins")
        return OverlapHistogram(self.edges, self.counts + other.counts, float("nan"),
                                {"merged": [self.meta, other.meta]})


def aligned_bins(n: int) -> np.ndarray:
    """Bin edges on [0, 1] with one bin per attainable |R| value {(n - 2d)/n}."""
    levels = np.arange(n % 2, n + 1, 2) / n
    mids = 0.5 * (levels[1:] + levels[:-1])
    return np.concatenate([[0.0], mids, [1.0]])


def _histogram_from_sets(mat, n, edges):
    """|overlap| histogram over unordered distinct pairs of rows of ``mat``."""
    mat = np.asarray(mat, dtype=np.int64)
    k = mat.shape[0]
    pair_r = []
    for i in range(k - 1):
        pair_r.append(np.abs(mat[i + 1:] @ mat[i]) / n)
    r = np.concatenate(pair_r) if pair_r else np.zeros(0)
    counts, _ = np.histogram(r, bins=edges)
    return counts


def instance_hash(source) -> str:
    if isinstance(source, Hypergraph):
        payload = source.to_json().encode()
    else:
        payload = source.couplings.tobytes() + f"{source.n},{source.k}".encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def overlap_gap_scan(source, eta: float, exhaustive: bool | None = None, bins=None,
                     opts: AnnealOpts | None = None, seed: int = 0, samples=None) -> OverlapHistogram:
    """Histogram of |R| over all distinct pairs of eta-optimal configurations.

    Exhaustive mode (default when the table is affordable) takes every
    configuration with H >= (1 - eta) * max H; otherwise the set comes from
    ``near_optimal_sample``. ``samples`` bypasses both. ``bins`` is an int
    (uniform bins) or an edge array; exhaustive scans default to one bin per
    attainable |R| value, sampled scans to 50 uniform bins.
    """
    n = source.n if source is not None else len(samples[0])
    meta = {"eta": eta, "seed": seed}
    if samples is not None:
        mat = np.array(samples, dtype=np.int64)
        thr = float("nan")
        meta["mode"] = "given"
        default_bins = 50
    else:
        if exhaustive is None:
            cap = MAX_EXACT_N if isinstance(source, Hypergraph) else MAX_EXACT_N_MEAN_FIELD
            exhaustive = n <= min(cap, 24)
        meta["instance"] = instance_hash(source)
        if exhaustive:
            table = build_energy_table(source)
            best = float(table.max)
            thr = relative_threshold(best, eta)
            masks = np.flatnonzero(table.values >= thr - 1e-9 * max(1.0, abs(best)))
            mat = np.where((masks[:, None] >> np.arange(n)) & 1, 1, -1)
            meta.update(mode="exhaustive", best_energy=best)
            default_bins = aligned_bins(n)
        else:
            samp, info = near_optimal_sample(source, eta, opts, seed)
            mat = np.array(samp, dtype=np.int64).reshape(len(samp), n)
            thr = info["threshold"]
            meta.update(mode="annealing", best_energy=info["best_energy"])
            default_bins = 50
    if mat.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 configurations, got {mat.shape[0]}")
    bins = default_bins if bins is None else bins
    edges = np.linspace(0.0, 1.0, int(bins) + 1) if np.isscalar(bins) else np.asarray(bins, dtype=float)
    counts = _histogram_from_sets(mat, n, edges)
    meta["threshold"] = thr
    meta["n_configs"] = int(mat.shape[0])
    return OverlapHistogram(edges, counts, thr, meta)


# --------------------------------------------------------------------------
# dilution experiment


def dilution_compare(k: int, lambda_list, n: int, reps: int, seed: int, exact: bool | None = None,
                     opts: AnnealOpts | None = None, p_k: float | None = None):
    """Mean max cut density and its ratio to sqrt(lambda) for each lambda.

    Instances at different lambda share one edge stream per repetition:
    the graph at lambda uses the first N(lambda) edges, with N built from
    nested Poisson increments, so larger lambda always contains the smaller
    graph. Exact mode (n <= 28) uses ``brute_force_max``; otherwise annealing,
    and the rows are flagged as lower bounds.
    """
    from .seeding import stream

    lams = np.asarray(sorted(float(l) for l in lambda_list))
    if lams.size == 0 or np.any(lams < 0):
        raise ParameterError("lambda list must be nonempty and nonnegative")
    exact = (n <= MAX_EXACT_N) if exact is None else exact
    if exact and n > MAX_EXACT_N:
        raise ResourceError(f"exact mode needs n <= {MAX_EXACT_N}")
    dens = np.zeros((reps, lams.size))
    for r in range(reps):
        rng_c = stream(seed, "dilution", r, "counts")
        counts = np.cumsum(rng_c.poisson(np.diff(np.concatenate([[0.0], lams])) * n))
        edges = stream(seed, "dilution", r, "edges").integers(0, n, size=(int(counts[-1]), k))
        for j, c in enumerate(counts):
            g = Hypergraph(n, k, edges[: int(c)])
            if g.num_edges == 0:
                dens[r, j] = 0.0
            elif exact:
                dens[r, j] = brute_force_max(g)[0] / n
            else:
                dens[r, j] = anneal(g, opts, derive_seed(seed, "dilution", r, j)).best_energy / n
    rows = []
    for j, lam in enumerate(lams):
        mean = float(dens[:, j].mean())
        se = float(dens[:, j].std(ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
        rows.append({
            "lambda": float(lam),
            "mean_max_cut_density": mean,
            "se": se,
            "ratio": mean / math.sqrt(lam) if lam > 0 else None,
            "p_k": p_k,
            "mode": "exact" if exact else "annealing_lower_bound",
        })
    return rows


def histogram_csv_rows(hist: OverlapHistogram):
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)]


def sidecar_json(hist: OverlapHistogram) -> str:
    return json.dumps(hist.meta, sort_keys=True, default=float)
