"""Zero-temperature Parisi functional for the pure K-spin mixture xi(s) = s^K.

The functional is evaluated for step order parameters, for which the Parisi
PDE is solved exactly piece by piece by the Cole-Hopf transform:

    Phi(s_{i-1}, x) = (1/m_i) log E exp(m_i Phi(s_i, x + sigma_i Z)),
    sigma_i^2 = xi'(s_i) - xi'(s_{i-1}),

with the heat step E Phi(s_i, x + sigma_i Z) when m_i = 0. Slices live on a
uniform symmetric grid and are treated as piecewise linear functions that
continue linearly beyond the grid with their edge slopes; the Gaussian
integral of each linear piece is done in closed form (in the log domain), so
the step is accurate for any ratio sigma/h and any tilt m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, logsumexp, ndtr

from .errors import DomainError, InvalidOrderParameterError, ParameterError
from .seeding import stream

M_CAP = 100.0
_SQRT2PI = math.sqrt(2.0 * math.pi)
# tilts below this are integrated as a heat step
_M_HEAT = 1e-8


@dataclass(frozen=True)
class MixtureXi:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2 or self.k % 2:
            raise ParameterError(f"K must be an even integer >= 2, got {self.k}")

    def xi(self, s):
        return np.asarray(s, dtype=float) ** self.k

    def dxi(self, s):
        return self.k * np.asarray(s, dtype=float) ** (self.k - 1)

    def ddxi(self, s):
        return self.k * (self.k - 1) * np.asarray(s, dtype=float) ** (self.k - 2)

    def s_ddxi_integral(self, a, b):
        """int_a^b s xi''(s) ds = (K-1)(b^K - a^K)."""
        return (self.k - 1) * (float(b) ** self.k - float(a) ** self.k)


class StepGamma:
    """gamma(s) = values[i] on [breakpoints[i], breakpoints[i+1])."""

    def __init__(self, breakpoints, values):
        b = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or b.size != v.size + 1 or v.size == 0:
            raise InvalidOrderParameterError("need len(breakpoints) == len(values) + 1 >= 2")
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise InvalidOrderParameterError("breakpoints must increase strictly from 0 to 1")
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(np.diff(v) < 0):
            raise InvalidOrderParameterError("values must be finite, nonnegative and nondecreasing")
        b.setflags(write=False)
        v.setflags(write=False)
        self.breakpoints = b
        self.values = v

    @classmethod
    def constant(cls, m: float) -> "StepGamma":
        return cls([0.0, 1.0], [m])

    @property
    def num_steps(self) -> int:
        return int(self.values.size)

    def __repr__(self):
        return f"StepGamma(breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"

    def __eq__(self, other):
        return (isinstance(other, StepGamma) and np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.values, other.values))

    def __call__(self, s):
        idx = np.searchsorted(self.breakpoints, np.asarray(s, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, self.values.size - 1)]

    def with_breakpoint(self, s: float) -> "StepGamma":
        """The same function with ``s`` added to the breakpoints (no-op if present)."""
        if s <= 0.0 or s >= 1.0 or np.any(self.breakpoints == s):
            return self
        i = int(np.searchsorted(self.breakpoints, s)) - 1
        b = np.insert(self.breakpoints, i + 1, s)
        v = np.insert(self.values, i, self.values[i])
        return StepGamma(b, v)

    def scaled_below(self, q: float, c: float) -> "StepGamma":
        """c * gamma on [0, q) and gamma on [q, 1); requires 0 <= c <= 1."""
        if not 0.0 <= c <= 1.0:
            raise ParameterError(f"scale must lie in [0, 1], got {c}")
        g = self.with_breakpoint(q)
        v = np.where(g.breakpoints[:-1] < q, c * g.values, g.values)
        return StepGamma(g.breakpoints, v)

    def pieces(self, lo: float = 0.0, hi: float = 1.0):
        """Constant pieces ``(a, b, m)`` covering [lo, hi]."""
        out = []
        for a, b, m in zip(self.breakpoints[:-1], self.breakpoints[1:], self.values):
            a2, b2 = max(a, lo), min(b, hi)
            if b2 > a2:
                out.append((float(a2), float(b2), float(m)))
        return out

    def correction(self, xi: MixtureXi, lo: float = 0.0, hi: float = 1.0) -> float:
        """int_lo^hi s xi''(s) gamma(s) ds in closed form."""
        return float(sum(m * xi.s_ddxi_integral(a, b) for a, b, m in self.pieces(lo, hi)))

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StepGamma":
        return cls(d["breakpoints"], d["values"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "StepGamma":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GridOpts:
    h: float = 0.02
    x_max: float | None = None
    # cells further than this many standard deviations from the tilted
    # Gaussian centre are dropped (their weight is below exp(-50))
    band_sd: float = 10.0

    def grid(self, xi: MixtureXi) -> np.ndarray:
        need = 4.0 * math.sqrt(float(xi.dxi(1.0)))
        x_max = need + 2.0 if self.x_max is None else float(self.x_max)
        if x_max < need:
            raise DomainError(f"x_max={x_max} is below 4*sqrt(xi'(1))={need:.6g}")
        if not self.h > 0:
            raise ParameterError("grid spacing must be positive")
        n_half = int(math.ceil(x_max / self.h - 1e-9))
        return self.h * np.arange(-n_half, n_half + 1, dtype=float)


# --------------------------------------------------------------------------
# one backward Cole-Hopf step on a piecewise linear slice


def _log_diff_ndtr(a, b):
    """log(Phi(b) - Phi(a)) for b >= a, stable in both tails."""
    upper = a > 0
    u = np.where(upper, -a, b)
    v = np.where(upper, -b, a)
    lu = log_ndtr(u)
    with np.errstate(divide="ignore"):
        return lu + np.log(-np.expm1(log_ndtr(v) - lu))


def _cell_window(x, idx, reach):
    """Cell indices within ``reach`` cells of each target node, clipped."""
    n_cells = x.size - 1
    w = int(math.ceil(reach))
    if 2 * w + 2 >= n_cells:
        cells = np.broadcast_to(np.arange(n_cells), (idx.size, n_cells))
        return cells, np.ones(cells.shape, dtype=bool)
    off = np.arange(-w - 1, w + 1)
    raw = idx[:, None] + off[None, :]
    valid = (raw >= 0) & (raw < n_cells)
    return np.clip(raw, 0, n_cells - 1), valid


def backward_step(f, x, sigma, m, band_sd=10.0, even=True, targets=None):
    """Apply one Cole-Hopf step of variance ``sigma**2`` and tilt ``m`` to the
    slice ``f`` sampled on the uniform grid ``x``.

    Returns the new slice on the same grid (or on ``x[targets]``). With
    ``even=True`` only nonnegative nodes are computed and the result is
    mirrored, so evenness holds exactly.
    """
    f = np.asarray(f, dtype=float)
    if sigma <= 1e-12:
        return f.copy() if targets is None else f[targets].copy()
    h = x[1] - x[0]
    if targets is None:
        idx = np.arange(x.size // 2, x.size) if even else np.arange(x.size)
    else:
        idx = np.asarray(targets)
    slopes = np.diff(f) / h
    bmax = float(np.max(np.abs(slopes))) if slopes.size else 0.0
    reach = (m * bmax * sigma**2 + band_sd * sigma) / h + 1.0
    cells, valid = _cell_window(x, idx, reach)
    # offsets from integer indices keep cell bounds exact relative to sigma
    d0 = (cells - idx[:, None]) * h
    b = slopes[cells]
    f0 = f[cells]
    X_lo, X_hi = x[0], x[-1]
    b_lo, b_hi = slopes[0], slopes[-1]
    xs1 = x[idx]

    if m > _M_HEAT:
        shift = m * b * sigma**2
        alpha = (d0 - shift) / sigma
        beta = (d0 + h - shift) / sigma
        terms = m * (f0 - b * d0) + 0.5 * (m * b * sigma) ** 2 + _log_diff_ndtr(alpha, beta)
        terms = np.where(valid, terms, -np.inf)
        right = (m * (f[-1] + b_hi * (xs1 - X_hi)) + 0.5 * (m * b_hi * sigma) ** 2
                 + log_ndtr((xs1 - X_hi + m * b_hi * sigma**2) / sigma))
        left = (m * (f[0] + b_lo * (xs1 - X_lo)) + 0.5 * (m * b_lo * sigma) ** 2
                + log_ndtr((X_lo - xs1 - m * b_lo * sigma**2) / sigma))
        allt = np.concatenate([terms, right[:, None], left[:, None]], axis=1)
        out = logsumexp(allt, axis=1) / m
    else:
        alpha = d0 / sigma
        beta = (d0 + h) / sigma
        mass = np.exp(_log_diff_ndtr(alpha, beta))
        dens = np.exp(-0.5 * alpha**2) - np.exp(-0.5 * beta**2)
        terms = (f0 - b * d0) * mass + b * sigma * dens / _SQRT2PI
        terms = np.where(valid, terms, 0.0)
        cr = (X_hi - xs1) / sigma
        cl = (X_lo - xs1) / sigma
        right = (f[-1] + b_hi * (xs1 - X_hi)) * ndtr(-cr) + b_hi * sigma * np.exp(-0.5 * cr**2) / _SQRT2PI
        left = (f[0] + b_lo * (xs1 - X_lo)) * ndtr(cl) - b_lo * sigma * np.exp(-0.5 * cl**2) / _SQRT2PI
        out = terms.sum(axis=1) + right + left

    if targets is not None or not even:
        return out
    full = np.empty_like(f)
    half = x.size // 2
    full[half:] = out
    full[:half] = out[1:][::-1]
    return full


# --------------------------------------------------------------------------
# backward solutions


class PdeSolution:
    """Backward solution of a Cole-Hopf recursion on ``[t0, t1]``.

    ``slices[i]`` is the solution at ``times[i]``; the times are the
    breakpoints of the step order parameter inside [t0, t1]. Slices at other
    times are produced on demand by a partial step from the next breakpoint.
    Used both for the Parisi PDE (terminal |x| at time 1) and for the
    diagonal two-system PDE (terminal time q).
    """

    def __init__(self, x, times, slices, gamma: StepGamma, xi: MixtureXi, grid: GridOpts):
        self.x = x
        self.h = float(x[1] - x[0])
        self.times = np.asarray(times, dtype=float)
        self.slices = [np.asarray(s) for s in slices]
        self.gamma = gamma
        self.xi = xi
        self.grid_opts = grid
        self._cache: dict[float, np.ndarray] = {}

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def origin_value(self) -> float:
        """Value at (t0, x = 0)."""
        return float(self.slices[0][self.x.size // 2])

    def phi(self, s: float) -> np.ndarray:
        """Slice at time ``s`` in [t0, t1]."""
        s = float(s)
        if s < self.t0 - 1e-12 or s > self.t1 + 1e-12:
            raise ParameterError(f"time {s} outside [{self.t0}, {self.t1}]")
        hit = np.flatnonzero(np.abs(self.times - s) <= 1e-14)
        if hit.size:
            return self.slices[hit[0]]
        if s in self._cache:
            return self._cache[s]
        i = int(np.searchsorted(self.times, s))
        s_next = self.times[i]
        m = float(self.gamma(s))
        var = float(self.xi.dxi(s_next) - self.xi.dxi(s))
        out = backward_step(self.slices[i], self.x, math.sqrt(max(var, 0.0)), m, self.grid_opts.band_sd)
        self._cache[s] = out
        return out

    def dphi(self, s: float) -> np.ndarray:
        """Central-difference x-derivative of the slice at ``s``."""
        return np.gradient(self.phi(s), self.h)

    def d2phi(self, s: float, smooth: int = 3) -> np.ndarray:
        """Second central differences averaged over a window of ``smooth`` nodes."""
        f = self.phi(s)
        d2 = np.zeros_like(f)
        d2[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / self.h**2
        if smooth > 1:
            d2 = np.convolve(d2, np.ones(smooth) / smooth, mode="same")
        return d2

    def value(self, s: float, xq) -> np.ndarray:
        """Slice at ``s`` evaluated at points ``xq``, extended linearly off-grid."""
        return _interp_lin_ext(np.asarray(xq, dtype=float), self.x, self.phi(s))

    def derivative(self, s: float, xq) -> np.ndarray:
        return np.interp(np.asarray(xq, dtype=float), self.x, self.dphi(s))

    def diagnostics(self, correction: float | None = None) -> dict:
        d = {
            "h": self.h,
            "x_max": self.x_max,
            "quadrature": "closed-form Gaussian integral of the piecewise linear interpolant",
            "band_sd": self.grid_opts.band_sd,
            "phi00": self.origin_value,
        }
        if correction is not None:
            d["correction"] = correction
            d["P"] = self.origin_value - 0.5 * correction
        d["gamma"] = self.gamma.to_dict()
        d["k"] = self.xi.k
        return d


def _interp_lin_ext(xq, x, f):
    out = np.interp(xq, x, f)
    hi = xq > x[-1]
    lo = xq < x[0]
    if hi.any():
        out[hi] = f[-1] + (xq[hi] - x[-1]) * (f[-1] - f[-2]) / (x[-1] - x[-2])
    if lo.any():
        out[lo] = f[0] + (xq[lo] - x[0]) * (f[1] - f[0]) / (x[1] - x[0])
    return out


def solve_backward(terminal, x, gamma: StepGamma, xi: MixtureXi, t0: float, t1: float,
                   grid: GridOpts, scale: float = 1.0) -> PdeSolution:
    """Run the recursion from ``terminal`` at time ``t1`` down to ``t0``.

    The tilt on each piece is ``gamma * scale``; ``scale`` is 1 for the Parisi
    PDE.
    """
    pieces = []
    for a, b, m in gamma.pieces(t0, t1):
        # one Cole-Hopf step per maximal constant run: the recursion only
        # depends on the function gamma, not on how its breakpoints are listed
        if pieces and pieces[-1][2] == m:
            pieces[-1] = (pieces[-1][0], b, m)
        else:
            pieces.append((a, b, m))
    times = [pieces[0][0]] + [b for _, b, _ in pieces]
    slices = [None] * len(times)
    slices[-1] = np.asarray(terminal, dtype=float)
    for i in range(len(pieces) - 1, -1, -1):
        a, b, m = pieces[i]
        var = float(xi.dxi(b) - xi.dxi(a))
        slices[i] = backward_step(slices[i + 1], x, math.sqrt(max(var, 0.0)), m * scale, grid.band_sd)
    g = gamma if scale == 1.0 else StepGamma(gamma.breakpoints, gamma.values * scale)
    return PdeSolution(x, times, slices, g, xi, grid)


def _as_xi(xi) -> MixtureXi:
    return xi if isinstance(xi, MixtureXi) else MixtureXi(int(xi))


def solve_parisi_pde(gamma: StepGamma, xi, grid: GridOpts | None = None) -> PdeSolution:
    """Solve the zero-temperature Parisi PDE with boundary |x| at s = 1."""
    xi = _as_xi(xi)
    if not isinstance(gamma, StepGamma):
        raise InvalidOrderParameterError("gamma must be a StepGamma")
    grid = grid or GridOpts()
    x = grid.grid(xi)
    return solve_backward(np.abs(x), x, gamma, xi, 0.0, 1.0, grid)


def parisi_functional(gamma: StepGamma, xi, grid: GridOpts | None = None) -> float:
    xi = _as_xi(xi)
    sol = solve_parisi_pde(gamma, xi, grid)
    return sol.origin_value - 0.5 * gamma.correction(xi)


def rs_closed_form(m: float, k: int) -> tuple[float, float]:
    """(Phi(0,0), P) for constant gamma = m, from E exp(m|aZ|) = 2 exp(m^2 a^2/2) Phi(m a)."""
    a2 = float(k)
    if m == 0:
        phi = math.sqrt(2 * a2 / math.pi)
    else:
        phi = m * a2 / 2 + float(log_ndtr(m * math.sqrt(a2)) + math.log(2.0)) / m
    return phi, phi - 0.5 * m * (k - 1)


# --------------------------------------------------------------------------
# minimization over step order parameters


def _decode(theta, n_steps, m_cap=M_CAP):
    theta = np.asarray(theta, dtype=float)
    logits = np.concatenate([[0.0], theta[: n_steps - 1]])
    w = np.exp(logits - logits.max())
    w /= w.sum()
    b = np.concatenate([[0.0], np.cumsum(w)])
    b[-1] = 1.0
    incr = np.exp(np.clip(theta[n_steps - 1:], -60.0, 10.0))
    v = np.minimum(np.cumsum(incr), m_cap)
    return b, v


def _encode(gamma: StepGamma, floor=1e-13):
    widths = np.diff(gamma.breakpoints)
    logits = np.log(widths[1:]) - np.log(widths[0])
    incr = np.diff(np.concatenate([[0.0], gamma.values]))
    return np.concatenate([logits, np.log(np.maximum(incr, floor))])


def _safe_gamma(b, v):
    # merge pieces that collapsed to zero width in floating point
    keep = np.concatenate([[True], np.diff(b) > 1e-15])
    b = b[keep]
    v = v[keep[1:]]
    if b.size < 2:
        return StepGamma.constant(float(v[-1]) if v.size else 0.0)
    b[-1] = 1.0
    return StepGamma(b, v[: b.size - 1])


def embed(gamma: StepGamma, n_steps: int) -> StepGamma:
    """Represent ``gamma`` with ``n_steps`` pieces by splitting its widest
    pieces at their midpoints (the function itself is unchanged)."""
    g = gamma
    while g.num_steps < n_steps:
        widths = np.diff(g.breakpoints)
        i = int(np.argmax(widths))
        g = g.with_breakpoint(float(0.5 * (g.breakpoints[i] + g.breakpoints[i + 1])))
    return g


@dataclass
class OptimizerOpts:
    restarts: int = 8
    coarse_h: float = 0.05
    coarse_evals: int = 600
    polish_evals: int = 400
    xatol: float = 1e-5
    fatol: float = 1e-8


def minimize_parisi(xi, num_steps: int, opts: OptimizerOpts | None = None, seed: int = 0,
                    grid: GridOpts | None = None, init: StepGamma | None = None):
    """Minimize the Parisi functional over step order parameters with
    ``num_steps`` pieces.

    Breakpoint widths are a softmax of free logits and values are cumulative
    sums of exponentials, so every trial point is a valid order parameter.
    Nelder-Mead runs from several random starts on a coarse grid, then the best
    point (and ``init``, if given) is polished on the target grid. Returns
    ``(gamma_star, P_star)`` with ``P_star`` evaluated on the target grid.
    """
    xi = _as_xi(xi)
    if int(num_steps) != num_steps or num_steps < 1:
        raise ParameterError("num_steps must be a positive integer")
    opts = opts or OptimizerOpts()
    grid = grid or GridOpts()
    coarse = GridOpts(h=max(opts.coarse_h, grid.h), x_max=grid.x_max, band_sd=grid.band_sd)
    rng = stream(seed, "parisi", "restarts", num_steps)

    def objective(theta, g):
        b, v = _decode(theta, num_steps)
        try:
            return parisi_functional(_safe_gamma(b, v), xi, g)
        except InvalidOrderParameterError:
            return np.inf

    nm = dict(xatol=opts.xatol, fatol=opts.fatol, adaptive=True)
    starts = []
    if init is not None:
        starts.append(_encode(embed(init, num_steps)))
    best = None
    for r in range(opts.restarts):
        theta0 = np.concatenate([rng.normal(0.0, 0.5, num_steps - 1),
                                 np.log(rng.uniform(0.2, 3.0)) * np.ones(1),
                                 rng.normal(0.0, 1.0, num_steps - 1)])
        res = optimize.minimize(objective, theta0, args=(coarse,), method="Nelder-Mead",
                                options=dict(maxfev=opts.coarse_evals, **nm))
        if best is None or res.fun < best.fun:
            best = res
    starts.append(best.x)

    final = None
    for theta0 in starts:
        res = optimize.minimize(objective, theta0, args=(grid,), method="Nelder-Mead",
                                options=dict(maxfev=opts.polish_evals, **nm))
        f0 = objective(theta0, grid)
        if f0 < res.fun:
            res.x, res.fun = theta0, f0
        if final is None or res.fun < final.fun:
            final = res
    b, v = _decode(final.x, num_steps)
    gamma = _safe_gamma(b, v)
    return gamma, parisi_functional(gamma, xi, grid)


# --------------------------------------------------------------------------
# stochastic control representation


@dataclass
class SdeSamples:
    q: float
    x: np.ndarray
    dphi: np.ndarray
    running: np.ndarray
    times: np.ndarray
    observed: dict = field(default_factory=dict)
    n_exited: int = 0


def _time_grid(sol: PdeSolution, q: float, n_time_steps: int, extra=()):
    """Times in [0, q] uniform in xi' within each piece, plus ``extra`` points."""
    xi = sol.xi
    cuts = sorted({0.0, q, *[float(b) for b in sol.times if 0.0 < b < q], *[float(e) for e in extra if 0 < e < q]})
    total = float(xi.dxi(q) - xi.dxi(0.0))
    ts = [0.0]
    for a, b in zip(cuts[:-1], cuts[1:]):
        frac = float(xi.dxi(b) - xi.dxi(a)) / total if total > 0 else 1.0 / (len(cuts) - 1)
        n = max(1, int(round(frac * n_time_steps)))
        lev = np.linspace(float(xi.dxi(a)), float(xi.dxi(b)), n + 1)[1:]
        t = (lev / xi.k) ** (1.0 / (xi.k - 1))
        t[-1] = b
        ts.extend(t.tolist())
    return np.array(ts)


def simulate_sde(pde: PdeSolution, q: float, n_paths: int = 20000, n_time_steps: int = 200,
                 seed: int = 0, observe=(), strict: bool = False) -> SdeSamples:
    """Euler-Maruyama paths of dX = xi'' gamma dPhi dw + sqrt(xi'') dW from X(0)=0.

    Time steps are uniform in xi' on each piece, so every step has the same
    noise variance. Also accumulates int_0^q xi'' gamma (dPhi)^2 dw per path,
    and records (X, dPhi(s, X)) at each time in ``observe``. Paths leaving the
    grid use the linear extension of the slices; ``strict=True`` raises instead.
    """
    if not 0.0 < q <= pde.t1:
        raise ParameterError(f"q must lie in (0, {pde.t1}], got {q}")
    xi = pde.xi
    times = _time_grid(pde, q, n_time_steps, observe)
    rng = stream(seed, "sde", q)
    x = np.zeros(n_paths)
    running = np.zeros(n_paths)
    observed = {}
    exited = 0
    obs = {float(o) for o in observe}
    for t_a, t_b in zip(times[:-1], times[1:]):
        dv = float(xi.dxi(t_b) - xi.dxi(t_a))
        m = float(pde.gamma(t_a))
        d = pde.derivative(t_a, x)
        x = x + dv * m * d + math.sqrt(dv) * rng.standard_normal(n_paths)
        running += dv * m * d * d
        out = np.abs(x) > pde.x_max
        if out.any():
            if strict:
                raise DomainError(f"{int(out.sum())} paths left the grid at s={t_b:.4g}")
            exited += int(out.sum())
        if float(t_b) in obs:
            observed[float(t_b)] = (x.copy(), pde.derivative(t_b, x))
    return SdeSamples(q=q, x=x, dphi=pde.derivative(q, x), running=running, times=times,
                      observed=observed, n_exited=exited)


def jump_points(gamma: StepGamma, tol: float = 1e-3):
    """Breakpoints where gamma increases by more than ``tol``."""
    b = gamma.breakpoints[1:-1]
    jumps = np.diff(gamma.values)
    return [float(s) for s, j in zip(b, jumps) if j > tol]


def check_consistency(gamma_star: StepGamma, xi, grid: GridOpts | None = None, n_paths: int = 40000,
                      n_time_steps: int = 400, seed: int = 0, points=None, jump_tol: float = 1e-3) -> dict:
    """Residuals of the first-order condition E(dPhi(s, X(s)))^2 = s at the
    jump points of ``gamma_star`` (or at ``points``) and the slack of
    xi''(s) E(d2Phi(s, X(s)))^2 <= 1 there."""
    xi = _as_xi(xi)
    sol = solve_parisi_pde(gamma_star, xi, grid)
    pts = sorted(jump_points(gamma_star, jump_tol) if points is None else [float(p) for p in points])
    report = {"k": xi.k, "gamma": gamma_star.to_dict(), "points": []}
    if not pts:
        return report
    sde = simulate_sde(sol, max(pts), n_paths, n_time_steps, seed, observe=pts)
    for s in pts:
        xs, d = sde.observed[s] if s in sde.observed else (sde.x, sde.dphi)
        sq = d * d
        mean = float(sq.mean())
        se = float(sq.std(ddof=1) / math.sqrt(sq.size))
        d2 = np.interp(xs, sol.x, sol.d2phi(s))
        second = float(xi.ddxi(s) * np.mean(d2 * d2))
        report["points"].append({"s": s, "mean_sq_derivative": mean, "se": se,
                                 "residual": abs(mean - s), "second_order": second,
                                 "second_order_slack": 1.0 - second})
    return report


def derivative_square_profile(gamma: StepGamma, xi, q_grid, grid: GridOpts | None = None,
                              n_paths: int = 40000, n_time_steps: int = 400, seed: int = 0):
    """D(q) = E(dPhi(q, X(q)))^2 with Monte Carlo standard errors on ``q_grid``,
    from one set of paths observed at every grid point."""
    xi = _as_xi(xi)
    sol = solve_parisi_pde(gamma, xi, grid)
    qs = sorted(float(q) for q in q_grid if q > 0)
    sde = simulate_sde(sol, max(qs), n_paths, n_time_steps, seed, observe=qs)
    means, ses = [], []
    for q in qs:
        _, d = sde.observed[q] if q in sde.observed else (sde.x, sde.dphi)
        sq = d * d
        means.append(float(sq.mean()))
        ses.append(float(sq.std(ddof=1) / math.sqrt(sq.size)))
    return np.array(qs), np.array(means), np.array(ses)


def gap_precondition_check(gamma_star: StepGamma, xi, c_grid=None, grid: GridOpts | None = None,
                           n_paths: int = 40000, n_time_steps: int = 400, seed: int = 0) -> dict:
    """Largest grid value c with E(dPhi(q, X(q)))^2 < q at every grid q < c.

    Only meaningful for K >= 4; K = 2 returns ``applicable = False``.
    """
    xi = _as_xi(xi)
    if xi.k < 4:
        return {"applicable": False, "k": xi.k, "c": None}
    c_grid = np.round(np.arange(0.025, 1.0, 0.025), 10) if c_grid is None else np.asarray(c_grid, dtype=float)
    qs, means, ses = derivative_square_profile(gamma_star, xi, c_grid, grid, n_paths, n_time_steps, seed)
    c = 1.0
    for q, mval in zip(qs, means):
        if mval >= q:
            c = float(q)
            break
    return {"applicable": True, "k": xi.k, "c": c, "q": qs.tolist(), "mean_sq_derivative": means.tolist(),
            "se": ses.tolist(), "margin": (qs - means).tolist()}
