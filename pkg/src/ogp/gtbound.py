"""Two-system bound at zero temperature.

For a step order parameter gamma, an overlap q and a Lagrange parameter
lambda:

* Gamma solves the two-dimensional Parisi-type PDE on [q, 1] with boundary
  g(lambda, x) = max(|x1 + x2| + lambda, |x1 - x2| - lambda) at s = 1;
* Psi(q, x) = Gamma(q, x, x), and Psi solves the one-dimensional PDE on [0, q];
* T_q(lambda, gamma) = Psi(0, 0) - lambda q - (I(0, 1) + I(0, q)) with
  I(a, b) = int_a^b s xi''(s) gamma(s) ds.

The 2D Cole-Hopf step is carried out on u = exp(m (Gamma - |x1| - |x2|)),
which stays bounded and tends to a constant off the grid (Gamma has slope 1
far out). u is interpolated bilinearly, so one step is u <- B u B^T with a
one-dimensional kernel B giving the exact Gaussian integral of a hat
function against exp(m|y|). This discretization is independent of the
log-domain scheme used by the 1D solver, which makes the lambda = 0
additivity Gamma = Phi(x1) + Phi(x2) a genuine cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .errors import ParameterError
from .parisi import (
    GridOpts,
    MixtureXi,
    PdeSolution,
    StepGamma,
    _as_xi,
    simulate_sde,
    solve_backward,
    solve_parisi_pde,
)

_SQRT2PI = math.sqrt(2.0 * math.pi)


def boundary_g(lam, x1, x2):
    """max(x1 + x2 + lam, -x1 - x2 + lam, x1 - x2 - lam, -x1 + x2 - lam)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return np.maximum.reduce([x1 + x2 + lam, -x1 - x2 + lam, x1 - x2 - lam, -x1 + x2 - lam])


# --------------------------------------------------------------------------
# one-dimensional kernels


def _phi(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _segment_moments(lo, hi, mu, sigma):
    """(P, M) = (int phi_sigma(y - mu) dy, int (y - lo) phi_sigma(y - mu) dy) over [lo, hi]."""
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    # difference of normal cdfs taken on the side where it does not cancel
    p = np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    mean = (mu - lo) * p + sigma * (_phi(a) - _phi(b))
    return p, mean


def tilted_kernel(x, sigma, m):
    """B with sum_j B[i, j] u_j = exp(-m|x_i| - m^2 sigma^2 / 2) E[exp(m|x_i + sigma Z|) u(x_i + sigma Z)]
    for u piecewise linear on the grid and constant beyond it.

    ``m = 0`` gives the plain Gaussian smoothing kernel.
    """
    n = x.size
    h = x[1] - x[0]
    xi_ = x[:, None]
    lo = x[None, :-1]
    hi = x[None, 1:]
    # cells never straddle 0, so |y| = s y on each cell
    s = np.where(lo >= 0, 1.0, -1.0)
    mu = xi_ + s * m * sigma**2
    pref = np.exp(m * (s * xi_ - np.abs(xi_)))
    p, mom = _segment_moments(lo, hi, mu, sigma)
    rise = pref * mom / h
    fall = pref * p - rise
    B = np.zeros((n, n))
    B[:, :-1] += fall
    B[:, 1:] += rise
    xr = x
    muR = xr + m * sigma**2
    muL = xr - m * sigma**2
    B[:, -1] += np.exp(m * (xr - np.abs(xr))) * ndtr((muR - x[-1]) / sigma)
    B[:, 0] += np.exp(m * (-xr - np.abs(xr))) * ndtr((x[0] - muL) / sigma)
    return B


def _abs_smoothed(x, sigma):
    """E|x + sigma Z|."""
    z = x / sigma
    return sigma * _phi(z) * 2.0 + x * (1.0 - 2.0 * ndtr(-z))


# --------------------------------------------------------------------------
# two-dimensional solver


@dataclass
class GtSolution:
    q: float
    lam: float
    x: np.ndarray
    gamma: StepGamma
    xi: MixtureXi
    gamma_slices: dict
    psi: PdeSolution
    scale: float
    meta: dict = field(default_factory=dict)

    @property
    def psi00(self) -> float:
        return self.psi.origin_value

    def gamma_at(self, s: float) -> np.ndarray:
        return self.gamma_slices[float(s)]


class GtSolver:
    """Caches the q-dependent kernels so that many lambdas and [0, q) scales
    can be evaluated cheaply for one (gamma, q)."""

    def __init__(self, gamma: StepGamma, xi, q: float, grid: GridOpts | None = None):
        self.xi = _as_xi(xi)
        if not 0.0 <= q <= 1.0:
            raise ParameterError(f"q must lie in [0, 1], got {q}")
        self.q = float(q)
        self.grid = grid or GridOpts()
        self.x = self.grid.grid(self.xi)
        self.gamma = gamma.with_breakpoint(self.q) if 0 < q < 1 else gamma
        self.pieces = self.gamma.pieces(self.q, 1.0)
        self._kernels = []
        for a, b, m in self.pieces:
            var = float(self.xi.dxi(b) - self.xi.dxi(a))
            sig = math.sqrt(max(var, 0.0))
            self._kernels.append((sig, m, tilted_kernel(self.x, sig, m) if sig > 1e-12 else None))

    def gamma_q(self, lam: float, keep=()) -> tuple[np.ndarray, dict]:
        """Gamma(lam, q, ., .) on the tensor grid (and slices at breakpoints in ``keep``)."""
        x = self.x
        r = np.abs(x)
        G = boundary_g(lam, x[:, None], x[None, :])
        kept = {}
        if 1.0 in keep:
            kept[1.0] = G
        for (a, b, m), (sig, _, B) in zip(self.pieces[::-1], self._kernels[::-1]):
            if B is None:
                pass
            elif m > 1e-8:
                v = G - r[:, None] - r[None, :]
                shift = v.max()
                u = np.exp(m * (v - shift))
                w = B @ u @ B.T
                G = r[:, None] + r[None, :] + m * sig**2 + shift + np.log(w) / m
            else:
                v = G - r[:, None] - r[None, :]
                e = _abs_smoothed(x, sig)
                G = e[:, None] + e[None, :] + B @ v @ B.T
            # exact symmetry under (x1, x2) -> (-x1, -x2)
            G = 0.5 * (G + G[::-1, ::-1])
            if a in keep:
                kept[float(a)] = G
        return G, kept

    def solve(self, lam: float, scale: float = 1.0, keep=()) -> GtSolution:
        """Solve for one lambda; ``scale`` multiplies gamma on [0, q)."""
        Gq, kept = self.gamma_q(lam, keep)
        diag = np.diagonal(Gq).copy()
        if self.q > 0:
            psi = solve_backward(diag, self.x, self.gamma, self.xi, 0.0, self.q, self.grid, scale=scale)
        else:
            psi = PdeSolution(self.x, [0.0], [diag], self.gamma, self.xi, self.grid)
        kept.setdefault(self.q, Gq)
        return GtSolution(self.q, float(lam), self.x, self.gamma, self.xi, kept, psi, float(scale),
                          {"h": self.grid.h, "x_max": float(self.x[-1])})

    def functional(self, lam: float, scale: float = 1.0) -> float:
        sol = self.solve(lam, scale)
        g = self.gamma.scaled_below(self.q, scale) if 0 < self.q else self.gamma
        corr = g.correction(self.xi, 0.0, 1.0) + g.correction(self.xi, 0.0, self.q)
        return sol.psi00 - lam * self.q - corr


def solve_gt(gamma: StepGamma, xi, q: float, lam: float, grid: GridOpts | None = None,
             scale: float = 1.0, keep=()) -> GtSolution:
    return GtSolver(gamma, xi, q, grid).solve(lam, scale, keep)


def gt_functional(gamma: StepGamma, xi, q: float, lam: float, grid: GridOpts | None = None) -> float:
    """T_q(lambda, gamma) with both correction integrals in closed form."""
    return GtSolver(gamma, xi, q, grid).functional(lam)


def gamma_q(gamma_p: StepGamma, q: float, scale: float = 0.5) -> StepGamma:
    """scale * gamma_P on [0, q) and gamma_P on [q, 1)."""
    return gamma_p.scaled_below(q, scale) if q > 0 else gamma_p


# --------------------------------------------------------------------------
# derivative in lambda at zero


def dlambda_psi_at_zero(gamma: StepGamma, xi, q: float, grid: GridOpts | None = None,
                        n_paths: int = 40000, n_time_steps: int = 400, seed: int = 0):
    """E (dPhi(q, X0(q)))^2 where X0 follows the optimal control for Psi at
    lambda = 0, whose boundary at q is 2 Phi(q, .). Returns (mean, se)."""
    xi = _as_xi(xi)
    if not 0.0 < q < 1.0:
        raise ParameterError(f"q must lie in (0, 1), got {q}")
    g = gamma.with_breakpoint(q)
    phi = solve_parisi_pde(g, xi, grid)
    psi = solve_backward(2.0 * phi.phi(q), phi.x, g, xi, 0.0, q, phi.grid_opts)
    sde = simulate_sde(psi, q, n_paths, n_time_steps, seed)
    d = phi.derivative(q, sde.x)
    sq = d * d
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))


def dlambda_finite_difference(gamma: StepGamma, xi, q: float, eps: float = 1e-2,
                              grid: GridOpts | None = None) -> float:
    solver = GtSolver(gamma, xi, q, grid)
    return (solver.solve(eps).psi00 - solver.solve(-eps).psi00) / (2 * eps)


# --------------------------------------------------------------------------
# certificate


@dataclass
class CertRow:
    q: float
    best_lambda: float
    best_scale: float
    bound: float
    two_me: float
    margin: float
    identity_residual: float
    d_minus_q: float | None = None


@dataclass
class GapCertificate:
    k: int
    rows: list
    intervals: list
    eta: float | None
    c: float | None
    two_me: float
    applicable: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def a(self):
        return self.intervals[0][0] if self.intervals else None

    @property
    def b(self):
        return self.intervals[0][1] if self.intervals else None

    def summary(self) -> dict:
        return {"a": self.a, "b": self.b, "eta": self.eta, "c": self.c}

    def bound_at(self, q: float) -> float:
        qs = np.array([r.q for r in self.rows])
        return float(np.interp(q, qs, [r.bound for r in self.rows]))


CERT_COLUMNS = ("q", "best_lambda", "best_scale", "bound", "two_me", "margin")


@dataclass
class CertOpts:
    lambda_max: float = 2.0
    lambda_tol: float = 1e-3
    scale_tol: float = 1e-3
    optimize_scale: bool = True
    min_margin: float = 1e-3
    n_paths: int = 40000
    n_time_steps: int = 400


def _best_for_q(solver: GtSolver, direction: float, opts: CertOpts):
    def inner(lam):
        if not opts.optimize_scale or solver.q == 0:
            return solver.functional(lam, 0.5 if solver.q > 0 else 1.0), 0.5
        # psi's kernels on [0, q) are cheap; the 2D part is shared across scales
        Gq, _ = solver.gamma_q(lam)
        diag = np.diagonal(Gq).copy()

        def val(c):
            psi = solve_backward(diag, solver.x, solver.gamma, solver.xi, 0.0, solver.q, solver.grid, scale=c)
            g = solver.gamma.scaled_below(solver.q, c)
            corr = g.correction(solver.xi) + g.correction(solver.xi, 0.0, solver.q)
            return psi.origin_value - lam * solver.q - corr

        r = optimize.minimize_scalar(val, bounds=(0.0, 1.0), method="bounded",
                                     options={"xatol": opts.scale_tol})
        v_half = val(0.5)
        return (r.fun, float(r.x)) if r.fun < v_half else (v_half, 0.5)

    base, base_c = inner(0.0)
    if direction == 0:
        return 0.0, base_c, base, base
    lo, hi = (0.0, opts.lambda_max) if direction > 0 else (-opts.lambda_max, 0.0)
    cache = {}

    def f(lam):
        if lam not in cache:
            cache[lam] = inner(lam)
        return cache[lam][0]

    r = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": opts.lambda_tol})
    lam = float(r.x)
    val = f(lam)
    if val >= base:
        return 0.0, base_c, base, base
    return lam, cache[lam][1], val, base


def gap_certificate(gamma_p: StepGamma, p_star: float, xi, q_grid=None, grid: GridOpts | None = None,
                    opts: CertOpts | None = None, seed: int = 0, diagnostic: bool = False) -> GapCertificate:
    """Search T_q over lambda and the [0, q) scale of gamma_P for each q, and
    report the maximal runs of q where the bound beats 2 P_star by more than
    ``opts.min_margin``.

    K = 2 is flagged not applicable unless ``diagnostic`` is set, in which
    case the same search is run and reported.
    """
    from .parisi import derivative_square_profile

    xi = _as_xi(xi)
    opts = opts or CertOpts()
    applicable = xi.k >= 4
    if not applicable and not diagnostic:
        return GapCertificate(xi.k, [], [], None, None, 2 * p_star, applicable=False)
    q_grid = np.round(np.arange(0.05, 1.0, 0.05), 10) if q_grid is None else np.asarray(q_grid, dtype=float)
    qs_pos = [q for q in q_grid if q > 0]
    dq = {}
    if qs_pos:
        qq, means, _ = derivative_square_profile(gamma_p, xi, qs_pos, grid, opts.n_paths, opts.n_time_steps, seed)
        dq = {float(a): float(b) - float(a) for a, b in zip(qq, means)}
    two_me = 2.0 * p_star
    rows = []
    for q in q_grid:
        q = float(q)
        solver = GtSolver(gamma_p, xi, q, grid)
        d = dq.get(q)
        direction = 0.0 if d is None else (1.0 if d < 0 else -1.0)
        lam, c, bound, base = _best_for_q(solver, direction, opts)
        ident = solver.functional(0.0, 0.5) if q > 0 else solver.functional(0.0, 1.0)
        rows.append(CertRow(q, lam, c, bound, two_me, two_me - bound, abs(ident - two_me), d))
    # a q passes when its margin, less the lambda = 0 discretization residual,
    # clears the floor
    safe = [r.margin - r.identity_residual for r in rows]
    ok = [m > opts.min_margin for m in safe]
    intervals, etas = [], []
    i = 0
    while i < len(rows):
        if ok[i]:
            j = i
            while j + 1 < len(rows) and ok[j + 1]:
                j += 1
            lo, hi = rows[i].q, rows[j].q
            if 0 < lo and hi < 1 and j > i:
                intervals.append((lo, hi))
                etas.append(min(safe[i:j + 1]))
            i = j + 1
        else:
            i += 1
    c_emp = None
    if dq:
        c_emp = 1.0
        for q in sorted(dq):
            if dq[q] >= 0:
                c_emp = q
                break
    best = int(np.argmax(etas)) if etas else None
    if best is not None:
        intervals = [intervals[best]] + [iv for k, iv in enumerate(intervals) if k != best]
        etas = [etas[best]] + [e for k, e in enumerate(etas) if k != best]
    return GapCertificate(xi.k, rows, intervals, etas[0] if etas else None, c_emp, two_me,
                          applicable=applicable,
                          meta={"seed": seed, "h": (grid or GridOpts()).h, "min_margin": opts.min_margin,
                                "gamma": gamma_p.to_dict(), "p_star": p_star, "diagnostic": diagnostic})
