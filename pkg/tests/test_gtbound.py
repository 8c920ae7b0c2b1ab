import numpy as np
import pytest

from ogp.gtbound import (
    CERT_COLUMNS,
    CertOpts,
    GtSolver,
    boundary_g,
    dlambda_finite_difference,
    dlambda_psi_at_zero,
    gamma_q,
    gap_certificate,
    gt_functional,
    solve_gt,
    tilted_kernel,
)
from ogp.parisi import GridOpts, StepGamma, parisi_functional, solve_parisi_pde

# K = 4 minimizer from minimize_parisi (2 steps, h = 0.02); more steps do not change P
GAMMA_K4 = StepGamma([0.0, 0.9969484826861207, 1.0], [1.0919414037753026, 5.628984355438197])
P_K4 = 1.1673363523667857
COARSE = GridOpts(h=0.04)


def test_boundary_g_identities():
    rng = np.random.default_rng(0)
    lam, x1, x2 = rng.normal(size=(3, 10000)) * 3
    four = np.max([x1 + x2 + lam, -x1 - x2 + lam, x1 - x2 - lam, -x1 + x2 - lam], axis=0)
    np.testing.assert_array_equal(boundary_g(lam, x1, x2), four)
    np.testing.assert_allclose(boundary_g(lam, x1, x2), np.maximum(np.abs(x1 + x2) + lam, np.abs(x1 - x2) - lam))
    np.testing.assert_allclose(boundary_g(0.0, x1, x2), np.abs(x1) + np.abs(x2))
    assert boundary_g(1.0, 0.0, 0.0) == 1.0


def test_tilted_kernel_rows_sum_to_tilted_mass():
    # for m = 0 each row integrates the hat functions against a Gaussian: rows sum to 1 away from edges
    x = np.arange(-200, 201) * 0.05
    B = tilted_kernel(x, 0.7, 0.0)
    inner = np.abs(x) < 5
    np.testing.assert_allclose(B.sum(axis=1)[inner], 1.0, atol=1e-10)


def test_terminal_and_diagonal_restriction():
    g = StepGamma([0, 0.3, 0.7, 1], [0.2, 0.6, 1.5])
    sol = solve_gt(g, 4, 0.3, 0.4, COARSE, keep=(1.0,))
    x = sol.x
    np.testing.assert_array_equal(sol.gamma_slices[1.0], boundary_g(0.4, x[:, None], x[None, :]))
    np.testing.assert_array_equal(sol.psi.phi(0.3), np.diagonal(sol.gamma_slices[0.3]))


def test_gamma_slice_evenness():
    g = StepGamma([0, 0.5, 1], [0.5, 2.0])
    sol = solve_gt(g, 4, 0.5, 0.3, COARSE)
    G = sol.gamma_slices[0.5]
    np.testing.assert_array_equal(G, G[::-1, ::-1])


@pytest.mark.parametrize("lam", [-0.5, 0.0, 0.7])
def test_lipschitz_slices(lam):
    g = StepGamma([0, 0.4, 1], [0.4, 1.5])
    sol = solve_gt(g, 4, 0.4, lam, COARSE)
    G = sol.gamma_slices[0.4]
    h = COARSE.h
    diag = np.diagonal(G)
    assert np.max(np.abs(np.diff(diag))) <= 2 * h + 4 * h * h + 1e-9
    psi0 = sol.psi.phi(0.0)
    assert np.max(np.abs(np.diff(psi0))) <= 2 * h + 2 * h


def test_additivity_lambda_zero_coarse():
    g = StepGamma([0, 0.3, 0.6, 1], [0.3, 0.9, 2.0])
    q = 0.3
    sol = solve_gt(g, 4, q, 0.0, COARSE)
    phi = solve_parisi_pde(g, 4, COARSE)
    diag = np.diagonal(sol.gamma_slices[q])
    assert np.max(np.abs(diag - 2 * phi.phi(q))) < 5e-3


def test_q_zero_collapses_to_twice_parisi():
    g = StepGamma([0, 0.5, 1], [0.6, 1.8])
    t0 = gt_functional(g, 4, 0.0, 0.0, COARSE)
    assert abs(t0 - 2 * parisi_functional(g, 4, COARSE)) < 5e-3


def test_gamma_q_construction_matches_twice_phi():
    q = 0.3
    gq = gamma_q(GAMMA_K4, q)
    assert gq(0.1) == pytest.approx(GAMMA_K4(0.1) / 2) and gq(0.5) == GAMMA_K4(0.5)
    sol = solve_gt(gq, 4, q, 0.0, COARSE)
    phi = solve_parisi_pde(GAMMA_K4, 4, COARSE)
    for s in (0.0, q / 2):
        assert np.max(np.abs(sol.psi.phi(s) - 2 * phi.phi(s))) < 5e-3


def test_lambda_lipschitz_of_psi00():
    solver = GtSolver(StepGamma([0, 0.4, 1], [0.4, 1.5]), 4, 0.4, COARSE)
    for lam in (-0.3, 0.0, 0.5):
        d = abs(solver.solve(lam + 1e-2).psi00 - solver.solve(lam).psi00)
        assert d <= 1e-2 + 1e-4


def test_dlambda_small_q():
    mean, se = dlambda_psi_at_zero(GAMMA_K4, 4, 1e-3, COARSE, n_paths=4000)
    assert mean < 1e-3


def test_dlambda_below_c_is_negative_slope():
    q = 0.1
    mean, se = dlambda_psi_at_zero(gamma_q(GAMMA_K4, q), 4, q, COARSE, n_paths=20000, seed=1)
    assert q - mean > 3 * se


def test_dlambda_vs_finite_difference_single():
    g = StepGamma([0, 0.4, 1], [0.5, 1.4])
    q = 0.4
    mean, se = dlambda_psi_at_zero(g, 4, q, COARSE, n_paths=20000, seed=2)
    fd = dlambda_finite_difference(g, 4, q, grid=COARSE)
    assert abs(mean - fd) < max(2e-2, 3 * se)


def test_certificate_k2_diagnostic_has_no_interval():
    g2 = StepGamma([0.0, 0.5610580240127628, 0.9097431091129193, 1.0],
                   [0.26129755224771695, 0.8323031722685375, 2.5251087703187918])
    p2 = parisi_functional(g2, 2)
    none = gap_certificate(g2, p2, 2)
    assert not none.applicable and none.rows == []
    cert = gap_certificate(g2, p2, 2, q_grid=[0.2, 0.4, 0.6], grid=COARSE, diagnostic=True,
                           opts=CertOpts(n_paths=10000))
    assert cert.intervals == []
    assert all(r.margin - r.identity_residual <= 1e-3 for r in cert.rows)


def test_certificate_k4_small_grid():
    cert = gap_certificate(GAMMA_K4, P_K4, 4, q_grid=[0.2, 0.3, 0.4], grid=COARSE,
                           opts=CertOpts(n_paths=10000), seed=3)
    assert cert.intervals and 0 < cert.a < cert.b < 1
    assert cert.eta > 0
    row0 = cert.rows[0]
    assert set(CERT_COLUMNS) <= set(vars(row0))
    for r in cert.rows:
        assert r.bound <= r.two_me  # never worse than the lambda = 0 gamma_q value
    s = cert.summary()
    assert set(s) == {"a", "b", "eta", "c"}
