"""Discretization, shifted solves, norms, eigendecomposition, Schur bounds."""

import numpy as np
import pytest

from hyplab.errors import ConfigError
from hyplab.linops import (CapProfile, DiscreteOperator, RadialGrid,
                           d2_operator, dirichlet_laplacian_eigenvalues,
                           discretize, eps_floor_min, hermitian_eig,
                           schur_bound, shifted_solve, weighted_operator_norm,
                           weighted_operator_norm_dense)
from hyplab.model import ModelConfig, mode_operator_spec

from conftest import make_mode_operator


def _circle_config():
    return ModelConfig(n=2, r0=0.25,
                       cross_section={"kind": "circle", "radius": 1.0})


# ----------------------------------------------------------------------------
# Grids and discretization
# ----------------------------------------------------------------------------


def test_grid_spacing_and_points():
    g = RadialGrid(r0=0.0, r_max=1.0, N=9)
    assert g.h == pytest.approx(0.1)
    assert g.points() == pytest.approx(np.linspace(0.1, 0.9, 9))
    g2 = g.refined(2)
    assert g2.N == 2 * g.N + 1
    assert g2.h == pytest.approx(g.h / 2.0)


def test_d2_stencil_rows():
    g = RadialGrid(r0=0.0, r_max=1.0, N=9)
    op = d2_operator(g)
    dense = op.dense()
    h2 = g.h**2
    assert dense[4, 3] == pytest.approx(-1.0 / h2)
    assert dense[4, 4] == pytest.approx(2.0 / h2)
    assert dense[4, 5] == pytest.approx(-1.0 / h2)


def test_dirichlet_laplacian_eigenvalues_closed_form():
    g = RadialGrid(r0=0.0, r_max=np.pi, N=40)
    evals, _ = hermitian_eig(d2_operator(g))
    j = np.arange(1, g.N + 1)
    expected = (4.0 / g.h**2) * np.sin(j * g.h / 2.0) ** 2
    assert evals == pytest.approx(np.sort(expected), rel=1e-10)
    assert dirichlet_laplacian_eigenvalues(g) == pytest.approx(
        np.sort(expected), rel=1e-12)


def test_discretize_constant_potential_diagonal():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=10.25, N=99)
    op = discretize(mode_operator_spec(cfg, 0), g)
    assert op.diagonals[0] == pytest.approx(
        np.full(g.N, 2.0 / g.h**2 + 0.25))


def test_discretize_r0_mismatch_rejected():
    cfg = _circle_config()
    g = RadialGrid(r0=0.5, r_max=10.0, N=50)
    with pytest.raises(ConfigError):
        discretize(mode_operator_spec(cfg, 0), g)


def test_mode_operator_spectrum_above_threshold():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=40.0, N=600)
    op = discretize(mode_operator_spec(cfg, 0), g)
    evals, _ = hermitian_eig(op)
    assert evals[0] >= 0.25 - 5.0 * g.h**2


# ----------------------------------------------------------------------------
# Shifted solves
# ----------------------------------------------------------------------------


def _diag_operator(values, pad_to=8, pad_from=100.0):
    """Diagonal operator holding `values`, padded with distant entries to
    satisfy the minimum grid size."""
    vals = list(np.asarray(values, dtype=float))
    while len(vals) < pad_to:
        vals.append(pad_from + len(vals))
    g = RadialGrid(r0=0.0, r_max=float(len(vals) + 1), N=len(vals))
    return DiscreteOperator(g, {0: np.asarray(vals)})


def test_shifted_solve_scalar_diagonal():
    op = _diag_operator([1.0, 2.0, 3.0])
    rhs = np.zeros(op.n, dtype=complex)
    rhs[0] = 1.0
    x = shifted_solve(op, 1j, rhs)
    # scalar inversion 1/(1 - i) = (1 + i)/2
    assert x[0] == pytest.approx((1.0 + 1j) / 2.0)
    assert np.all(x[1:] == 0.0)


def test_shifted_solve_zero_rhs():
    op = _diag_operator([1.0, 2.0, 3.0])
    x = shifted_solve(op, 1j, np.zeros(op.n, dtype=complex))
    assert np.all(x == 0.0)


def test_shifted_solve_residual_certificate():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=500)
    op = make_mode_operator(cfg, 1, g)
    rng = np.random.default_rng(7)
    rhs = rng.standard_normal(g.N) + 1j * rng.standard_normal(g.N)
    z = 4.0 + 1e-3j
    x = shifted_solve(op, z, rhs)
    residual = op.matvec(x) - z * x - rhs
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(rhs)


def _greens_solution(grid, z, rhs):
    """Outgoing Green's function of D_r^2 + 1/4 on [r0, inf), Dirichlet at
    r0, applied to a grid function by the trapezoid-free Riemann sum that
    matches the grid inner product."""
    kappa = np.sqrt(complex(z) - 0.25)
    if kappa.imag < 0:
        kappa = -kappa
    r = grid.points()
    rl = np.minimum.outer(r, r) - grid.r0
    rg = np.maximum.outer(r, r) - grid.r0
    G = np.sin(kappa * rl) * np.exp(1j * kappa * rg) / kappa
    return (G * grid.h) @ rhs


def test_shifted_solve_matches_greens_function_at_order_two():
    cfg = _circle_config()
    z = 4.0 + 2.0j
    errors = []
    hs = []
    for N in (300, 600, 1200):
        g = RadialGrid(r0=0.25, r_max=30.25, N=N)
        op = discretize(mode_operator_spec(cfg, 0), g)
        r = g.points()
        rhs = np.exp(-((r - 8.0) ** 2))
        x = shifted_solve(op, z, rhs.astype(complex))
        u = _greens_solution(g, z, rhs)
        errors.append(np.max(np.abs(x - u)))
        hs.append(g.h)
    rate = np.polyfit(np.log(hs), np.log(errors), 1)[0]
    assert rate == pytest.approx(2.0, abs=0.3)


# ----------------------------------------------------------------------------
# Norms
# ----------------------------------------------------------------------------


def test_weighted_norm_normal_matrix():
    op = _diag_operator([1.0, 2.0, 3.0])
    w = np.ones(op.n)
    eps = 1e-2
    norm = weighted_operator_norm(op, 2.0 + 1j * eps, w, w)
    assert norm == pytest.approx(1.0 / eps, rel=1e-5)


def test_weighted_norm_zero_weights():
    op = _diag_operator([1.0, 2.0, 3.0])
    zero = np.zeros(op.n)
    assert weighted_operator_norm(op, 1j, zero, zero) == 0.0


def test_weighted_norm_matches_dense_svd():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=400)
    op = make_mode_operator(cfg, 0, g)
    r = g.points()
    w = (1.0 + r**2) ** -0.5
    z = 4.0 + 1e-3j
    iterative = weighted_operator_norm(op, z, w, w)
    dense = weighted_operator_norm_dense(op, z, w, w)
    assert iterative == pytest.approx(dense, rel=1e-6)


def test_cap_passivity_resolvent_bound():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=400)
    op = make_mode_operator(cfg, 1, g)
    w = np.ones(g.N)
    for eps in (0.5, 0.1):
        norm = weighted_operator_norm(op, 4.0 + 1j * eps, w, w)
        assert norm <= (1.0 + 1e-6) / eps


def test_eps_floor_min_scales_with_grid():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=400)
    op = make_mode_operator(cfg, 0, g)
    floor = eps_floor_min(op)
    assert 0.0 < floor < 1e-6
    g2 = g.refined(2)
    op2 = make_mode_operator(cfg, 0, g2)
    assert eps_floor_min(op2) > floor


# ----------------------------------------------------------------------------
# Eigendecomposition
# ----------------------------------------------------------------------------


def test_hermitian_eig_diagonal_permutation():
    op = _diag_operator([3.0, 1.0, 2.0])
    evals, evecs = hermitian_eig(op)
    assert evals[:3] == pytest.approx([1.0, 2.0, 3.0])
    # permutation eigenvectors for the three distinguished entries
    assert np.abs(evecs[:3, :3]) == pytest.approx(
        np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float), abs=1e-12)


def test_hermitian_eig_residuals_and_orthonormality():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=300)
    op = discretize(mode_operator_spec(cfg, 2), g)
    evals, evecs = hermitian_eig(op)
    dense = op.dense().real
    scale = np.linalg.norm(dense, 2)
    for j in (0, 100, 299):
        res = np.linalg.norm(dense @ evecs[:, j] - evals[j] * evecs[:, j])
        assert res <= 1e-8 * scale
    gram = evecs.T @ evecs
    assert np.max(np.abs(gram - np.eye(g.N))) <= 1e-10


def test_hermitian_eig_rejects_cap():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=30.0, N=100)
    op = make_mode_operator(cfg, 0, g)
    with pytest.raises(ConfigError):
        hermitian_eig(op)


# ----------------------------------------------------------------------------
# Schur bounds
# ----------------------------------------------------------------------------


def test_schur_bound_rank_one_tight():
    n = 64
    h = 1.0 / n
    kernel = np.ones((n, n))
    assert schur_bound(kernel, np.full(n, h)) == pytest.approx(1.0)


def test_schur_bound_diagonal():
    d = np.array([0.5, -2.0, 1.0])
    h = 0.1
    kernel = np.diag(d) / h
    assert schur_bound(kernel, np.full(3, h)) == pytest.approx(2.0)


def test_schur_bound_dominates_svd():
    x = np.linspace(0.0, 10.0, 201)
    h = x[1] - x[0]
    kernel = np.exp(-np.subtract.outer(x, x) ** 2)
    bound = schur_bound(kernel, np.full(x.size, h))
    true_norm = np.linalg.norm(kernel * h, 2)
    assert bound >= true_norm


# ----------------------------------------------------------------------------
# Elliptic bound: ||D^2 (H_k + i)^{-1}|| uniform over modes
# ----------------------------------------------------------------------------


def test_elliptic_bound_uniform_over_modes():
    cfg = _circle_config()
    g = RadialGrid(r0=0.25, r_max=20.0, N=250)
    d2 = d2_operator(g).dense()

    def sup_over(K):
        vals = []
        for k in range(K + 1):
            H = discretize(mode_operator_spec(cfg, k), g).dense()
            R = np.linalg.inv(H + 1j * np.eye(g.N))
            vals.append(np.linalg.norm(d2 @ R, 2))
        return max(vals)

    s8 = sup_over(8)
    s16 = sup_over(16)
    assert abs(s16 - s8) <= 0.1 * s8
