"""Tests for the limiting-absorption sweep and scaling-fit machinery."""

import dataclasses
import math

import numpy as np
import pytest

from hyplab.errors import ConfigError
from hyplab.laplab import (
    EpsSchedule,
    SweepConfig,
    SweepResult,
    conjugate_weight_sup,
    default_cap_strength,
    default_schedule,
    fit_from_table,
    fit_scaling,
    lambda_sweep,
    limiting_absorption,
    resolvent_expansion_check,
    sweep_grid,
    weight_comparison,
)
from hyplab.linops import (
    CapProfile,
    RadialGrid,
    discretize,
    eps_floor_min,
    weighted_operator_norm,
)
from hyplab.model import ModelConfig, mode_operator_spec
from hyplab.weights import polynomial_weight_vector


# ---------------------------------------------------------------------------
# Epsilon schedules
# ---------------------------------------------------------------------------


def test_schedule_values_geometric_down_to_floor():
    sch = EpsSchedule(start=1.0, ratio=0.5, floor=0.1)
    vals = sch.values()
    assert vals == [1.0, 0.5, 0.25, 0.125]
    assert all(v >= sch.floor for v in vals)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        EpsSchedule(start=0.0, ratio=0.5, floor=0.1)
    with pytest.raises(ConfigError):
        EpsSchedule(start=1.0, ratio=1.5, floor=0.1)
    with pytest.raises(ConfigError):
        EpsSchedule(start=0.05, ratio=0.5, floor=0.1)


def test_default_schedule_scales_with_sqrt_energy():
    sch = default_schedule(100.0)
    assert sch.start == pytest.approx(1.0)
    assert sch.floor == pytest.approx(1e-3)


# ---------------------------------------------------------------------------
# Limiting absorption for a single mode operator
# ---------------------------------------------------------------------------


def _free_mode_setup(r_max=25.0, N=500):
    """Mode operator with zero cross-section eigenvalue: H = D*D + 1/4."""
    model = ModelConfig(n=2, r0=0.25,
                       cross_section={"kind": "custom", "mu": [0.0]})
    spec = mode_operator_spec(model, 0)
    grid = RadialGrid(r0=0.25, r_max=r_max, N=N)
    cap = CapProfile.default_for(grid)
    op = discretize(spec, grid, cap=cap)
    op2 = discretize(spec, grid, cap=cap.scaled(2.0))
    return grid, op, op2


def test_limiting_absorption_converges_and_cap_insensitive():
    grid, op, op2 = _free_mode_setup()
    w = polynomial_weight_vector(grid.points(), 1.0)
    norm0, diag = limiting_absorption(op, 4.0, w, w, default_schedule(4.0),
                                      cap_double_op=op2)
    assert diag["converged"]
    assert not diag["truncation_limited"]
    assert norm0 > 0
    # The extrapolated norm should not depend on the absorber strength.
    assert diag["cap_delta"] < 0.05
    # Norms and offsets line up, and the tail is below the tolerance.
    assert len(diag["eps"]) == len(diag["norms"])
    assert diag["cauchy_tail"] < 0.01


def test_limiting_absorption_requires_absorber():
    grid, op, _ = _free_mode_setup()
    bare = discretize(mode_operator_spec(
        ModelConfig(n=2, r0=0.25,
                    cross_section={"kind": "custom", "mu": [0.0]}), 0), grid)
    w = np.ones(grid.N)
    with pytest.raises(ConfigError):
        limiting_absorption(bare, 4.0, w, w, default_schedule(4.0))


def test_limiting_absorption_rejects_floor_below_conditioning_limit():
    grid, op, _ = _free_mode_setup()
    w = np.ones(grid.N)
    tiny = EpsSchedule(start=1.0, ratio=0.5, floor=0.25 * eps_floor_min(op))
    with pytest.raises(ConfigError):
        limiting_absorption(op, 4.0, w, w, tiny)


def test_below_threshold_resolvent_is_spectrally_bounded():
    # At energy 0.1 the distance to the essential spectrum [1/4, inf) is
    # 0.15; the absorber only adds dissipation, so the numerical range
    # stays at least that far from the energy.
    grid, op, _ = _free_mode_setup()
    ones = np.ones(grid.N)
    norm = weighted_operator_norm(op, 0.1 + 1e-6j, ones, ones)
    assert norm <= 1.0 / 0.15 * 1.01


def test_resolvent_expansion_identity():
    _, op, _ = _free_mode_setup()
    err = resolvent_expansion_check(op, 4.0 + 0.5j, 4.0 + 2.0j)
    assert err <= 1e-8


# ---------------------------------------------------------------------------
# Sweep configuration, grids, and the sweep itself
# ---------------------------------------------------------------------------


def test_sweep_config_validation():
    with pytest.raises(ConfigError):
        SweepConfig(lambdas=(100.0,), s=0.5)
    with pytest.raises(ConfigError):
        SweepConfig(lambdas=())
    with pytest.raises(ConfigError):
        SweepConfig(lambdas=(0.5,))
    with pytest.raises(ConfigError):
        SweepConfig(lambdas=(100.0,), weight_kind="gaussian")


def test_sweep_grid_resolves_local_wavelength():
    for lam in (100.0, 10000.0):
        g = sweep_grid(lam)
        assert g.r_max == pytest.approx(2.0 * math.log(5.0 * lam) + 5.0)
        assert g.h <= 0.5 / math.sqrt(lam) * 1.01
    doubled = sweep_grid(100.0, refine=2.0)
    assert doubled.N == 2 * sweep_grid(100.0).N


def test_default_cap_strength_tracks_wavenumber():
    assert default_cap_strength(4.0) == 5.0
    assert default_cap_strength(10000.0) == pytest.approx(60.0)


def test_single_mode_sweep_sup_equals_mode_norm():
    cfg = SweepConfig(lambdas=(50.0,), s=1.0, K_max=1,
                      cross_section={"kind": "custom", "mu": [1.0]})
    res = lambda_sweep(cfg)
    assert set(res.mode_norms) == {(50.0, 0)}
    assert res.N_of_lambda[50.0] == res.mode_norms[(50.0, 0)]
    assert res.lambdas() == [50.0]
    assert not res.diagnostics["failures"]
    assert all(row["lambda"] == 50.0 for row in res.rows)


def test_sweep_sup_over_modes():
    cfg = SweepConfig(lambdas=(50.0,), s=1.0, K_max=3,
                      cross_section={"kind": "custom", "mu": [0.0, 1.0, 4.0]})
    res = lambda_sweep(cfg)
    per_mode = [res.mode_norms[(50.0, k)] for k in range(3)]
    assert res.N_of_lambda[50.0] == pytest.approx(max(per_mode))


# ---------------------------------------------------------------------------
# Scaling fits
# ---------------------------------------------------------------------------


_LAMS = tuple(10.0 ** e for e in (2.0, 2.5, 3.0, 3.5, 4.0))


def test_fit_from_table_recovers_pure_power():
    p, q, C, resid = fit_from_table(_LAMS, [l ** -0.5 for l in _LAMS])
    assert p == pytest.approx(-0.5, abs=1e-10)
    assert q == pytest.approx(0.0, abs=1e-10)
    assert C == pytest.approx(1.0, rel=1e-10)
    assert resid <= 1e-12


def test_fit_from_table_recovers_log_correction():
    norms = [3.0 * math.log(l) ** 4 * l ** -0.5 for l in _LAMS]
    p, q, C, resid = fit_from_table(_LAMS, norms)
    assert p == pytest.approx(-0.5, abs=1e-10)
    assert q == pytest.approx(4.0, abs=1e-10)
    assert C == pytest.approx(3.0, rel=1e-10)


def _synthetic_result(lams, norms, s=1.0, s0=1.0):
    cfg = SweepConfig(lambdas=tuple(lams), s=s, s0=s0)
    return SweepResult(config=cfg, rows=[], mode_norms={},
                       N_of_lambda=dict(zip(lams, norms)), diagnostics={})


def test_fit_scaling_envelope_constant():
    norms = [l ** -0.5 for l in _LAMS]
    fit = fit_scaling(_synthetic_result(_LAMS, norms))
    assert fit.p == pytest.approx(-0.5, abs=1e-10)
    assert fit.bound_pass
    # N / ((log lam)^{2 s0 + 2 s} rho) is maximized at the smallest energy.
    expected = max(n / (math.log(l) ** 4 * l ** -0.5)
                   for l, n in zip(_LAMS, norms))
    assert fit.C_prime == pytest.approx(expected, rel=1e-12)
    assert set(fit.to_dict()) == {"p", "q", "C", "residual", "C_prime",
                                  "bound_pass"}


def test_fit_scaling_requires_enough_energies_and_range():
    with pytest.raises(ConfigError):
        fit_scaling(_synthetic_result([100.0, 200.0, 400.0],
                                      [1.0, 0.7, 0.5]))
    with pytest.raises(ConfigError):
        fit_scaling(_synthetic_result([100.0, 200.0, 400.0, 800.0],
                                      [1.0, 0.7, 0.5, 0.35]))


# ---------------------------------------------------------------------------
# Weight comparison and the conjugate-weight supremum
# ---------------------------------------------------------------------------


def test_weight_comparison_reports_both_kinds():
    out = weight_comparison(50.0, 1.0, K_max=2,
                            base_config=SweepConfig(
                                lambdas=(50.0,), s=1.0, K_max=2,
                                cross_section={"kind": "custom",
                                               "mu": [0.0, 1.0]}))
    kinds = [row["kind"] for row in out["rows"]]
    assert kinds == ["mode", "polynomial"]
    assert out["ratio"] > 0
    assert all(row["N"] > 0 for row in out["rows"])


def test_conjugate_weight_sup_stays_bounded_in_energy():
    sups = []
    for lam in (1e2, 1e3, 1e4):
        sup, ratio = conjugate_weight_sup(lam, K_max=16, n_r=1000)
        assert ratio <= 1.0
        sups.append(sup)
    # The raw supremum itself is stable across two decades of energy.
    assert max(sups) / min(sups) <= 1.10
