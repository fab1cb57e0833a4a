"""Limiting-absorption sweeps and the high-energy scaling study.

This module measures the weighted resolvent norms

    N_k(lam) = || W (H_k - lam - i eps)^{-1} W ||,   eps -> 0+,

along a decreasing geometric schedule of imaginary offsets, extrapolates
them to the real axis, takes the sup over cross-section modes, and fits the
decay of N(lam) = sup_k N_k(lam) in the energy lam against the model

    log N(lam) = p log lam + q log log lam + log C.

A complex absorbing layer near the grid boundary stands in for the outgoing
condition, so the truncated resolvent stays bounded as eps crosses the
discrete level spacing.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from hyplab.conjugate import ConjugateParams, a_k_eval
from hyplab.errors import ConfigError, NumericalFailure
from hyplab.linops import (
    CapProfile,
    RadialGrid,
    ShiftedSolver,
    eps_floor_min,
    weighted_operator_norm,
)
from hyplab.model import ModelConfig, mode_operator_spec
from hyplab.weights import (
    mode_weight_vector,
    polynomial_weight_vector,
    profile_eval,
)


# ----------------------------------------------------------------------------
# Epsilon schedules
# ----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class EpsSchedule:
    """Geometric schedule eps_0, eps_0 * ratio, ... down to the floor."""

    start: float
    ratio: float = 0.5
    floor: float = 1e-3

    def __post_init__(self):
        if self.start <= 0 or self.floor <= 0:
            raise ConfigError("schedule endpoints must be positive")
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError("schedule ratio must lie in (0, 1)")
        if self.start <= self.floor:
            raise ConfigError("schedule must decrease: start > floor")

    def values(self):
        out = []
        eps = self.start
        while eps >= self.floor * (1.0 - 1e-12):
            out.append(eps)
            eps *= self.ratio
        return out


def default_schedule(lam, start_factor=0.1, ratio=0.5, floor_scale=1e-4):
    """Schedule from start_factor * sqrt(lam) down to floor_scale * sqrt(lam).

    With an absorbing layer present the truncated resolvent stays bounded as
    eps crosses the discrete level spacing, so the floor is set by solver
    conditioning (see linops.eps_floor_min), not by the spacing."""
    start = start_factor * math.sqrt(lam)
    floor = floor_scale * math.sqrt(lam)
    return EpsSchedule(start=start, ratio=ratio, floor=floor)


# ----------------------------------------------------------------------------
# Limiting absorption for a single operator
# ----------------------------------------------------------------------------


def limiting_absorption(op, lam, w_left, w_right, schedule, rel_tol=0.01,
                        cap_double_op=None, norm_tol=1e-6):
    """Weighted resolvent norms along the schedule, extrapolated to eps -> 0+.

    Convergence is declared when two successive norms differ by less than
    rel_tol relatively; the extrapolated value is the last one computed
    (the eps-dependence near the absorbing floor is not polynomial, so
    higher-order extrapolation is unjustified).  If ``cap_double_op`` (the
    same operator with the absorber twice as strong) is given, the last
    norm is recomputed with it and the relative delta reported.

    Returns (norm0, diagnostics).
    """
    if op.cap is None:
        raise ConfigError("limiting absorption requires an absorbing layer")
    if schedule.floor < eps_floor_min(op):
        raise ConfigError(
            "schedule floor is below the solver conditioning limit"
        )
    eps_values = schedule.values()
    if len(eps_values) < 2:
        raise ConfigError("schedule must contain at least two offsets")
    norms = []
    used = []
    tail = math.inf
    converged = False
    for eps in eps_values:
        z = lam + 1j * eps
        norms.append(weighted_operator_norm(op, z, w_left, w_right,
                                            tol=norm_tol))
        used.append(eps)
        if len(norms) >= 2:
            tail = abs(norms[-1] - norms[-2]) / max(abs(norms[-1]), 1e-300)
            if tail < rel_tol:
                converged = True
                break
    norm0 = norms[-1]
    diagnostics = {
        "eps": used,
        "norms": norms,
        "cauchy_tail": tail,
        "converged": converged,
        "truncation_limited": not converged,
    }
    if cap_double_op is not None:
        z = lam + 1j * used[-1]
        doubled = weighted_operator_norm(cap_double_op, z, w_left, w_right,
                                         tol=norm_tol)
        diagnostics["cap_delta"] = abs(doubled - norm0) / max(norm0, 1e-300)
    return norm0, diagnostics


# ----------------------------------------------------------------------------
# Sweep configuration and result
# ----------------------------------------------------------------------------


def default_cap_strength(lam):
    """Absorber strength scaled to the local wavenumber sqrt(lam)."""
    return max(5.0, 0.6 * math.sqrt(lam))


def sweep_grid(lam, r0=0.25, n_points=None, refine=1.0):
    """Grid for the sweep at energy lam: box 2R + 5 with resolution tied to
    the local wavelength (h <= 0.5 / sqrt(lam))."""
    r_max = 2.0 * math.log(5.0 * lam) + 5.0
    if n_points is None:
        h = min(0.05, 0.5 / math.sqrt(lam))
        n_points = int(math.ceil((r_max - r0) / h))
    n_points = int(round(n_points * refine))
    return RadialGrid(r0=r0, r_max=r_max, N=n_points)


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    """Parameters of the lambda sweep.

    rho_model None means the non-trapping scale rho(lam) = lam^{-1/2}.
    weight_kind selects the mode-shifted weight w^{-s}(r - log nu_k)
    ("mode") or the polynomial weight <r>^{-s} ("polynomial").
    """

    lambdas: tuple
    s: float = 1.0
    s0: float = 1.0
    rho_model: object = None
    K_max: int = 24
    r0: float = 0.25
    n_points: int | None = None
    eps_start_factor: float = 0.1
    eps_ratio: float = 0.5
    eps_floor_scale: float = 1e-4
    cap_exponent: int = 2
    cap_fraction: float = 0.25
    weight_kind: str = "mode"
    rel_tol: float = 0.01
    norm_tol: float = 1e-6
    cross_section: dict | None = None
    n: int = 2

    def __post_init__(self):
        if self.s <= 0.5:
            raise ConfigError("weight exponent s must exceed 1/2")
        if self.weight_kind not in ("mode", "polynomial"):
            raise ConfigError(f"unknown weight kind {self.weight_kind!r}")
        if not self.lambdas:
            raise ConfigError("lambda list is empty")
        if any(l <= 1.0 for l in self.lambdas):
            raise ConfigError("sweep energies must exceed 1")

    def rho(self, lam):
        if self.rho_model is None:
            return lam ** -0.5
        return self.rho_model(lam)

    def model(self):
        cs = self.cross_section or {"kind": "circle", "radius": 1.0}
        return ModelConfig(n=self.n, r0=self.r0, cross_section=cs)


@dataclasses.dataclass
class SweepResult:
    """Rows, per-mode extrapolated norms, and per-lambda suprema."""

    config: SweepConfig
    rows: list
    mode_norms: dict
    N_of_lambda: dict
    diagnostics: dict

    def lambdas(self):
        return sorted(self.N_of_lambda)


def _weight_vector(kind, r, nu_k, s):
    if kind == "mode":
        return mode_weight_vector(r, nu_k, s)
    return polynomial_weight_vector(r, s)


def _mode_task(args):
    """Limiting absorption for one (lambda, k) cell; top-level for pickling.

    Returns (lam, k, mu, rows, norm0_or_None, diagnostics).
    """
    (cfg, lam, k, refine, cap_factor) = args
    from hyplab.linops import discretize

    model = cfg.model()
    spectrum = model.spectrum(cfg.K_max)
    spec_k = mode_operator_spec(model, k, spectrum=spectrum)
    grid = sweep_grid(lam, r0=cfg.r0, n_points=cfg.n_points, refine=refine)
    r_abs = grid.r_max - cfg.cap_fraction * (grid.r_max - grid.r0)
    cap = CapProfile(r_abs=r_abs,
                     strength=cap_factor * default_cap_strength(lam),
                     exponent=cfg.cap_exponent)
    op = discretize(spec_k, grid, cap=cap)
    op2 = discretize(spec_k, grid, cap=cap.scaled(2.0))
    r = grid.points()
    w = _weight_vector(cfg.weight_kind, r, spectrum.nu(k), cfg.s)
    schedule = default_schedule(lam, start_factor=cfg.eps_start_factor,
                                ratio=cfg.eps_ratio,
                                floor_scale=cfg.eps_floor_scale)
    try:
        norm0, diag = limiting_absorption(op, lam, w, w, schedule,
                                          rel_tol=cfg.rel_tol,
                                          cap_double_op=op2,
                                          norm_tol=cfg.norm_tol)
    except NumericalFailure as exc:
        return (lam, k, spectrum.mu(k), [], None, {"error": str(exc)})
    rows = [
        {"lambda": lam, "k": k, "mu": spectrum.mu(k), "eps": eps,
         "norm": n, "converged": diag["converged"]}
        for eps, n in zip(diag["eps"], diag["norms"])
    ]
    return (lam, k, spectrum.mu(k), rows, norm0, diag)


def lambda_sweep(config, workers=1, refine=1.0, cap_factor=1.0):
    """Sup over cross-section modes of the limiting-absorption norm, per
    energy.  The sup runs over distinct mode eigenvalues; multiplicity is
    metadata (block-diagonal norms do not see it).

    The sweep is a deterministic map over sorted (lambda, k) tasks followed
    by pure reductions, so any worker count yields identical results.
    """
    model = config.model()
    spectrum = model.spectrum(config.K_max)
    tasks = [(config, float(lam), k, refine, cap_factor)
             for lam in sorted(config.lambdas)
             for k in range(len(spectrum))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_mode_task, tasks, chunksize=1))
    else:
        outcomes = [_mode_task(t) for t in tasks]

    rows = []
    mode_norms = {}
    failures = []
    cap_deltas = {}
    tails = {}
    for lam, k, mu, mode_rows, norm0, diag in outcomes:
        rows.extend(mode_rows)
        if norm0 is None:
            failures.append({"lambda": lam, "k": k, "error": diag["error"]})
            continue
        mode_norms[(lam, k)] = norm0
        cap_deltas[(lam, k)] = diag.get("cap_delta")
        tails[(lam, k)] = diag["cauchy_tail"]
    N_of_lambda = {}
    for (lam, _k), norm0 in mode_norms.items():
        N_of_lambda[lam] = max(N_of_lambda.get(lam, 0.0), norm0)
    diagnostics = {
        "failures": failures,
        "cap_deltas": cap_deltas,
        "cauchy_tails": tails,
        "refine": refine,
        "cap_factor": cap_factor,
    }
    return SweepResult(config=config, rows=rows, mode_norms=mode_norms,
                       N_of_lambda=N_of_lambda, diagnostics=diagnostics)


# ----------------------------------------------------------------------------
# Scaling fit and bound satisfaction
# ----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class ScalingFit:
    p: float
    q: float
    C: float
    residual: float
    C_prime: float
    bound_pass: bool

    def to_dict(self):
        return dataclasses.asdict(self)


def fit_scaling(result):
    """Least squares of log N(lam) against p log lam + q log log lam + log C,
    plus the smallest constant C' with N(lam) <= C' (log lam)^{2 s0 + 2 s}
    rho(lam) across the sweep."""
    lams = result.lambdas()
    if len(lams) < 4:
        raise ConfigError("scaling fit needs at least 4 energies")
    if max(lams) / min(lams) < 100.0:
        raise ConfigError("scaling fit needs >= 2 decades of energy")
    N = np.array([result.N_of_lambda[l] for l in lams])
    if np.any(N <= 0):
        raise NumericalFailure("nonpositive sweep norm; cannot fit logs")
    ll = np.log(np.array(lams))
    design = np.column_stack([ll, np.log(ll), np.ones_like(ll)])
    coef, res, _rank, _sv = np.linalg.lstsq(design, np.log(N), rcond=None)
    p, q, logC = (float(c) for c in coef)
    residual = float(np.sqrt(res[0] / len(lams))) if res.size else 0.0
    cfg = result.config
    envelope = np.array([
        (math.log(l)) ** (2.0 * cfg.s0 + 2.0 * cfg.s) * cfg.rho(l)
        for l in lams
    ])
    C_prime = float(np.max(N / envelope))
    return ScalingFit(p=p, q=q, C=math.exp(logC), residual=residual,
                      C_prime=C_prime, bound_pass=math.isfinite(C_prime))


def fit_from_table(lams, norms):
    """Scaling fit for a synthetic table (no bound check)."""
    lams = [float(l) for l in lams]
    N = np.asarray(norms, dtype=float)
    ll = np.log(np.array(lams))
    design = np.column_stack([ll, np.log(ll), np.ones_like(ll)])
    coef, res, _rank, _sv = np.linalg.lstsq(design, np.log(N), rcond=None)
    p, q, logC = (float(c) for c in coef)
    residual = float(np.sqrt(res[0] / len(lams))) if res.size else 0.0
    return p, q, math.exp(logC), residual


# ----------------------------------------------------------------------------
# Weight comparison and auxiliary estimates
# ----------------------------------------------------------------------------


def weight_comparison(lam, s, base_config=None, K_max=8):
    """Raw table comparing the mode-shifted and polynomial weighted norms at
    one energy.  No pointwise ordering is asserted; the mode-shifted weight
    is merely 'weaker' in the operator sense, which only the table records."""
    base = base_config or SweepConfig(lambdas=(lam,), s=s, K_max=K_max)
    rows = []
    for kind in ("mode", "polynomial"):
        cfg = dataclasses.replace(base, lambdas=(lam,), s=s,
                                  weight_kind=kind, K_max=K_max)
        res = lambda_sweep(cfg)
        rows.append({"kind": kind, "N": res.N_of_lambda[lam],
                     "mode_norms": dict(res.mode_norms)})
    ratio = rows[0]["N"] / max(rows[1]["N"], 1e-300)
    return {"lambda": lam, "s": s, "ratio": ratio, "rows": rows}


def conjugate_weight_sup(lam, K_max=48, n_r=4000, r_span=4.0):
    """Grid sup over modes and r >= R of 1 + a_k(r) / w(r - log nu_k),
    normalized by log lam.  The sup stays O(log lam) because a_k grows like
    r + 2S only past log nu_k, exactly where the weight has started to grow
    linearly as well."""
    params = ConjugateParams.from_lambda(lam)
    from hyplab.model import build_spectrum

    spectrum = build_spectrum({"kind": "circle", "radius": 1.0}, K_max)
    sup = 0.0
    for k in range(len(spectrum)):
        nu = spectrum.nu(k)
        r_hi = math.log(nu) + params.S * r_span + params.R
        r = np.linspace(params.R, max(r_hi, params.R + 1.0), n_r)
        a = a_k_eval(params, nu, r)
        w = profile_eval("w", r - math.log(nu))
        sup = max(sup, float(np.max(1.0 + a / w)))
    return sup, sup / math.log(lam)


def resolvent_expansion_check(op, z, Z, probe=None):
    """Relative residual of the iterated second-resolvent identity

    (H-z)^{-1} = (H-Z)^{-1} + (z-Z)(H-Z)^{-2}
                 + (z-Z)^2 (H-Z)^{-1}(H-z)^{-1}(H-Z)^{-1}

    on a probe vector."""
    if probe is None:
        n = op.n
        probe = np.cos(0.3 * np.arange(n)) + 0.2j * np.sin(np.arange(n) * 0.7)
    sz = ShiftedSolver(op, z)
    sZ = ShiftedSolver(op, Z)
    lhs = sz.solve(probe)
    rZ = sZ.solve(probe)
    rhs = rZ + (z - Z) * sZ.solve(rZ) + (z - Z) ** 2 * sZ.solve(sz.solve(rZ))
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))
