"""Escape-function conjugate operator: a_k, its flow, and the generator.

The conjugate operator for mode k is built from the radial vector field

    a_k(r) = (r + 2S - log nu_k) chi_R(r) xi_S(r - log nu_k),

with chi_R(r) = chi(r/R) and xi_S(x) = xi(x/S).  The associated objects are

* the flow gamma_t solving d/dt gamma = a(gamma) together with its spatial
  derivative (variational equation);
* the induced unitary group U_t phi = (d_r gamma_t)^{1/2} phi(gamma_t);
* the Hermitian generator A_k = a_k D_r - i a_k'/2, discretized in the
  symmetric form (a D + D a)/2;
* the spectral-multiplier decomposition g(r, mu) with r g = a_k;
* the mollified commutator kernel used to identify the generator.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import comb

from hyplab.errors import ConfigError, FlowExitsGrid, NumericalFailure
from hyplab.linops import DiscreteOperator
from hyplab.weights import profile_eval

A_MAX_DERIVATIVE = 5


@dataclasses.dataclass(frozen=True)
class ConjugateParams:
    """Cutoff scales (R, S), optionally derived from an energy lambda."""

    R: float
    S: float
    derived_from_lambda: float | None = None

    @staticmethod
    def from_lambda(lam):
        if lam <= 0:
            raise ConfigError("lambda must be positive")
        return ConjugateParams(
            R=math.log(5.0 * lam), S=math.log(4.0 * lam), derived_from_lambda=lam
        )

    def validate(self, r0):
        if not (self.R > self.S > r0 + 1.0):
            raise ConfigError(
                f"require R > S > r0+1, got R={self.R}, S={self.S}, r0={r0}"
            )


def a_k_eval(params, nu_k, r, j=0):
    """j-th derivative of a_k at r (analytic Leibniz over the profile factors).

    Derivatives are supported to order 5, one beyond the bound table, so that
    products a_k * a_k^{(j+1)} can be formed for j up to 4.
    """
    if not (0 <= j <= A_MAX_DERIVATIVE):
        raise ConfigError(f"derivative order {j} outside [0, {A_MAX_DERIVATIVE}]")
    r = np.asarray(r, dtype=float)
    scal = r.ndim == 0
    r = np.atleast_1d(r)
    R, S = params.R, params.S
    lognu = math.log(nu_k)
    u = r + 2.0 * S - lognu

    def chi_d(m):
        return profile_eval("chi", r / R, m) / R**m

    def xi_d(m):
        return profile_eval("xi", (r - lognu) / S, m) / S**m

    out = np.zeros_like(r)
    # Leibniz over the product u * X * Z; u has only derivatives 0 and 1.
    for ju in (0, 1):
        if ju > j:
            continue
        u_fac = u if ju == 0 else 1.0
        rest = j - ju
        coeff_u = comb(j, ju, exact=True)
        for jx in range(rest + 1):
            out = out + (
                coeff_u
                * comb(rest, jx, exact=True)
                * u_fac
                * chi_d(jx)
                * xi_d(rest - jx)
            )
    return out[0] if scal else out


def a_k_fn(params, nu_k, j=0):
    """Callable r -> a_k^{(j)}(r)."""
    return lambda r: a_k_eval(params, nu_k, r, j)


@dataclasses.dataclass
class FlowResult:
    """Flow values at the grid points for one time t."""

    t: float
    gamma: np.ndarray
    dgamma: np.ndarray
    n_steps: int
    n_evals: int

    def gronwall_ok(self, a_prime_sup):
        """Check ||d_r gamma||_inf <= e^{||a'||_inf |t|}."""
        bound = math.exp(a_prime_sup * abs(self.t))
        return float(np.max(self.dgamma)) <= bound * (1.0 + 1e-10)


def flow_integrate(a, t, r, a_prime=None, rtol=1e-11, atol=1e-12):
    """Integrate the flow and its variational equation jointly.

    Parameters
    ----------
    a : callable
        The vector field r -> a(r), vectorized.
    t : float
        Flow time (either sign).
    r : array_like
        Starting points (typically the radial grid).
    a_prime : callable or None
        Analytic derivative; required for the variational equation.  When
        None it is built by central finite differences of ``a``.
    """
    r = np.asarray(r, dtype=float)
    if a_prime is None:
        def a_prime(x, _h=1e-6):
            return (a(x + _h) - a(x - _h)) / (2.0 * _h)
    n = r.size

    def rhs(_, y):
        gam, dgam = y[:n], y[n:]
        return np.concatenate([a(gam), a_prime(gam) * dgam])

    y0 = np.concatenate([r, np.ones(n)])
    if t == 0.0:
        return FlowResult(0.0, r.copy(), np.ones(n), 0, 0)
    sol = solve_ivp(
        rhs, (0.0, t), y0, method="DOP853", rtol=rtol, atol=atol,
        dense_output=False,
    )
    if not sol.success:
        raise NumericalFailure(f"flow integration failed: {sol.message}")
    yT = sol.y[:, -1]
    gamma, dgamma = yT[:n], yT[n:]
    if np.any(dgamma <= 0.0):
        raise NumericalFailure("flow lost positivity of d_r gamma")
    return FlowResult(t, gamma, dgamma, sol.t.size - 1, sol.nfev)


def unitary_apply(a, t, phi, r, a_prime=None, flow=None):
    """Transported function U_t phi = (d_r gamma_t)^{1/2} phi(gamma_t).

    phi is sampled at the points r; values of phi at gamma_t(r) are obtained
    by piecewise-linear interpolation, whose O(h^2) error scale matches the
    discretization order used everywhere else.  Raises FlowExitsGrid when a
    non-negligible part of phi would be transported from beyond the grid.
    """
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi)
    if flow is None:
        flow = flow_integrate(a, t, r, a_prime=a_prime)
    gamma = flow.gamma
    out_of_range = (gamma < r[0]) | (gamma > r[-1])
    if np.any(out_of_range):
        # Transport only exits the grid where phi has no mass to move.
        probe = np.clip(gamma[out_of_range], r[0], r[-1])
        vals = np.interp(probe, r, np.abs(phi))
        if np.any(vals > 1e-8 * max(float(np.max(np.abs(phi))), 1e-300)):
            raise FlowExitsGrid(
                f"flow at t={t} needs phi values outside [{r[0]}, {r[-1]}]"
            )
    re = np.interp(gamma, r, np.real(phi), left=0.0, right=0.0)
    if np.iscomplexobj(phi):
        im = np.interp(gamma, r, np.imag(phi), left=0.0, right=0.0)
        vals = re + 1j * im
    else:
        vals = re
    return np.sqrt(flow.dgamma) * vals


def generator_matrix(params, nu_k, grid, a_values=None):
    """Hermitian discretization of A_k = a_k D_r - i a_k'/2.

    Uses the symmetric form (a D + D a)/2 with the centered first difference
    D = -i d_r, which is Hermitian on the grid by construction.  Passing
    ``a_values`` overrides the field (synthetic tests).
    """
    r = grid.points()
    h = grid.h
    a = np.asarray(a_values, dtype=float) if a_values is not None \
        else a_k_eval(params, nu_k, r)
    upper = -1j * (a[:-1] + a[1:]) / (4.0 * h)
    lower = 1j * (a[:-1] + a[1:]) / (4.0 * h)
    diags = {0: np.zeros(grid.N, dtype=complex), 1: upper, -1: lower}
    return DiscreteOperator(grid, diags, bc="dirichlet")


def g_rs_eval(params, r, mu):
    """Spectral multiplier g(r, mu) with r g(r, mu_k) = a_k(r), and the
    zeroth-order companion g~ = g + r d_r g (= a_k')."""
    if np.any(np.asarray(mu) < 0):
        raise ConfigError("mu must be nonnegative")
    nu = math.sqrt(1.0 + mu)
    r_arr = np.asarray(r, dtype=float)
    lognu = 0.5 * math.log1p(mu)
    chi_r = profile_eval("chi", r_arr / params.R)
    xi_r = profile_eval("xi", (r_arr - lognu) / params.S)
    safe_r = np.where(r_arr == 0.0, 1.0, r_arr)  # chi kills r <= R anyway
    g = chi_r * (1.0 + (2.0 * params.S - lognu) / safe_r) * xi_r
    gtilde = a_k_eval(params, nu, r, j=1)
    return g, gtilde


# ----------------------------------------------------------------------------
# Mollified commutator kernel (generator identification)
# ----------------------------------------------------------------------------


def theta_bump(x):
    """Fixed smooth even bump supported in [-1, 1] with unit integral."""
    x = np.asarray(x, dtype=float)
    raw = profile_eval("q", 2.0 * (x + 1.0)) * profile_eval("q", 2.0 * (1.0 - x))
    return raw / _theta_norm()


def theta_bump_prime(x):
    x = np.asarray(x, dtype=float)
    raw = 2.0 * profile_eval("q", 2.0 * (x + 1.0), 1) * profile_eval(
        "q", 2.0 * (1.0 - x)
    ) - 2.0 * profile_eval("q", 2.0 * (x + 1.0)) * profile_eval(
        "q", 2.0 * (1.0 - x), 1
    )
    return raw / _theta_norm()


_theta_norm_cache = []


def _theta_norm():
    if not _theta_norm_cache:
        val, _ = quad(
            lambda x: profile_eval("q", 2.0 * (x + 1.0))
            * profile_eval("q", 2.0 * (1.0 - x)),
            -1.0,
            1.0,
        )
        _theta_norm_cache.append(val)
    return _theta_norm_cache[0]


def theta_schur_constant():
    """integral of |x theta'(x)| + |theta(x)|, the Schur bound scale for J."""
    val, _ = quad(lambda x: abs(x * theta_bump_prime(x)) + abs(theta_bump(x)),
                  -1.0, 1.0, limit=200)
    return val


def j_eps_matrix(a, a_prime, eps, r, h):
    """Grid kernel of the first-order commutator term:

        j(r, r') = (a'(r) + a'(r'))/2 theta_eps(r-r') + (a(r)-a(r')) theta_eps'(r-r')

    with theta_eps(x) = theta(x/eps)/eps, returned as a dense matrix including
    the grid measure h.
    """
    rr = r[:, None] - r[None, :]
    av, apv = a(r), a_prime(r)
    kern = 0.5 * (apv[:, None] + apv[None, :]) * theta_bump(rr / eps) / eps
    kern += (av[:, None] - av[None, :]) * theta_bump_prime(rr / eps) / eps**2
    return kern * h


def transported_mollifier_matrix(a, t, eps, r, h, a_prime=None):
    """Matrix of U_t^* J_eps^0 U_t where J_eps^0 has kernel theta_eps(r-r'),
    i.e. kernel (d_r gamma(r) d_r gamma(r'))^{1/2} theta_eps(gamma(r)-gamma(r'))."""
    flow = flow_integrate(a, t, r, a_prime=a_prime)
    g, dg = flow.gamma, flow.dgamma
    kern = np.sqrt(dg[:, None] * dg[None, :]) * theta_bump(
        (g[:, None] - g[None, :]) / eps
    ) / eps
    return kern * h


def t0_for_mollifier(a_prime_sup, bound=0.5):
    """Largest t with e^{||a'|| t} - 1 <= bound, the validity window for the
    first-order expansion of the transported mollifier."""
    return math.log1p(bound) / max(a_prime_sup, 1e-300)
