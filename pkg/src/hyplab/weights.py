"""Smooth weight scale, cutoff profiles, and weight-operator checks.

The building block is the canonical smooth step

    q(x) = e^{-1/x} / (e^{-1/x} + e^{-1/(1-x)})   on (0,1),

extended by 0 below and 1 above.  From q we derive

* the weight function  w(x) = 1 for x <= 0, x for x >= 1, blended as
  1 + q(x)(x-1) on (0,1);
* the right cutoff     chi(r) = q(r-1)^2  (0 for r <= 1, 1 for r >= 2);
* the left cutoff      xi(r)  = q(2(r+1))^2  (0 for r <= -1, 1 for r >= -1/2);
* the spectral bump    f(E) = q(3-|E|)  (1 on [-2,2], 0 outside [-3,3]).

chi and xi are squares so that their square roots are themselves smooth.
Analytic derivatives up to order 6 are generated symbolically once and cached.

On top of the profiles this module provides the mode-shifted weight vectors
w^{-s}(r - log nu_k), the symbol weights w^s(r - log<eta>), the temperate
weight inequality sampler, a desk-scale boundedness check for the weighted
quantization factorization, and the demonstration that the mode-shifted
weight is strictly weaker than the polynomial one.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from hyplab.errors import ConfigError

# Analytic derivatives are advertised to order 6; one extra order is kept
# internally for the almost-analytic extension of the functional calculus.
MAX_DERIVATIVE = 7

_PROFILE_NAMES = ("q", "w", "chi", "xi", "f")

# Lazily built table: name -> list of callables, one per derivative order,
# valid on the open transition interval of that profile.
_blend_tables: dict[str, list] = {}


def _build_blend_tables():
    """Build derivative tables for the transition blends.

    Only the step q is differentiated symbolically; w = 1 + q(x)(x-1),
    chi = q(x-1)^2 and xi = q(2(x+1))^2 are assembled from the q table with
    the product and chain rules, which keeps the one-time symbolic cost small.
    """
    import sympy as sp

    x = sp.symbols("x")
    q = sp.exp(-1 / x) / (sp.exp(-1 / x) + sp.exp(-1 / (1 - x)))
    qfns = []
    cur = q
    for _ in range(MAX_DERIVATIVE + 1):
        qfns.append(sp.lambdify(x, cur, "numpy"))
        cur = sp.diff(cur, x)

    def w_fn(j):
        # (1 + q(x)(x-1))^{(j)} = q^{(j)}(x)(x-1) + j q^{(j-1)}(x), plus 1 at j=0
        def fn(t):
            out = qfns[j](t) * (t - 1.0)
            if j >= 1:
                out = out + j * qfns[j - 1](t)
            else:
                out = out + 1.0
            return out

        return fn

    def square_fn(j, shift, scale):
        # d^j/dx^j [q(scale (x - shift))^2] by the Leibniz rule on q * q
        def fn(t):
            u = scale * (np.asarray(t, dtype=float) - shift)
            g = [qfns[i](u) for i in range(j + 1)]
            out = sum(math.comb(j, i) * g[i] * g[j - i] for i in range(j + 1))
            return out * scale**j

        return fn

    orders = range(MAX_DERIVATIVE + 1)
    _blend_tables["q"] = [qfns, 0.0, 1.0]
    _blend_tables["w"] = [[w_fn(j) for j in orders], 0.0, 1.0]
    _blend_tables["chi"] = [[square_fn(j, 1.0, 1.0) for j in orders], 1.0, 2.0]
    _blend_tables["xi"] = [[square_fn(j, -1.0, 2.0) for j in orders], -1.0, -0.5]


def _blend(name, x, j):
    """Evaluate the j-th derivative of a transition blend on its open interval."""
    if not _blend_tables:
        _build_blend_tables()
    fns, _, _ = _blend_tables[name]
    with np.errstate(all="ignore"):
        out = np.asarray(fns[j](x), dtype=float)
    # exp underflow at the interval ends produces harmless 0/0 -> nan;
    # the true limit of every derivative there is 0 (or the plateau value).
    if j == 0 and name == "w":
        out = np.where(np.isfinite(out), out, 1.0)
    else:
        out = np.where(np.isfinite(out), out, 0.0)
    return out


def _piecewise_eval(name, x, j, lo, hi, left_vals, right_vals):
    """Assemble plateau + blend evaluation for one profile derivative."""
    x = np.asarray(x, dtype=float)
    scal = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    left = x <= lo
    right = x >= hi
    mid = ~(left | right)
    out[left] = left_vals[j] if j < len(left_vals) else 0.0
    if name == "w" and j == 0:
        out[right] = x[right]
    elif name == "w" and j == 1:
        out[right] = 1.0
    else:
        out[right] = right_vals[j] if j < len(right_vals) else 0.0
    if mid.any():
        out[mid] = _blend(name, x[mid], j)
    return out[0] if scal else out


def profile_eval(which, x, j=0, extended=False):
    """Evaluate a smooth profile or one of its derivatives.

    Parameters
    ----------
    which : str
        One of ``"q"``, ``"w"``, ``"chi"``, ``"xi"``, ``"f"``.
    x : float or array_like
        Evaluation points.
    j : int
        Derivative order, 0 <= j <= 6 (order 7 with ``extended=True``, used
        by the almost-analytic extension internally).
    """
    if which not in _PROFILE_NAMES:
        raise ConfigError(f"unknown profile {which!r}; choose from {_PROFILE_NAMES}")
    limit = MAX_DERIVATIVE if extended else MAX_DERIVATIVE - 1
    if not (0 <= j <= limit):
        raise ConfigError(f"derivative order {j} outside [0, {limit}]")
    if which == "q":
        return _piecewise_eval("q", x, j, 0.0, 1.0, (0.0,), (1.0,))
    if which == "w":
        return _piecewise_eval("w", x, j, 0.0, 1.0, (1.0,), ())
    if which == "chi":
        return _piecewise_eval("chi", x, j, 1.0, 2.0, (0.0,), (1.0,))
    if which == "xi":
        return _piecewise_eval("xi", x, j, -1.0, -0.5, (0.0,), (1.0,))
    # f(E) = q(3-|E|): plateau 1 on [-2,2], support [-3,3].  Smooth because
    # the |E| kink sits inside the plateau of q.
    x = np.asarray(x, dtype=float)
    scal = x.ndim == 0
    x = np.atleast_1d(x)
    inner = profile_eval("q", 3.0 - np.abs(x), j, extended=True)
    if j % 2 == 1:
        sign = np.where(x >= 0, -1.0, 1.0)
    else:
        sign = 1.0
    out = inner * sign
    return out[0] if scal else out


def chi_sqrt_eval(x, j=0):
    """chi^{1/2}(x) = q(x-1) and derivatives (smooth by construction)."""
    return profile_eval("q", np.asarray(x, dtype=float) - 1.0, j)


def xi_sqrt_eval(x, j=0):
    """xi^{1/2}(x) = q(2(x+1)) and derivatives (chain rule in the factor 2)."""
    return profile_eval("q", 2.0 * (np.asarray(x, dtype=float) + 1.0), j) * (2.0 ** j)


def nu_from_mu(mu):
    """nu = (1 + mu)^{1/2}, the frequency scale attached to a mode."""
    return np.sqrt(1.0 + np.asarray(mu, dtype=float))


def mode_weight_vector(r, nu_k, s):
    """Diagonal of the mode-shifted weight w^{-s}(r_i - log nu_k).

    Parameters
    ----------
    r : array_like
        Radial grid points (a :class:`~hyplab.linops.RadialGrid` is also
        accepted and its points are used).
    nu_k : float
        Mode frequency scale, nu_k >= 1.
    s : float
        Weight exponent; negative s yields the unbounded inverse weight.
    """
    if hasattr(r, "points"):
        r = r.points()
    r = np.asarray(r, dtype=float)
    if nu_k < 1.0:
        raise ConfigError(f"nu_k = {nu_k} < 1")
    return profile_eval("w", r - math.log(nu_k)) ** (-s)


def polynomial_weight_vector(r, s):
    """Diagonal of the polynomial weight <r>^{-s}."""
    if hasattr(r, "points"):
        r = r.points()
    r = np.asarray(r, dtype=float)
    return (1.0 + r**2) ** (-s / 2.0)


def symbol_weight(r, eta, s, sigma=0.0):
    """Symbol weight w^{s + i sigma}(r - log<eta>); complex when sigma != 0."""
    r = np.asarray(r, dtype=float)
    eta = np.asarray(eta, dtype=float)
    base = profile_eval("w", r - 0.5 * np.log1p(eta**2))
    expo = s + (1j * sigma if sigma else 0.0)
    return base**expo


@dataclasses.dataclass(frozen=True)
class WeightSpec:
    """Selects a weight family and exponent for resolvent experiments."""

    kind: str  # "mode_shifted" | "polynomial"
    s: float

    def __post_init__(self):
        if self.kind not in ("mode_shifted", "polynomial"):
            raise ConfigError(f"unknown weight kind {self.kind!r}")

    def vector(self, r, nu_k=1.0):
        if self.kind == "mode_shifted":
            return mode_weight_vector(r, nu_k, self.s)
        return polynomial_weight_vector(r, self.s)


def temperate_check(sample_count, C, M, seed=0, box=50.0):
    """Sample the temperate-weight inequality for w(r - log<eta>).

    Draws (r, r1, eta, eta1) uniformly from [-box, box] and collects every
    violation of

        w(r - log<eta>) <= C w(r1 - log<eta1>) (1 + |r-r1| + |eta-eta1|)^M.

    Returns a list of violating tuples (r, r1, eta, eta1, lhs, rhs).
    """
    if C <= 0 or M < 0:
        raise ConfigError("C must be positive and M nonnegative")
    rng = np.random.default_rng(seed)
    r, r1, eta, eta1 = rng.uniform(-box, box, size=(4, sample_count))
    lhs = profile_eval("w", r - 0.5 * np.log1p(eta**2))
    rhs = C * profile_eval("w", r1 - 0.5 * np.log1p(eta1**2)) * (
        1.0 + np.abs(r - r1) + np.abs(eta - eta1)
    ) ** M
    bad = lhs > rhs
    return [
        (r[i], r1[i], eta[i], eta1[i], lhs[i], rhs[i]) for i in np.nonzero(bad)[0]
    ]


# ----------------------------------------------------------------------------
# Quantization on the circle cross-section
# ----------------------------------------------------------------------------


def _angular_modes(n_theta):
    """Integer Fourier mode numbers in FFT ordering."""
    return np.fft.fftfreq(n_theta, d=1.0 / n_theta).astype(int)


class _CircleQuantization:
    """Left quantization in theta of a symbol a(r, theta, m) on a product grid.

    The operator acts on arrays phi[r, theta] by

        (Op(a) phi)(r, theta) = sum_m a(r, theta, m) phihat_m(r) e^{im theta} / n,

    i.e. multiply in mode space when a is theta-independent, with the usual
    left-quantized mixing otherwise.
    """

    def __init__(self, symbol_values):
        # symbol_values: array (n_r, n_theta, n_modes)
        self.a = symbol_values

    def apply(self, phi):
        phihat = np.fft.fft(phi, axis=1)  # (n_r, n_modes)
        return self._apply(phihat, phi.shape[1])

    def _apply(self, phihat, n_theta):
        phases = np.exp(
            1j
            * np.outer(
                2.0 * np.pi * np.arange(n_theta) / n_theta, _angular_modes(n_theta)
            )
        )  # (theta, m)
        integrand = self.a * phihat[:, None, :]  # (r, theta, m)
        return np.einsum("rtm,tm->rt", integrand, phases) / n_theta

    def apply_adjoint(self, psi):
        n_theta = psi.shape[1]
        phases = np.exp(
            -1j
            * np.outer(
                2.0 * np.pi * np.arange(n_theta) / n_theta, _angular_modes(n_theta)
            )
        )
        tmp = np.einsum("rtm,rt,tm->rm", np.conj(self.a), psi, phases) / n_theta
        return np.fft.ifft(tmp, axis=1) * n_theta


def _mode_multiplier_apply(values, phi):
    """Apply a (r, mode)-diagonal multiplier via FFT in theta."""
    phihat = np.fft.fft(phi, axis=1)
    return np.fft.ifft(values * phihat, axis=1)


_B_CHOICES = ("one", "angular", "eta_phase")


def _b_values(choice, r, theta, modes):
    """Bounded comparison symbols b(r, theta, eta) in the zeroth weight class."""
    n_r, n_t, n_m = len(r), len(theta), len(modes)
    if choice == "one":
        return np.ones((n_r, n_t, n_m))
    if choice == "angular":
        vals = (1.0 + 0.5 * np.cos(theta))[None, :, None]
        return np.broadcast_to(vals, (n_r, n_t, n_m)).copy()
    if choice == "eta_phase":
        vals = (modes / np.sqrt(1.0 + modes**2))[None, None, :] + 0j
        return np.broadcast_to(vals, (n_r, n_t, n_m)).copy()
    raise ConfigError(f"unknown symbol choice {choice!r}; choose from {_B_CHOICES}")


def _plateau_cutoff(x, lo, hi):
    """Smooth plateau equal to 1 on [lo+1, hi-1] and 0 outside (lo, hi)."""
    x = np.asarray(x, dtype=float)
    return profile_eval("q", x - lo) * profile_eval("q", hi - x)


def quantize_and_factor_check(s, sigma, levels=3, b_choice="one",
                              n_r0=48, n_theta0=32, r_max0=12.0):
    """Boundedness ladder for the weighted quantization factorization.

    For the circle cross-section, quantizes a = w^{-s+i sigma}(r - log<eta>)
    times a bounded symbol b and measures

        ||W_s  kappa Op(a) kappa~||

    by power iteration across a ladder of grids that doubles both resolutions
    and extends the radial box.  Returns the list of norms (one per level).
    The composition is expected to stay bounded for s >= 0 and to grow along
    the ladder when the weight sign is wrong (s < 0 composes to ~ w^{2|s|}).
    """
    if levels < 3:
        raise ConfigError("resolution ladder needs at least 3 levels")
    norms = []
    for lev in range(levels):
        n_r = n_r0 * 2**lev
        n_theta = n_theta0 * 2**lev
        r_max = r_max0 * 1.5**lev
        r = np.linspace(0.0, r_max, n_r)
        theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
        modes = _angular_modes(n_theta).astype(float)
        shift = 0.5 * np.log1p(modes**2)
        wbase = profile_eval("w", r[:, None] - shift[None, :])
        a_weight = wbase ** complex(-s, sigma)
        a_vals = a_weight[:, None, :] * _b_values(b_choice, r, theta, modes)
        op = _CircleQuantization(a_vals)
        # Left factor: always the positive-exponent weight, so the wrong-sign
        # symbol (s < 0) composes to ~ w^{2|s|} instead of cancelling.
        w_s = wbase ** abs(s)
        kappa_r = _plateau_cutoff(r, 1.0, r_max - 1.0)
        kappa_t = _plateau_cutoff(theta, 0.5, 2 * np.pi - 0.5)
        kappa = kappa_r[:, None] * kappa_t[None, :]
        # kappa~ = 1 on a neighborhood of supp kappa
        kt_r = _plateau_cutoff(r, 0.5, r_max - 0.5)
        kt_t = _plateau_cutoff(theta, 0.25, 2 * np.pi - 0.25)
        kappa_tilde = kt_r[:, None] * kt_t[None, :]

        def fwd(phi):
            return _mode_multiplier_apply(w_s, kappa * op.apply(kappa_tilde * phi))

        def adj(psi):
            return kappa_tilde * op.apply_adjoint(
                kappa * _mode_multiplier_apply(w_s, psi)
            )

        rng = np.random.default_rng(7)
        v = rng.standard_normal((n_r, n_theta)) + 1j * rng.standard_normal(
            (n_r, n_theta)
        )
        v /= np.linalg.norm(v)
        val = 0.0
        for _ in range(60):
            u = adj(fwd(v))
            nv = np.linalg.norm(u)
            if nv == 0:
                break
            u /= nv
            if abs(nv - val) <= 1e-4 * max(nv, 1e-30):
                val = nv
                break
            val = nv
            v = u
        norms.append(math.sqrt(val))
    return norms


def unboundedness_demo(s, nu_ladder, r_max=None, n=2001):
    """Ratios ||W_{-s} <r>^s phi_j|| for unit bumps at r = log nu_j.

    Demonstrates that the composition of the inverse mode weight with the
    polynomial weight grows like <log nu>^s along a geometric nu ladder.
    """
    if s < 0:
        raise ConfigError("s must be nonnegative")
    nu_ladder = [float(v) for v in nu_ladder]
    top = max(math.log(v) for v in nu_ladder) + 3.0
    if r_max is None:
        r_max = top
    elif r_max < top:
        raise ConfigError("bump support exceeds grid")
    r = np.linspace(0.0, r_max, n)
    h = r[1] - r[0]
    out = []
    for nu in nu_ladder:
        c = math.log(nu)
        bump = profile_eval("q", 1.0 + (r - c)) * profile_eval("q", 1.0 - (r - c))
        bump = bump / math.sqrt(np.sum(bump**2) * h)
        vec = mode_weight_vector(r, nu, s) * (1.0 + r**2) ** (s / 2.0) * bump
        out.append(math.sqrt(np.sum(np.abs(vec) ** 2) * h))
    return out
