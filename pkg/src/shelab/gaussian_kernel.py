"""Heat kernel, special functions and the closed-form Gaussian identities.

Every other module builds on the functions here. Scalar functions accept
numpy arrays where that is natural (``heat_kernel``, ``std_normal_cdf``,
``erf``/``erfc``); the integral identities are scalar.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .quadrature import (DEFAULT_QUAD, QuadratureError, QuadratureSpec,
                         integrate_interval, integrate_sqrt_endpoints)

__all__ = [
    "KernelParams", "QuadratureSpec", "QuadratureError", "DEFAULT_QUAD",
    "heat_kernel", "heat_kernel_total", "heat_kernel_squared", "gauss",
    "std_normal_cdf", "erf", "erfc", "gamma_fn", "beta_time_integral",
    "product_identity", "time_convolution_closed_form", "time_convolution_origin",
    "time_convolution_bound", "time_integral_closed_form", "arcsin_time_integral",
    "variation_integrals", "variation_bounds", "VARIATION_C1", "VARIATION_C2",
    "VARIATION_C3", "sup_ratio_constant",
]

SQRT2 = math.sqrt(2.0)
SQRT_PI = math.sqrt(math.pi)

VARIATION_C1 = 1.0
VARIATION_C2 = (SQRT2 - 1.0) / SQRT_PI
VARIATION_C3 = 1.0 / SQRT_PI


@dataclass(frozen=True)
class KernelParams:
    """Diffusion coefficient of the heat kernel ``G_nu``."""

    nu: float

    def __post_init__(self):
        if not (isinstance(self.nu, (int, float, np.floating)) and math.isfinite(self.nu)
                and self.nu > 0):
            raise ValueError(f"nu must be a positive finite number, got {self.nu!r}")


Nu = Union[KernelParams, float]


def _nu(params: Nu) -> float:
    if isinstance(params, KernelParams):
        return float(params.nu)
    nu = float(params)
    if not (math.isfinite(nu) and nu > 0):
        raise ValueError(f"nu must be a positive finite number, got {params!r}")
    return nu


def _check_finite(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input")


def gauss(var, x):
    """Centred normal density with variance ``var`` (no checks, vectorised)."""
    return np.exp(-np.square(x) / (2.0 * var)) / np.sqrt(2.0 * math.pi * var)


def _kernel(nu: float, t, x):
    # scale by sqrt(t) so a subnormal t does not underflow nu * t to zero
    st = np.sqrt(t)
    z = x / st
    return np.exp(-np.square(z) / (2.0 * nu)) / (math.sqrt(2.0 * math.pi * nu) * st)


def heat_kernel(params: Nu, t, x):
    """``G_nu(t, x) = (2 pi nu t)^(-1/2) exp(-x^2 / (2 nu t))`` for t > 0.

    Raises ValueError for t <= 0 or non-finite input; see
    :func:`heat_kernel_total` for the variant that is zero for t <= 0.
    """
    nu = _nu(params)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_finite(t, x)
    if np.any(t <= 0):
        raise ValueError("heat_kernel needs t > 0")
    with np.errstate(over="ignore"):
        out = _kernel(nu, t, x)
    return float(out) if out.ndim == 0 else out


def heat_kernel_total(params: Nu, t, x):
    """Heat kernel extended by zero to t <= 0."""
    nu = _nu(params)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_finite(t, x)
    tt = np.where(t > 0, t, 1.0)
    with np.errstate(over="ignore"):
        out = np.where(t > 0, _kernel(nu, tt, x), 0.0)
    return float(out) if out.ndim == 0 else out


def heat_kernel_squared(params: Nu, t, x):
    """``G_nu(t,x)^2`` evaluated through ``(4 pi nu t)^(-1/2) G_{nu/2}(t,x)``."""
    nu = _nu(params)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat_kernel_squared needs t > 0")
    out = heat_kernel(nu / 2.0, t, x) / np.sqrt(4.0 * math.pi * nu * t)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_cdf(x):
    """Standard normal distribution function Phi."""
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def erf(x):
    out = special.erf(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def erfc(x):
    """Complementary error function.

    scipy evaluates it from a continued-fraction/asymptotic form for large
    arguments, so there is no ``1 - erf`` cancellation in the tail.
    """
    out = special.erfc(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def gamma_fn(x: float) -> float:
    """Euler's Gamma function on the positive half line."""
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise ValueError(f"gamma_fn needs x > 0, got {x!r}")
    return float(special.gamma(x))


def beta_time_integral(mu_exp: float, nu_exp: float, t: float) -> float:
    """``int_0^t s^(mu-1) (t-s)^(nu-1) ds = t^(mu+nu-1) B(mu, nu)``."""
    if not (mu_exp > 0 and nu_exp > 0):
        raise ValueError("exponents must be positive")
    if not t > 0:
        raise ValueError("t must be positive")
    logb = special.gammaln(mu_exp) + special.gammaln(nu_exp) - special.gammaln(mu_exp + nu_exp)
    return float(math.exp((mu_exp + nu_exp - 1.0) * math.log(t) + logb))


def product_identity(params: Nu, t: float, s: float, x: float, y: float):
    """Factor ``G(t,x) G(s,y)`` into ``G(t1,x1) G(t2,x2)``.

    Returns ``((t1, x1), (t2, x2))`` with t1 = ts/(t+s), x1 = (sx+ty)/(t+s),
    t2 = t+s and x2 = x-y. The kernel coefficient nu is the same on both
    sides, so ``params`` is only validated.
    """
    _nu(params)
    if not (t > 0 and s > 0):
        raise ValueError("product_identity needs t, s > 0")
    _check_finite(t, s, x, y)
    return (t * s / (t + s), (s * x + t * y) / (t + s)), (t + s, x - y)


def _check_pos(**kw):
    for k, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{k} must be positive, got {v!r}")


def time_convolution_closed_form(nu: float, sigma: float, t: float, x: float, y: float) -> float:
    """``int_0^t G_nu(s,x) G_sigma(t-s,y) ds``.

    Equals ``erfc((|x|/sqrt(nu) + |y|/sqrt(sigma)) / sqrt(2t)) / (2 sqrt(nu sigma))``.
    """
    _check_pos(nu=nu, sigma=sigma, t=t)
    arg = (abs(x) / math.sqrt(nu) + abs(y) / math.sqrt(sigma)) / math.sqrt(2.0 * t)
    return float(special.erfc(arg)) / (2.0 * math.sqrt(nu * sigma))


def time_convolution_origin(nu: float, sigma: float, t: float, y: float) -> float:
    """x = 0 case: ``int_0^t G_sigma(t-s,y) / sqrt(2 pi nu s) ds``."""
    return time_convolution_closed_form(nu, sigma, t, 0.0, y)


def time_convolution_bound(nu: float, sigma: float, t: float, y: float) -> float:
    """Gaussian upper bound ``sqrt(pi t / (2 nu)) G_sigma(t, y)`` for the x = 0 case."""
    _check_pos(nu=nu, sigma=sigma, t=t)
    return math.sqrt(math.pi * t / (2.0 * nu)) * float(gauss(sigma * t, y))


def time_integral_closed_form(nu: float, t: float, x: float) -> float:
    """``int_0^t G_nu(s,x) ds = 2t G_nu(t,x) - (|x|/nu) erfc(|x|/sqrt(2 nu t))``."""
    _check_pos(nu=nu, t=t)
    ax = abs(x)
    return 2.0 * t * float(gauss(nu * t, x)) - (ax / nu) * float(special.erfc(ax / math.sqrt(2.0 * nu * t)))


def arcsin_time_integral(t: float, t_prime: float) -> float:
    """``int_t^{t'} (s (t'-s))^(-1/2) ds = 2 arcsin(sqrt((t'-t)/t'))``."""
    if not t_prime > 0:
        raise ValueError("t_prime must be positive")
    if t < 0 or t > t_prime:
        raise ValueError("need 0 <= t <= t_prime")
    return 2.0 * math.asin(math.sqrt((t_prime - t) / t_prime))


# ---------------------------------------------------------------------------
# Variation integrals of the heat kernel


_TINY = sys.float_info.min


def _space_diff_density(nu, a, d):
    # int_R (G(a, x-z) - G(a, y-z))^2 dz with d = x - y; a = r^2 may underflow
    a = max(a, _TINY)
    return 1.0 / math.sqrt(math.pi * nu * a) - 2.0 * float(gauss(2.0 * nu * a, d))


def _time_diff_density(nu, a, b, d):
    # int_R (G(a, x-z) - G(b, y-z))^2 dz, a, b > 0
    a, b = max(a, _TINY), max(b, _TINY)
    return (1.0 / math.sqrt(4.0 * math.pi * nu * a) + 1.0 / math.sqrt(4.0 * math.pi * nu * b)
            - 2.0 * float(gauss(nu * (a + b), d)))


def variation_integrals(nu: float, s: float, t: float, x: float, y: float,
                        quad: QuadratureSpec = DEFAULT_QUAD) -> tuple[float, float, float, float]:
    """The four squared-variation integrals of the heat kernel.

    With ``G`` extended by zero to negative times, returns

    (i)   int_0^t int_R [G(t-r,x-z) - G(t-r,y-z)]^2 dz dr
    (ii)  int_0^s int_R [G(t-r,x-z) - G(s-r,x-z)]^2 dz dr
    (iii) int_s^t int_R G(t-r,x-z)^2 dz dr = sqrt(t-s)/sqrt(pi nu)
    (iv)  int_0^t int_R [G(t-r,x-z) - G(s-r,y-z)]^2 dz dr

    The z-integrals are done in closed form through the product identity; the
    remaining time integrals use adaptive quadrature with square-root
    endpoint substitutions.
    """
    _check_pos(nu=nu, t=t)
    if s < 0 or s > t:
        raise ValueError("need 0 <= s <= t")
    d = x - y
    tau = t - s

    if d == 0.0:
        v1 = 0.0
    else:
        # integrand finite at a -> 0 only after cancellation; near 0 it behaves
        # like a^(-1/2) times a fast-decaying factor, so use a = r^2
        v1 = integrate_sqrt_endpoints(lambda a: _space_diff_density(nu, a, d), 0.0, t, quad, ends="lower")

    if s == 0.0 or tau == 0.0:
        v2 = 0.0
    else:
        # integrand in the variable q = s - r in (0, s]
        v2 = integrate_sqrt_endpoints(lambda q: _time_diff_density(nu, q + tau, q, 0.0),
                                      0.0, s, quad, ends="lower")

    v3 = math.sqrt(tau / (math.pi * nu))

    if s == 0.0:
        v4 = v3
    elif tau == 0.0 and d == 0.0:
        v4 = 0.0
    else:
        f4 = lambda q: _time_diff_density(nu, q + tau, q, d)
        v4 = integrate_sqrt_endpoints(f4, 0.0, s, quad, ends="lower") + v3
    return max(v1, 0.0), max(v2, 0.0), v3, max(v4, 0.0)


def variation_integrals_exact(nu: float, s: float, t: float, x: float, y: float) -> tuple[float, float, float]:
    """Closed forms of integrals (i)-(iii), used as an independent check."""
    _check_pos(nu=nu, t=t)
    d = abs(x - y)
    v1 = (2.0 * math.sqrt(t / (math.pi * nu))
          - (4.0 * t * float(gauss(2.0 * nu * t, d)) - (d / nu) * float(special.erfc(d / math.sqrt(4.0 * nu * t)))))
    tau = t - s
    v2 = (math.sqrt(t) + math.sqrt(s) - math.sqrt(tau)
          - SQRT2 * (math.sqrt(t + s) - math.sqrt(tau))) / math.sqrt(math.pi * nu)
    v3 = math.sqrt(tau / (math.pi * nu))
    return v1, v2, v3


def variation_bounds(nu: float, s: float, t: float, x: float, y: float) -> tuple[float, float, float, float]:
    """Right-hand sides matching :func:`variation_integrals`.

    (i) C1 |x-y|/nu, (ii) C2 sqrt(t-s)/sqrt(nu), (iii) C3 sqrt(t-s)/sqrt(nu),
    (iv) 2 C1 (|x-y|/nu + sqrt(t-s)/sqrt(nu)).
    """
    d = abs(x - y)
    rt = math.sqrt((t - s) / nu)
    return (VARIATION_C1 * d / nu, VARIATION_C2 * rt, VARIATION_C3 * rt,
            2.0 * VARIATION_C1 * (d / nu + rt))


def _ratio(x: float) -> float:
    return abs(math.expm1(-0.5 * x * x)) / abs(x)


def sup_ratio_constant() -> float:
    """``sup_x |exp(-x^2/2) - 1| / |x|`` (about 0.451256).

    A coarse scan on [0.1, 10] locates the bracket and checks that the scanned
    values rise then fall; golden-section search then polishes the maximiser.
    """
    grid = np.linspace(0.1, 10.0, 991)
    vals = np.array([_ratio(float(v)) for v in grid])
    k = int(np.argmax(vals))
    diffs = np.diff(vals)
    if not (np.all(diffs[:k] > 0) and np.all(diffs[k:] < 0)):
        raise ArithmeticError("ratio is not unimodal on the scan grid")
    res = minimize_scalar(lambda v: -_ratio(v), bracket=(grid[k - 1], grid[k], grid[k + 1]),
                          method="golden", tol=1e-12)
    return float(-res.fun)
