"""Randomized verification of the heat-kernel identities and inequalities.

Every check draws its inputs from a seeded generator and records the largest
violation seen. Two kinds of check exist:

* closed-form checks compare two closed expressions (or one closed
  expression against an inequality); the violation is relative and must stay
  below 1e-10;
* integral checks compare a closed form against adaptive quadrature of its
  defining integral; the violation is the absolute discrepancy, allowed up to
  ten times the quadrature tolerance at that value.

``run_suite`` returns one :class:`LemmaResult` per check.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import gaussian_kernel as gk
from .holder_constants import delta_g_constants
from .quadrature import DEFAULT_QUAD, QuadratureSpec, integrate_interval, integrate_sqrt_endpoints

__all__ = ["LemmaResult", "CHECKS", "run_suite", "FAULT_SIZE", "FAULT_TARGETS", "CLOSED_FORM_TOL", "QUAD_FACTOR"]

CLOSED_FORM_TOL = 1e-10
QUAD_FACTOR = 10.0
FAULT_SIZE = 1e-6
# keep Gaussian exponents away from underflow so relative comparisons are meaningful
_MAX_EXPONENT = 500.0


@dataclass
class LemmaResult:
    lemma_id: str
    description: str
    kind: str
    trials: int
    max_violation: float
    max_ratio: float
    passed: bool
    worst_case: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self) -> dict:
        return asdict(self)


class _Tracker:
    """Accumulates violations; ``ratio = violation / allowed``."""

    def __init__(self):
        self.max_violation = 0.0
        self.max_ratio = 0.0
        self.worst: dict = {}

    def closed(self, lhs: float, rhs: float, inputs: dict, equality: bool = False):
        """Relative violation of ``lhs <= rhs`` (or ``lhs == rhs``)."""
        scale = max(abs(lhs), abs(rhs), 1e-300)
        diff = abs(lhs - rhs) if equality else max(0.0, lhs - rhs)
        self._add(diff / scale, CLOSED_FORM_TOL, inputs)

    def closed_log(self, log_lhs: float, log_rhs: float, inputs: dict):
        """``lhs <= rhs`` given both logarithms."""
        if log_lhs == -math.inf:
            return self._add(0.0, CLOSED_FORM_TOL, inputs)
        self._add(max(0.0, math.expm1(min(log_lhs - log_rhs, 700.0))), CLOSED_FORM_TOL, inputs)

    def integral(self, numeric: float, exact: float, quad: QuadratureSpec, inputs: dict,
                 inequality: bool = False):
        """``numeric == exact`` (or ``numeric <= exact``) up to the quadrature tolerance."""
        diff = max(0.0, numeric - exact) if inequality else abs(numeric - exact)
        self._add(diff, QUAD_FACTOR * quad.tolerance_for(exact), inputs)

    def _add(self, violation: float, allowed: float, inputs: dict):
        if not math.isfinite(violation):
            violation = math.inf
        ratio = violation / allowed
        if ratio > self.max_ratio or not math.isfinite(ratio):
            self.max_ratio = ratio
            self.worst = dict(inputs)
        self.max_violation = max(self.max_violation, violation)


def _log_gauss(var: float, x: float) -> float:
    return -x * x / (2.0 * var) - 0.5 * math.log(2.0 * math.pi * var)


def _log_abs_diff(la: float, lb: float) -> float:
    """``log |e^la - e^lb|``."""
    if la == lb:
        return -math.inf
    hi, lo = max(la, lb), min(la, lb)
    return hi + math.log(-math.expm1(lo - hi))


# ---------------------------------------------------------------------------
# individual checks: each takes (rng, trials, bump, quad, tracker)


def _gaussian_product(rng, trials, bump, quad, tr):
    done = 0
    while done < trials:
        nu = rng.uniform(0.1, 5.0)
        t, s = rng.uniform(0.01, 10.0, 2)
        x, y = rng.uniform(-10.0, 10.0, 2)
        if x * x / (2 * nu * t) + y * y / (2 * nu * s) > _MAX_EXPONENT:
            continue
        done += 1
        (t1, x1), (t2, x2) = gk.product_identity(nu, t, s, x, y)
        lhs = gk.heat_kernel(nu, t, x) * gk.heat_kernel(nu, s, y) * bump
        rhs = gk.heat_kernel(nu, t1, x1) * gk.heat_kernel(nu, t2, x2)
        inp = dict(nu=nu, t=t, s=s, x=x, y=y)
        tr.closed(lhs, rhs, inp, equality=True)
        tr.closed(gk.heat_kernel(nu, t, x) ** 2,
                  gk.heat_kernel(nu / 2.0, t, x) / math.sqrt(4.0 * math.pi * nu * t), inp, equality=True)


def _split_bound(rng, trials, bump, quad, tr):
    for _ in range(trials):
        t, s = rng.uniform(0.01, 5.0, 2)
        x, z1, z2 = rng.uniform(-4.0, 4.0, 3)
        m = max(4.0 * t, s)
        zb, dz = 0.5 * (z1 + z2), z1 - z2
        lhs = _log_gauss(t, x - zb) + _log_gauss(s, dz) + math.log(bump)
        rhs = math.log(m / math.sqrt(t * s)) + _log_gauss(m, x - z1) + _log_gauss(m, x - z2)
        tr.closed_log(lhs, rhs, dict(t=t, s=s, x=x, z1=z1, z2=z2))


def _time_convolution(rng, trials, bump, quad, tr):
    for _ in range(trials):
        nu, sig = rng.uniform(0.2, 5.0, 2)
        t = rng.uniform(0.05, 5.0)
        x, y = rng.uniform(-3.0, 3.0, 2)
        if rng.random() < 0.2:
            x = 0.0
        inp = dict(nu=nu, sigma=sig, t=t, x=x, y=y)
        exact = gk.time_convolution_closed_form(nu, sig, t, x, y) * bump
        f = lambda s: float(gk.heat_kernel(nu, s, x) * gk.heat_kernel(sig, t - s, y)) if 0 < s < t else 0.0
        tr.integral(integrate_sqrt_endpoints(f, 0.0, t, quad, ends="both"), exact, quad, inp)
        tr.closed(gk.time_convolution_origin(nu, sig, t, y), gk.time_convolution_bound(nu, sig, t, y), inp)


def _erfc_bound(rng, trials, bump, quad, tr):
    xs = np.concatenate([np.linspace(0.0, 26.0, trials // 2), rng.uniform(0.0, 26.0, trials - trials // 2)])
    for x in xs:
        x = float(x)
        inp = dict(x=x)
        tr.closed(gk.erfc(x) * bump, math.exp(-x * x), inp)
        if x < 5.0:
            # erfc(x) = (2/pi) e^{-x^2} int_0^inf e^{-x^2 u^2}/(1+u^2) du, mapped to u = tan(th)
            f = lambda th: math.exp(-x * x * math.tan(th) ** 2)
            val = 2.0 / math.pi * math.exp(-x * x) * integrate_interval(f, 0.0, 0.5 * math.pi, quad)
            tr.integral(val, gk.erfc(x), quad, inp)


def _time_integral(rng, trials, bump, quad, tr):
    for _ in range(trials):
        nu = rng.uniform(0.2, 5.0)
        t = rng.uniform(0.05, 5.0)
        x = 0.0 if rng.random() < 0.1 else rng.uniform(-5.0, 5.0)
        exact = gk.time_integral_closed_form(nu, t, x) * bump
        f = lambda s: float(gk.heat_kernel(nu, s, x)) if s > 0 else 0.0
        tr.integral(integrate_sqrt_endpoints(f, 0.0, t, quad, ends="lower"), exact, quad, dict(nu=nu, t=t, x=x))


def _kernel_time_ratio(rng, trials, bump, quad, tr):
    done = 0
    while done < trials:
        nu = rng.uniform(0.2, 5.0)
        t = rng.uniform(0.05, 5.0)
        n = rng.uniform(1.0001, 5.0)
        x = rng.uniform(-5.0, 5.0)
        if x * x / (nu * t) > _MAX_EXPONENT:
            continue
        done += 1
        r = rng.uniform(0.0, n * n * t)
        inp = dict(nu=nu, t=t, n=n, x=x, r=r)
        ratio = gk.heat_kernel(nu / 2.0, t + r, x) / gk.heat_kernel(nu / 2.0, t, x)
        lhs = abs(ratio - 1.0) * bump
        mid = 3.0 * r / (t + r) * math.exp(n * n * x * x / (nu * t * (1.0 + n * n)))
        top = (1.5 * math.sqrt(r * (1.0 + n * n)) / math.sqrt(t)
               * gk.heat_kernel(nu * (1.0 + n * n) / 2.0, t, x) / gk.heat_kernel(nu / 2.0, t, x))
        tr.closed(lhs, mid, inp)
        tr.closed(mid, top, inp)


def _arcsin_integral(rng, trials, bump, quad, tr):
    for _ in range(trials):
        tp = rng.uniform(0.01, 10.0)
        t = 0.0 if rng.random() < 0.1 else rng.uniform(0.0, tp)
        exact = gk.arcsin_time_integral(t, tp) * bump
        f = lambda s: 1.0 / math.sqrt(s * (tp - s)) if 0 < s < tp else 0.0
        ends = "both" if t == 0.0 else "upper"
        tr.integral(integrate_sqrt_endpoints(f, t, tp, quad, ends=ends), exact, quad, dict(t=t, t_prime=tp))


def _beta_integral(rng, trials, bump, quad, tr):
    for _ in range(trials):
        mu, nv = rng.uniform(0.5, 4.0, 2)
        t = rng.uniform(0.1, 5.0)
        exact = gk.beta_time_integral(mu, nv, t) * bump
        f = lambda s: s ** (mu - 1.0) * (t - s) ** (nv - 1.0) if 0 < s < t else 0.0
        tr.integral(integrate_sqrt_endpoints(f, 0.0, t, quad, ends="both"), exact, quad,
                    dict(mu=mu, nu=nv, t=t))


def _increment_gaussian(rng, trials, bump, quad, tr):
    C = gk.sup_ratio_constant()
    inside = 0.45125 <= C <= 0.45126
    tr._add(0.0 if inside else 1.0, CLOSED_FORM_TOL, dict(sup_ratio_constant=C))
    done = 0
    while done < trials:
        nu = rng.uniform(0.2, 5.0)
        t = rng.uniform(0.05, 5.0)
        L = rng.uniform(0.1, 3.0)
        beta = rng.uniform(0.01, 0.99)
        x = rng.uniform(-3.0 * L, 3.0 * L)
        h = rng.uniform(-beta * L, beta * L)
        v = nu * t
        if (abs(x) + 2.0 * L) ** 2 / (2.0 * v) > _MAX_EXPONENT:
            continue
        done += 1
        inp = dict(nu=nu, t=t, L=L, beta=beta, x=x, h=h)
        g = lambda y: float(gk.heat_kernel(nu, t, y))
        far = (math.exp(3.0 * L * L / (2.0 * v) + _log_gauss(v, x - 2.0 * L))
               + math.exp(3.0 * L * L / (2.0 * v) + _log_gauss(v, x + 2.0 * L)))
        factor = abs(h) * (C / math.sqrt(2.0 * v) + 1.0 / ((1.0 - beta) * L)) * (g(x) + far)
        tr.closed(abs(g(x + h) - g(x)) * bump, factor, inp)
        tr.closed(abs(g(x + h) + g(x - h) - 2.0 * g(x)), 2.0 * factor, inp)


def _linear_exponential(rng, trials, bump, quad, tr):
    for k in range(trials):
        a = rng.uniform(1.0, 3.0)
        b = 1.0 / (a * math.e) * (1.0 if k % 2 == 0 else rng.uniform(1.0, 3.0))
        x = math.exp(1.0 / a) * (1.0 + rng.normal(0.0, 0.05)) if k % 4 == 0 else rng.uniform(-20.0, 20.0)
        if x == 0.0:
            continue
        tr.closed_log(math.log(abs(x)) + math.log(bump), b * abs(x) ** a, dict(a=a, b=b, x=x))


def _exponential_increment(rng, trials, bump, quad, tr):
    for _ in range(trials):
        a = rng.uniform(1.01, 1.99)
        c = rng.uniform(0.1, 3.0)
        n = rng.uniform(0.2, 3.0)
        dg = delta_g_constants(n, a, c)
        logg = lambda y: c * abs(y) ** a
        z = rng.uniform(-4.0, 4.0)
        # (1) time increment
        x = rng.uniform(-4.0, 4.0)
        t, tp = np.sort(rng.uniform(0.0, n, 2))
        inp = dict(a=a, c=c, n=n, x=x, z=z, t=float(t), t_prime=float(tp))
        lhs = _log_abs_diff(logg(x - math.sqrt(t) * z), logg(x - math.sqrt(tp) * z))
        if tp > t:
            rhs = math.log(a * c) + dg.c1 * abs(x) ** a + dg.c2 * abs(z) ** a + 0.5 * math.log(tp - t)
            tr.closed_log(lhs + math.log(bump), rhs, inp)
        # (2) space increment
        x, xp = rng.uniform(-n, n, 2)
        t = rng.uniform(0.0, n)
        inp = dict(a=a, c=c, n=n, x=x, x_prime=xp, z=z, t=t)
        lhs = _log_abs_diff(logg(x - math.sqrt(t) * z), logg(xp - math.sqrt(t) * z))
        if xp != x:
            rhs = math.log(dg.c3) + dg.c4 * abs(z) ** a + math.log(abs(xp - x))
            tr.closed_log(lhs, rhs, inp)


def _growth_absorption(rng, trials, bump, quad, tr):
    for _ in range(trials):
        a = rng.uniform(1.01, 1.98)
        b = rng.uniform(a + 0.005, 1.999)
        c2 = rng.uniform(0.05, 3.0)
        x = rng.uniform(-30.0, 30.0)
        if rng.random() < 0.25:
            x = c2 ** (1.0 / (b - a)) * rng.uniform(0.0, 1.5)
        lhs = (c2 * abs(x) ** a - abs(x) ** b) * bump
        rhs = c2 ** (b / (b - a))
        tr.closed(lhs, rhs, dict(a=a, b=b, c2=c2, x=x))


def _variation_integrals(rng, trials, bump, quad, tr):
    for _ in range(trials):
        nu = rng.uniform(0.2, 5.0)
        t = rng.uniform(0.01, 5.0)
        s = rng.uniform(0.0, t)
        x, y = rng.uniform(-3.0, 3.0, 2)
        inp = dict(nu=nu, s=s, t=t, x=x, y=y)
        v = gk.variation_integrals(nu, s, t, x, y, quad)
        e1, e2, e3 = gk.variation_integrals_exact(nu, s, t, x, y)
        b = gk.variation_bounds(nu, s, t, x, y)
        for k in range(4):
            tr.integral(v[k], b[k], quad, inp, inequality=True)
        tr.integral(v[0] * bump, e1, quad, inp)
        tr.integral(v[1], e2, quad, inp)
        tau = t - s
        if tau > 0:
            sq = integrate_sqrt_endpoints(lambda q: 1.0 / math.sqrt(4.0 * math.pi * nu * q) if q > 0 else 0.0,
                                          0.0, tau, quad, ends="lower")
            tr.integral(sq, e3, quad, inp)
        tr.closed(e3, b[2], inp, equality=True)


def _semigroup(rng, trials, bump, quad, tr):
    for _ in range(trials):
        nu = rng.uniform(0.2, 5.0)
        t, s = rng.uniform(0.05, 5.0, 2)
        x = rng.uniform(-4.0, 4.0)
        exact = float(gk.heat_kernel(nu, t + s, x)) * bump
        # integrand is Gaussian in y with mean x s/(t+s) and variance nu t s/(t+s)
        m, sd = x * s / (t + s), math.sqrt(nu * t * s / (t + s))
        w = quad.gaussian_tail_sigmas * sd
        f = lambda y: float(gk.heat_kernel(nu, t, x - y) * gk.heat_kernel(nu, s, y))
        tr.integral(integrate_interval(f, m - w, m + w, quad, points=[m]), exact, quad, dict(nu=nu, t=t, s=s, x=x))


CHECKS: dict[str, tuple[str, str, Callable]] = {
    "growth_absorption": ("closed", "c2|x|^a - |x|^b <= c2^(b/(b-a)) for 1 < a < b < 2", _growth_absorption),
    "variation_integrals": ("integral", "four squared-variation integrals of G against their bounds "
                            "and closed forms", _variation_integrals),
    "gaussian_product": ("closed", "product and square identities of the heat kernel", _gaussian_product),
    "split_bound": ("closed", "midpoint/difference splitting of a Gaussian product", _split_bound),
    "time_convolution": ("integral", "time convolution of two heat kernels equals an erfc expression",
                         _time_convolution),
    "erfc_bound": ("closed", "erfc(x) <= exp(-x^2) and its integral representation", _erfc_bound),
    "time_integral": ("integral", "time integral of the heat kernel in closed form", _time_integral),
    "kernel_time_ratio": ("closed", "relative change of G_{nu/2} under a time shift", _kernel_time_ratio),
    "arcsin_integral": ("integral", "int_t^t' ds / sqrt(s (t'-s)) = 2 arcsin sqrt((t'-t)/t')", _arcsin_integral),
    "beta_integral": ("integral", "Beta time integral in closed form", _beta_integral),
    "increment_gaussian": ("closed", "first and second spatial increments of G bounded by shifted kernels",
                           _increment_gaussian),
    "linear_exponential": ("closed", "|x| <= exp(b|x|^a) for a >= 1, b >= 1/(a e)", _linear_exponential),
    "exponential_increment": ("closed", "time and space increments of exp(c|x|^a) after Gaussian scaling",
                              _exponential_increment),
    "semigroup": ("integral", "Chapman-Kolmogorov identity of the heat kernel", _semigroup),
}


# checks containing an exact identity, where a relative perturbation must be caught
FAULT_TARGETS = ("variation_integrals", "gaussian_product", "time_convolution", "erfc_bound",
                 "time_integral", "arcsin_integral", "beta_integral", "semigroup")


def run_suite(trials: int = 1000, seed: int = 20240601, inject_fault: Optional[str] = None,
              quad: QuadratureSpec = DEFAULT_QUAD, only: Optional[list] = None) -> list[LemmaResult]:
    """Run every check (or those in ``only``) with ``trials`` random cases each.

    ``inject_fault`` names a check from ``FAULT_TARGETS``; one side of its
    identity is scaled by ``1 + FAULT_SIZE``, and that check must then fail.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if inject_fault is not None and inject_fault not in FAULT_TARGETS:
        raise ValueError(f"fault injection needs an identity check, one of {FAULT_TARGETS}")
    out = []
    for k, (lemma_id, (kind, desc, fn)) in enumerate(CHECKS.items()):
        if only is not None and lemma_id not in only:
            continue
        rng = np.random.default_rng([seed, k])
        tr = _Tracker()
        bump = 1.0 + FAULT_SIZE if lemma_id == inject_fault else 1.0
        t0 = time.perf_counter()
        fn(rng, trials, bump, quad, tr)
        out.append(LemmaResult(lemma_id, desc, kind, trials, tr.max_violation, tr.max_ratio,
                               tr.max_ratio < 1.0, tr.worst, time.perf_counter() - t0))
    return out
