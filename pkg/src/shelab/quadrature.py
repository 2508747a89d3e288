"""Adaptive quadrature helpers shared by the kernel, moment and constant modules.

All integrals in the package are one-dimensional and Gaussian dominated, so a
thin wrapper over QUADPACK (``scipy.integrate.quad``) plus a few change of
variables tricks is enough.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate


class QuadratureError(ArithmeticError):
    """Raised when an adaptive rule fails to reach its tolerance.

    Attributes:
        estimate: the value reached by the rule.
        error: the rule's own error estimate.
    """

    def __init__(self, message: str, estimate: float = math.nan, error: float = math.nan):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for adaptive integration.

    ``gaussian_tail_sigmas`` is the half-width, in standard deviations, at
    which infinite spatial domains are truncated.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    max_subdivisions: int = 2000
    gaussian_tail_sigmas: float = 12.0

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "gaussian_tail_sigmas"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be a positive integer")

    def tolerance_for(self, value: float) -> float:
        """Acceptance threshold ``max(abs_tol, rel_tol*|value|)``."""
        return max(self.abs_tol, self.rel_tol * abs(value))

    def scaled(self, factor: float) -> "QuadratureSpec":
        """Copy with both tolerances multiplied by ``factor``."""
        return QuadratureSpec(self.abs_tol * factor, self.rel_tol * factor,
                              self.max_subdivisions, self.gaussian_tail_sigmas)


DEFAULT_QUAD = QuadratureSpec()


def integrate_interval(f: Callable[[float], float], a: float, b: float,
                       spec: QuadratureSpec = DEFAULT_QUAD,
                       points: Sequence[float] | None = None) -> float:
    """Integrate ``f`` over the finite interval [a, b].

    ``points`` are interior break points (kinks, singular locations). Raises
    :class:`QuadratureError` if QUADPACK reports failure and its error
    estimate exceeds the requested tolerance.
    """
    if a == b:
        return 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("integrate_interval needs finite limits")
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    pts = None
    if points:
        inner = sorted({float(p) for p in points if a < p < b})
        pts = inner or None
    limit = int(spec.max_subdivisions)
    if pts is not None:
        limit = max(limit, 2 * (len(pts) + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                        limit=limit, points=pts, full_output=1)[:3]
    if not math.isfinite(val):
        raise QuadratureError("non-finite integral", val, err)
    if err > 10.0 * spec.tolerance_for(val) and err > 1e-300:
        raise QuadratureError(f"adaptive quadrature did not converge on [{a}, {b}]", val, err)
    return sign * val


def integrate_pieces(f: Callable[[float], float], edges: Sequence[float],
                     spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Integrate over consecutive intervals ``edges[i], edges[i+1]`` and sum."""
    edges = sorted(float(e) for e in edges)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            total += integrate_interval(f, lo, hi, spec)
    return total


def integrate_sqrt_endpoints(f: Callable[[float], float], a: float, b: float,
                             spec: QuadratureSpec = DEFAULT_QUAD,
                             ends: str = "both") -> float:
    """Integrate ``f`` on [a, b] when it may blow up like an inverse square
    root at one or both ends.

    ``ends="upper"`` uses s = b - r^2, ``"lower"`` uses s = a + r^2 and
    ``"both"`` uses s = a + (b - a) sin^2(theta). Each makes the transformed
    integrand bounded.
    """
    if b < a:
        raise ValueError("need a <= b")
    if b == a:
        return 0.0
    width = b - a
    if ends == "upper":
        g = lambda r: 2.0 * r * f(b - r * r)
        return integrate_interval(g, 0.0, math.sqrt(width), spec)
    if ends == "lower":
        g = lambda r: 2.0 * r * f(a + r * r)
        return integrate_interval(g, 0.0, math.sqrt(width), spec)
    if ends == "both":
        def g(theta):
            sn, cs = math.sin(theta), math.cos(theta)
            return 2.0 * width * sn * cs * f(a + width * sn * sn)
        return integrate_interval(g, 0.0, 0.5 * math.pi, spec)
    raise ValueError(f"unknown ends={ends!r}")


def log_peak_window(logf: Callable[[float], float], guess: float, scale: float,
                    drop: float = 80.0, max_expand: int = 200) -> tuple[float, float, float]:
    """Locate the region where ``exp(logf)`` carries essentially all its mass.

    ``logf`` must be unimodal enough that walking outward from its maximiser
    until it has fallen by ``drop`` (in natural-log units) captures the mass.
    Returns ``(lo, peak, hi)``.
    """
    from scipy.optimize import minimize_scalar

    scale = abs(scale) if scale > 0 else 1.0
    # coarse scan to find a good starting bracket
    grid = guess + scale * np.linspace(-40.0, 40.0, 801)
    vals = np.array([logf(float(z)) for z in grid])
    i = int(np.argmax(vals))
    lo_b = grid[max(i - 1, 0)]
    hi_b = grid[min(i + 1, len(grid) - 1)]
    if i in (0, len(grid) - 1):
        # peak beyond the scan; march outward
        direction = -1.0 if i == 0 else 1.0
        z = grid[i]
        step = scale
        best = vals[i]
        for _ in range(max_expand):
            nz = z + direction * step
            nv = logf(nz)
            if nv < best:
                break
            z, best = nz, nv
            step *= 1.5
        lo_b, hi_b = min(z - step, z + step), max(z - step, z + step)
    res = minimize_scalar(lambda z: -logf(z), bounds=(lo_b, hi_b), method="bounded",
                          options={"xatol": 1e-10 * max(1.0, abs(lo_b) + abs(hi_b))})
    peak = float(res.x)
    top = logf(peak)

    def walk(direction):
        step = scale
        z = peak
        for _ in range(max_expand):
            z = z + direction * step
            if logf(z) < top - drop:
                return z
            step *= 1.3
        raise QuadratureError("integrand does not decay", math.inf, math.inf)

    return walk(-1.0), peak, walk(1.0)
