"""Explicit constants of the moment-increment bound for ``I = u - J0``.

For (t, x), (t', x') in ``[1/n, n] x [-n, n]`` (or ``[0, n] x [-n, n]`` for
densities with growth at most ``c exp(|x|^a)``, 1 < a < 2) the p-th moment
of ``I(t,x) - I(t',x')`` is bounded by
``C_{n,p} (|t - t'|^(1/4) + |x - x'|^(1/2))``. The six building blocks
``C_{n,1..6}`` involve suprema of Gaussian smoothings of ``|mu|`` over a
compact box; these are found by a grid search with one local refinement and
a final 1% safety inflation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .gaussian_kernel import sup_ratio_constant
from .initial_data import InitialMeasure, classify, j0, log_exp_power_convolution
from .moments import MomentKernel, RhoSpec, bdg_constants, upsilon
from .quadrature import DEFAULT_QUAD, QuadratureSpec, log_peak_window

__all__ = ["DeltaGConstants", "IncrementBoundConstants", "delta_g_constants", "k_ac",
           "star_growth_bound", "compute_constants", "increment_bound", "SupSearch"]

SAFETY_INFLATION = 1.01


def k_ac(a: float, c: float, nu: float, t: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``(exp(c|.|^a) * G_nu(t, .))(0)``, the Gaussian average of ``exp(c|y|^a)``
    with variance ``nu t``."""
    if not 0.0 <= a < 2.0:
        raise ValueError("k_ac diverges for a >= 2 (need 0 <= a < 2)")
    if not (c > 0 and nu > 0 and t >= 0):
        raise ValueError("need c > 0, nu > 0, t >= 0")
    if a == 0.0:
        return math.exp(c)
    return math.exp(log_exp_power_convolution(c, a, nu * t, 0.0, quad))


@dataclass(frozen=True)
class DeltaGConstants:
    """Constants controlling increments of ``g(x) = exp(c|x|^a)`` on ``[-n, n]``."""

    n: float
    a: float
    c: float
    c1: float
    c2: float
    c3: float
    c4: float


def delta_g_constants(n: float, a: float, c: float) -> DeltaGConstants:
    if not 1.0 < a < 2.0:
        raise ValueError(f"need 1 < a < 2, got a={a}")
    if not (n > 0 and c > 0):
        raise ValueError("need n > 0 and c > 0")
    c1 = (c + (a - 1.0) / (a * math.e)) * 2.0 ** (a - 1.0)
    c4 = c1 * n ** (a / 2.0)
    c2 = c4 + 1.0 / (a * math.e)
    c3 = a * c * math.exp(c1 * n ** a)
    return DeltaGConstants(float(n), float(a), float(c), c1, c2, c3, c4)


@dataclass(frozen=True)
class SupSearch:
    """Resolution of the compact-box supremum search."""

    grid: int = 201
    refine_factor: int = 10
    inflation: float = SAFETY_INFLATION


def _box_sup(func: Callable[[float, np.ndarray], np.ndarray], s_rng, y_rng, search: SupSearch) -> dict:
    """Maximise ``func(s, ys)`` (vectorised in ys) over a box.

    A uniform grid is scanned, then a grid ``refine_factor`` times finer is
    laid over the coarse cells adjacent to the maximiser.
    """
    m = search.grid
    ss = np.linspace(s_rng[0], s_rng[1], m)
    ys = np.linspace(y_rng[0], y_rng[1], m)
    vals = np.array([func(float(s), ys) for s in ss])
    if not np.all(np.isfinite(vals)):
        raise OverflowError("non-finite value in supremum search")
    i, k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    coarse = float(vals[i, k])
    ds, dy = ss[1] - ss[0], ys[1] - ys[0]
    r = 2 * search.refine_factor + 1
    ss2 = np.linspace(max(s_rng[0], ss[i] - ds), min(s_rng[1], ss[i] + ds), r)
    ys2 = np.linspace(max(y_rng[0], ys[k] - dy), min(y_rng[1], ys[k] + dy), r)
    vals2 = np.array([func(float(s), ys2) for s in ss2])
    i2, k2 = np.unravel_index(int(np.argmax(vals2)), vals2.shape)
    fine = float(vals2[i2, k2])
    best = max(coarse, fine)
    return {"sup": best, "coarse_sup": coarse, "argmax": [float(ss2[i2]), float(ys2[k2])]
            if fine >= coarse else [float(ss[i]), float(ys[k])],
            "s_range": [float(s_rng[0]), float(s_rng[1])], "y_range": [float(y_rng[0]), float(y_rng[1])],
            "grid": m, "refined_grid": r}


def _panel_friendly(measure: InitialMeasure) -> bool:
    d = measure.density
    return d is not None and d.kind in ("holder_test", "tabulated")


class _PanelRule:
    """Fixed Gauss-Legendre rule for Gaussian smoothings ``(f * N(0, var))(y)``
    of a piecewise smooth weight ``f``, shared by every (s, y) of a supremum
    search.

    The weight is passed as ``log f``; sums are formed in log space.
    Panels are at most ``h`` wide, break at the kinks of ``f`` and are
    geometrically graded towards them.
    """

    def __init__(self, log_weight: Callable[[np.ndarray], np.ndarray], kinks, lo: float, hi: float,
                 h: float, atoms=(), order: int = 16, grading: int = 12):
        kinks = sorted(k for k in kinks if lo < k < hi)
        edges = set(np.linspace(lo, hi, int(math.ceil((hi - lo) / h)) + 1).tolist())
        edges.update(kinks)
        for k in kinks:
            edges.update(k + sgn * h * 2.0 ** -j for j in range(1, grading + 1) for sgn in (-1.0, 1.0))
        e = np.array(sorted(v for v in edges if lo <= v <= hi))
        xg, wg = np.polynomial.legendre.leggauss(order)
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * np.diff(e)
        self.z = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        with np.errstate(divide="ignore"):
            self.logw = np.log((half[:, None] * wg[None, :]).ravel()) + log_weight(self.z)
        self.log_weight = log_weight
        self.atoms = tuple(atoms)

    @classmethod
    def for_measure(cls, measure: InitialMeasure, y_rng, sd_min: float, sd_max: float,
                    tail: float = 12.0) -> "_PanelRule":
        d = measure.density
        def log_weight(z):
            with np.errstate(divide="ignore"):
                return np.log(np.abs(d.evaluate(z)))
        return cls(log_weight, d.kinks(), y_rng[0] - tail * sd_max, y_rng[1] + tail * sd_max,
                   0.25 * sd_min, measure.atoms)

    def smooth(self, var: float, ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        if var == 0.0:
            if self.atoms:
                raise ValueError("zero variance smoothing of atoms")
            return np.exp(self.log_weight(ys))
        e = self.logw[None, :] - (ys[:, None] - self.z[None, :]) ** 2 / (2.0 * var)
        top = e.max(axis=1)
        out = np.exp(top) * np.exp(e - top[:, None]).sum(axis=1) / math.sqrt(2.0 * math.pi * var)
        for a, w in self.atoms:
            out += w * np.exp(-(ys - a) ** 2 / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
        return out


class _ExpPowerSmoother:
    """Smoothings of ``exp(c|z|^a)`` at ``|y| <= y_max``. One panel rule is
    built per octave of the variance, sized by the log-peak window of the
    widest smoothing in that octave at the edge of the box."""

    def __init__(self, c: float, a: float, y_max: float):
        self.c, self.a, self.y_max = c, a, y_max
        self._rules: dict = {}
        self._log_weight = lambda z: c * np.abs(z) ** a

    def _rule(self, band: int) -> _PanelRule:
        if band not in self._rules:
            var_max = 2.0 ** (band + 1)
            sd = math.sqrt(var_max)
            c, a, y = self.c, self.a, self.y_max
            logf = lambda z: c * abs(z) ** a - (y - z) ** 2 / (2.0 * var_max)
            _, _, hi = log_peak_window(logf, y, sd)
            reach = max(hi, y + 12.0 * sd)
            h = 0.25 * math.sqrt(0.5 * var_max)
            self._rules[band] = _PanelRule(self._log_weight, [0.0], -reach, reach, h)
        return self._rules[band]

    def smooth(self, var: float, ys: np.ndarray) -> np.ndarray:
        if var == 0.0:
            return np.exp(self._log_weight(np.asarray(ys, dtype=float)))
        return self._rule(int(math.floor(math.log2(var)))).smooth(var, ys)


def star_growth_bound(measure: InitialMeasure, star_exponent: float = 1.5) -> tuple[float, float]:
    """Return ``(a, c)`` with ``|f(x)| <= c exp(|x|^a)`` and 1 < a < 2.

    Bounded densities use ``c = sup |f|`` and ``a = star_exponent``. For
    ``c1 exp(c2 |x|^a0)`` the exponent is raised to some ``b > a0`` when
    needed, using ``c2 r^a0 - r^b <= c2^(b/(b-a0))``.
    """
    cls = classify(measure)
    if not cls.in_MH_star:
        raise ValueError("measure is not in the class with growth below exp(|x|^a), a < 2, without atoms")
    if not 1.0 < star_exponent < 2.0:
        raise ValueError("star_exponent must lie in (1, 2)")
    d = measure.density
    s = abs(d.scale)
    if d.kind == "constant":
        return star_exponent, s
    if d.kind == "holder_test":
        return star_exponent, s * float(d.params["cap"])
    if d.kind == "tabulated":
        return star_exponent, max(abs(v) for v in d.params["fs"])
    if d.kind == "exponential_growth":
        a0, c1, c2 = float(d.params["a"]), float(d.params["c1"]), float(d.params["c2"])
        if a0 > 1.0 and c2 <= 1.0:
            return a0, s * c1
        b = star_exponent if star_exponent > a0 else 0.5 * (a0 + 2.0)
        return b, s * c1 * math.exp(c2 ** (b / (b - a0)))
    raise ValueError(f"no growth bound for density kind {d.kind!r}")


@dataclass
class IncrementBoundConstants:
    """Constants ``C_{n,1..6}`` (and optionally their counterparts valid down
    to t = 0) with the growth factor ``upsilon_star_n``."""

    n: float
    p: int
    nu: float
    C: tuple
    C_star: Optional[tuple]
    upsilon_star_n: float
    lip: float
    vip: float
    z_p: float
    a_p: float
    provenance: dict = field(default_factory=dict)

    def combos(self, star: bool = False) -> tuple[float, float]:
        """(time combination, space combination) of the building blocks."""
        C = self.C_star if star else self.C
        if C is None:
            raise ValueError("star constants were not computed")
        u = self.upsilon_star_n
        time = C[0] + C[4] + u * (C[1] + C[5])
        space = C[2] + u * C[3]
        return time, space

    def prefactor(self, star: bool = False) -> float:
        """``C_{n,p}`` with ``C_{n,p}^2 = 4 z_p^2 Lip^2 max(time, space)``."""
        time, space = self.combos(star)
        return math.sqrt(4.0 * self.z_p ** 2 * self.lip ** 2 * max(time, space))

    def to_json(self) -> dict:
        d = asdict(self)
        d["C"] = list(self.C)
        d["C_star"] = None if self.C_star is None else list(self.C_star)
        d["prefactor"] = self.prefactor()
        d["prefactor_star"] = None if self.C_star is None else self.prefactor(True)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "IncrementBoundConstants":
        keys = ("n", "p", "nu", "upsilon_star_n", "lip", "vip", "z_p", "a_p")
        kw = {k: doc[k] for k in keys}
        return cls(C=tuple(doc["C"]), C_star=None if doc.get("C_star") is None else tuple(doc["C_star"]),
                   provenance=dict(doc.get("provenance", {})), **kw)


def _with_246(c1: float, c3: float, c5: float, factor: float) -> tuple:
    return (c1, factor * c1, c3, factor * c3, c5, factor * c5)


def compute_constants(measure: InitialMeasure, rho: RhoSpec, nu: float, p: int, n: float,
                      star: bool = False, *, search: SupSearch = SupSearch(),
                      star_exponent: float = 1.5, conservative: bool = False,
                      quad: QuadratureSpec = DEFAULT_QUAD) -> IncrementBoundConstants:
    """Evaluate the six constants for ``measure`` and noise coefficient ``rho``.

    Suprema of ``(|mu| * G_{2nu}(s,.))^2`` and ``(|mu| * G_{2nu(1+n^2)}(s,.))^2``
    run over ``[1/n, n] x [-5n, 5n]``. ``conservative=True`` replaces the
    Gaussian-increment factors ``C sqrt(n)/sqrt(2nu)`` and ``exp(6n^3/nu)`` by
    ``C sqrt(n)/sqrt(nu)`` and ``exp(12n^3/nu)``, the values obtained when the
    increment estimate is applied to the heat kernel with diffusivity nu/2.
    With ``star=True`` the constants valid down to t = 0 are also computed.
    """
    if not (n > 1 and math.isfinite(n)):
        raise ValueError("n must be a finite real > 1")
    if not nu > 0:
        raise ValueError("nu must be positive")
    cls = classify(measure)
    if not cls.in_MH:
        raise ValueError("measure is not Gaussian integrable")
    if star and not cls.in_MH_star:
        raise ValueError("star constants need a density without atoms and growth below exp(|x|^a), a < 2")
    z, a_p = bdg_constants(p, rho.vip)
    vip2 = rho.vip ** 2
    absmu = measure.abs()
    ups = float(upsilon(MomentKernel(nu, a_p * z * rho.lip), n))
    sup_c = sup_ratio_constant()
    box_s, box_y = (1.0 / n, float(n)), (-5.0 * n, 5.0 * n)

    def smooth_sq(sig):
        if _panel_friendly(absmu):
            rule = _PanelRule.for_measure(absmu, box_y, math.sqrt(sig * box_s[0]), math.sqrt(sig * box_s[1]))
            return lambda s, ys: rule.smooth(sig * s, ys) ** 2
        return lambda s, ys: np.asarray(j0(absmu, sig, s, ys, quad=quad), dtype=float) ** 2

    f_2nu = _box_sup(smooth_sq(2.0 * nu), box_s, box_y, search)
    f_wide = _box_sup(smooth_sq(2.0 * nu * (1.0 + n * n)), box_s, box_y, search)
    sup_2nu, sup_wide = f_2nu["sup"], f_wide["sup"]

    c_star_nu = 2.0 / math.sqrt(math.pi * nu)
    c_star_wide = 3.0 * math.sqrt(math.pi) * (1.0 + math.sqrt(2.0)) * (1.0 + n * n) / (2.0 * math.sqrt(nu))
    c1 = vip2 * (math.sqrt(2.0) - 1.0) / math.sqrt(math.pi * nu) \
        + 2.0 * (c_star_nu * sup_2nu + c_star_wide * sup_wide)
    if conservative:
        cp = sup_c * math.sqrt(n) / math.sqrt(nu) + 1.0 / n
        cpp = cp * math.exp(12.0 * n ** 3 / nu)
    else:
        cp = sup_c * math.sqrt(n) / math.sqrt(2.0 * nu) + 1.0 / n
        cpp = cp * math.exp(6.0 * n ** 3 / nu)
    c3 = vip2 / nu + (2.0 / nu + math.sqrt(math.pi * n) / math.sqrt(nu) * (cp + 2.0 * cpp)) * sup_2nu
    # J0*(2s, y) with diffusivity nu equals (|mu| * G_{2nu}(s, .))(y)
    c5 = vip2 / math.sqrt(math.pi * nu) + 2.0 * math.sqrt(math.pi / nu) * sup_2nu
    infl = search.inflation
    C = _with_246(c1 * infl, c3 * infl, c5 * infl, math.sqrt(math.pi * n) / math.sqrt(4.0 * nu))

    prov = {"sup_search": {"smoothing_2nu_sq": f_2nu, "smoothing_wide_sq": f_wide},
            "inflation": infl, "sup_ratio_constant": sup_c, "C_prime": cp, "C_double_prime": cpp,
            "conservative": bool(conservative), "window": {"t": [1.0 / n, float(n)], "x": [-float(n), float(n)]}}

    C_star = None
    if star:
        C_star, star_prov = _star_constants(measure, nu, n, vip2, search, star_exponent, sup_c, quad)
        prov["star"] = star_prov
    for v in C + (C_star or ()):
        if not (math.isfinite(v) and v > 0):
            raise OverflowError(f"constant is not finite and positive: {v}")
    return IncrementBoundConstants(float(n), int(p), float(nu), C, C_star, ups, float(rho.lip),
                                   float(rho.vip), z, a_p, prov)


def _star_constants(measure, nu, n, vip2, search, star_exponent, sup_c, quad):
    a, c = star_growth_bound(measure, star_exponent)
    dg = delta_g_constants(n, a, 2.0 ** a)
    k_main = k_ac(a, 1.0, nu, 2.0 * n, quad)
    k_c2 = k_ac(a, dg.c2, nu, 0.5, quad)
    k_c4 = k_ac(a, dg.c4, nu, 0.5, quad)
    box_s, box_y = (0.0, float(n)), (-float(n), float(n))
    ga = 2.0 ** a

    g_rule = _ExpPowerSmoother(ga, a, float(n))
    e_rule = _ExpPowerSmoother(1.0, a, float(n))

    def g_smooth(s, ys):
        return g_rule.smooth(0.5 * nu * s, ys)

    def e_smooth_sq(s, ys):
        return e_rule.smooth(2.0 * nu * s, ys) ** 2

    sg = _box_sup(g_smooth, box_s, box_y, search)
    se = _box_sup(e_smooth_sq, box_s, box_y, search)
    t1 = c * c * k_main / math.sqrt(2.0 * math.pi * nu) * (
        (math.sqrt(2.0) + 1.0) * a * ga * math.sqrt(n) * math.exp(dg.c1 * n ** a) * k_c2
        + (4.0 - math.sqrt(2.0)) * sg["sup"])
    t3 = c * c * k_main * (dg.c3 * math.sqrt(n) / math.sqrt(math.pi * nu) * k_c4
                           + (sup_c * math.sqrt(2.0) / (nu * math.sqrt(math.pi)) + 1.0 / nu) * sg["sup"])
    c1 = vip2 * (math.sqrt(2.0) - 1.0) / math.sqrt(math.pi * nu) + 2.0 * t1
    c3 = vip2 / nu + 2.0 * t3
    c5 = vip2 / math.sqrt(math.pi * nu) + 2.0 * c * c * math.sqrt(math.pi / nu) * se["sup"]
    infl = search.inflation
    C = _with_246(c1 * infl, c3 * infl, c5 * infl, math.sqrt(n) / math.sqrt(math.pi * nu))
    prov = {"growth_exponent": a, "growth_constant": c, "delta_g": asdict(dg),
            "K_main": k_main, "K_c2": k_c2, "K_c4": k_c4,
            "sup_search": {"g_smoothing": sg, "exp_smoothing_sq": se},
            "window": {"t": [0.0, float(n)], "x": [-float(n), float(n)]}}
    return C, prov


def increment_bound(consts: IncrementBoundConstants, p: int, t: float, x: float,
                    t_prime: float, x_prime: float, star: bool = False) -> float:
    """``C_{n,p} (|t - t'|^(1/4) + |x - x'|^(1/2))``, an upper bound for the
    p-th moment norm of ``I(t,x) - I(t',x')``."""
    if int(p) != consts.p:
        raise ValueError(f"constants were computed for p={consts.p}, not p={p}")
    n = consts.n
    t_lo = 0.0 if star else 1.0 / n
    for tt, xx in ((t, x), (t_prime, x_prime)):
        if not (t_lo <= tt <= n and -n <= xx <= n):
            raise ValueError(f"point ({tt}, {xx}) lies outside the window [{t_lo}, {n}] x [{-n}, {n}]")
    return consts.prefactor(star) * (abs(t - t_prime) ** 0.25 + abs(x - x_prime) ** 0.5)
