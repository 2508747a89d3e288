"""Initial measures (signed atoms plus an optional density) and the
homogeneous solution ``J0(t, x) = (mu * G_nu(t, .))(x)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .gaussian_kernel import _nu, gauss, gamma_fn
from .quadrature import (DEFAULT_QUAD, QuadratureError, QuadratureSpec,
                         integrate_interval, integrate_pieces, log_peak_window)

__all__ = ["DensitySpec", "InitialMeasure", "GrowthClass", "classify", "j0",
           "power_law_j0_origin", "power_law_j0", "read_density_csv",
           "measure_from_json", "measure_to_json", "log_exp_power_convolution"]

DENSITY_KINDS = ("constant", "power_law", "exponential_growth", "holder_test", "tabulated")


@dataclass(frozen=True)
class DensitySpec:
    """A density ``f`` of one of the supported shapes.

    Every kind carries a multiplicative ``scale`` (possibly negative):

    * ``constant``: f = scale
    * ``power_law``: f = scale * |x|^(-a), 0 < a <= 1
    * ``exponential_growth``: f = scale * c1 * exp(c2 |x|^a), 1 <= a < 2
    * ``holder_test``: f = scale * min(|x|^alpha, cap), 0 < alpha <= 1
    * ``tabulated``: linear interpolation of (xs, fs), zero outside the table
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        p = dict(self.params)
        p.setdefault("scale", 1.0)
        if not math.isfinite(float(p["scale"])):
            raise ValueError("scale must be finite")
        k = self.kind
        if k == "constant":
            pass
        elif k == "power_law":
            a = float(p["a"])
            if not (0.0 < a <= 1.0):
                raise ValueError(f"power_law exponent must lie in (0, 1], got {a}")
        elif k == "exponential_growth":
            a, c1, c2 = float(p["a"]), float(p["c1"]), float(p["c2"])
            if a >= 2.0:
                raise ValueError("exponential_growth with a >= 2 is not locally Gaussian integrable")
            if not (1.0 <= a):
                raise ValueError(f"exponential_growth exponent must lie in [1, 2), got {a}")
            if not (c1 > 0 and c2 > 0):
                raise ValueError("exponential_growth needs c1, c2 > 0")
        elif k == "holder_test":
            al, cap = float(p["alpha"]), float(p["cap"])
            if not (0.0 < al <= 1.0):
                raise ValueError(f"holder_test alpha must lie in (0, 1], got {al}")
            if not cap > 0:
                raise ValueError("holder_test cap must be positive")
        elif k == "tabulated":
            xs = np.asarray(p["xs"], dtype=float)
            fs = np.asarray(p["fs"], dtype=float)
            if xs.ndim != 1 or xs.shape != fs.shape or len(xs) < 2:
                raise ValueError("tabulated density needs matching 1-D xs, fs with >= 2 samples")
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(fs))):
                raise ValueError("tabulated density samples must be finite")
            if np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated xs must be strictly increasing")
            p["xs"] = tuple(float(v) for v in xs)
            p["fs"] = tuple(float(v) for v in fs)
        object.__setattr__(self, "params", p)

    # convenience constructors
    @classmethod
    def constant(cls, c: float = 1.0) -> "DensitySpec":
        return cls("constant", {"scale": float(c)})

    @classmethod
    def power_law(cls, a: float, scale: float = 1.0) -> "DensitySpec":
        return cls("power_law", {"a": float(a), "scale": float(scale)})

    @classmethod
    def exponential_growth(cls, c1: float, c2: float, a: float, scale: float = 1.0) -> "DensitySpec":
        return cls("exponential_growth", {"c1": float(c1), "c2": float(c2), "a": float(a),
                                          "scale": float(scale)})

    @classmethod
    def holder_test(cls, alpha: float, cap: float, scale: float = 1.0) -> "DensitySpec":
        return cls("holder_test", {"alpha": float(alpha), "cap": float(cap), "scale": float(scale)})

    @classmethod
    def tabulated(cls, xs: Sequence[float], fs: Sequence[float]) -> "DensitySpec":
        return cls("tabulated", {"xs": xs, "fs": fs})

    @property
    def scale(self) -> float:
        return float(self.params["scale"])

    def abs(self) -> "DensitySpec":
        p = dict(self.params)
        if self.kind == "tabulated":
            p["fs"] = tuple(abs(v) for v in p["fs"])
        else:
            p["scale"] = abs(p["scale"])
        return DensitySpec(self.kind, p)

    def evaluate(self, x):
        """Density values at ``x`` (vectorised; ``inf`` at the power-law pole)."""
        x = np.asarray(x, dtype=float)
        p = self.params
        s = float(p["scale"])
        k = self.kind
        if k == "constant":
            out = np.full(x.shape, s)
        elif k == "power_law":
            with np.errstate(divide="ignore"):
                out = s * np.abs(x) ** (-float(p["a"]))
        elif k == "exponential_growth":
            out = s * float(p["c1"]) * np.exp(float(p["c2"]) * np.abs(x) ** float(p["a"]))
        elif k == "holder_test":
            out = s * np.minimum(np.abs(x) ** float(p["alpha"]), float(p["cap"]))
        else:
            xs = np.asarray(p["xs"])
            out = np.interp(x, xs, np.asarray(p["fs"]), left=0.0, right=0.0)
        return float(out) if out.ndim == 0 else out

    def log_abs(self, x: float) -> float:
        """``log |f(x)|`` for the exponential kind (avoids overflow)."""
        p = self.params
        return (math.log(abs(self.scale) * float(p["c1"]))
                + float(p["c2"]) * abs(x) ** float(p["a"]))

    def kinks(self) -> list[float]:
        """Points where the density is not smooth."""
        p = self.params
        if self.kind in ("power_law", "exponential_growth"):
            return [0.0]
        if self.kind == "holder_test":
            r = float(p["cap"]) ** (1.0 / float(p["alpha"]))
            return [-r, 0.0, r]
        if self.kind == "tabulated":
            return list(p["xs"])
        return []

    def to_json(self) -> dict:
        p = dict(self.params)
        if self.kind == "tabulated":
            p["xs"] = list(p["xs"])
            p["fs"] = list(p["fs"])
        return {"kind": self.kind, "params": p}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "DensitySpec":
        return cls(str(doc["kind"]), dict(doc.get("params", {})))


@dataclass(frozen=True)
class InitialMeasure:
    """Signed atoms ``sum w_i delta_{x_i}`` plus an optional density."""

    atoms: tuple = ()
    density: Optional[DensitySpec] = None
    label: str = ""

    def __post_init__(self):
        atoms = tuple((float(a), float(w)) for a, w in self.atoms)
        for a, w in atoms:
            if not (math.isfinite(a) and math.isfinite(w)):
                raise ValueError("atom locations and weights must be finite")
            if w == 0.0:
                raise ValueError("atom weights must be nonzero")
        if not atoms and self.density is None:
            raise ValueError("a measure needs atoms or a density")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, x0: float = 0.0, weight: float = 1.0) -> "InitialMeasure":
        return cls(((x0, weight),), None, f"dirac({x0:g})" if weight == 1.0 else f"{weight:g}*dirac({x0:g})")

    @classmethod
    def lebesgue(cls, c: float = 1.0) -> "InitialMeasure":
        return cls((), DensitySpec.constant(c), "lebesgue" if c == 1.0 else f"constant({c:g})")

    @classmethod
    def zero(cls) -> "InitialMeasure":
        return cls((), DensitySpec.constant(0.0), "zero")

    @classmethod
    def from_density(cls, density: DensitySpec, label: str = "") -> "InitialMeasure":
        return cls((), density, label or density.kind)

    def abs(self) -> "InitialMeasure":
        """The total-variation measure |mu|."""
        return InitialMeasure(tuple((a, abs(w)) for a, w in self.atoms),
                              None if self.density is None else self.density.abs(),
                              f"|{self.label}|")

    @property
    def is_dirac_origin(self) -> bool:
        return self.density is None and self.atoms == ((0.0, 1.0),)

    @property
    def is_constant_density(self) -> bool:
        return not self.atoms and self.density is not None and self.density.kind == "constant"

    def to_json(self) -> dict:
        return {"atoms": [[a, w] for a, w in self.atoms],
                "density": None if self.density is None else self.density.to_json(),
                "label": self.label}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "InitialMeasure":
        dens = doc.get("density")
        return cls(tuple(tuple(a) for a in doc.get("atoms", [])),
                   None if dens is None else DensitySpec.from_json(dens),
                   str(doc.get("label", "")))


def measure_to_json(measure: InitialMeasure) -> str:
    return json.dumps(measure.to_json(), sort_keys=True)


def measure_from_json(text: str) -> InitialMeasure:
    return InitialMeasure.from_json(json.loads(text))


def read_density_csv(path) -> DensitySpec:
    """Read a two-column (x, f(x)) table; a non-numeric first row is a header."""
    xs, fs = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                x, f = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}: bad row {i + 1}: {row!r}")
            xs.append(x)
            fs.append(f)
    return DensitySpec.tabulated(xs, fs)


@dataclass(frozen=True)
class GrowthClass:
    in_MH: bool
    in_MH_star: bool
    bounded_density: bool
    holder_alpha: Optional[float] = None


def classify(measure: InitialMeasure) -> GrowthClass:
    """Structural membership test.

    Atoms are always Gaussian integrable. A density with growth
    ``exp(c|x|^a)``, a < 2, also is; bounded continuous densities and
    densities with growth ``exp(c|x|^a)``, a <= 1 or 1 < a < 2, admit a bound
    of the form ``c3 exp(|x|^b)`` with 1 < b < 2 and so fall in the smaller
    class used for regularity up to t = 0.
    """
    d = measure.density
    if d is None:
        return GrowthClass(True, False, False, None)
    atoms = bool(measure.atoms)
    k = d.kind
    if k == "power_law":
        # |x|^-a is locally integrable only for a < 1
        ok = float(d.params["a"]) < 1.0
        return GrowthClass(ok, False, False, None)
    if k == "exponential_growth":
        return GrowthClass(True, not atoms, False, None)
    bounded = not atoms
    alpha = None
    if k == "constant":
        alpha = 1.0
    elif k == "holder_test":
        alpha = float(d.params["alpha"])
    if atoms:
        alpha = None
    return GrowthClass(True, bounded, bounded, alpha)


# ---------------------------------------------------------------------------
# J0 evaluation


def power_law_j0_origin(a: float, nu: float, t: float) -> float:
    """``J0(t, 0)`` for ``mu(dx) = |x|^-a dx``: Gamma((1-a)/2) / (sqrt(pi) (2 nu t)^(a/2))."""
    if not (0.0 < a < 1.0):
        raise ValueError("need 0 < a < 1")
    nu = _nu(nu)
    if not t > 0:
        raise ValueError("need t > 0")
    return gamma_fn((1.0 - a) / 2.0) / (math.sqrt(math.pi) * (2.0 * nu * t) ** (a / 2.0))


def power_law_j0(a: float, nu: float, t, x):
    """``J0(t, x)`` for ``|x|^-a dx`` through Kummer's function.

    With Z standard normal, E|m + sZ|^-a = s^-a 2^(-a/2) Gamma((1-a)/2)/sqrt(pi)
    * 1F1(a/2; 1/2; -m^2/(2 s^2)).
    """
    if not (0.0 < a < 1.0):
        raise ValueError("need 0 < a < 1")
    nu = _nu(nu)
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t <= 0):
        raise ValueError("need t > 0")
    var = nu * t
    pref = var ** (-a / 2.0) * 2.0 ** (-a / 2.0) * special.gamma((1.0 - a) / 2.0) / math.sqrt(math.pi)
    out = pref * _kummer_half(a / 2.0, -np.square(x) / (2.0 * var))
    return float(out) if out.ndim == 0 else out


def _kummer_half(c: float, z):
    """``1F1(c; 1/2; z)``. scipy returns inf/nan for tiny |z| when c is small,
    so |z| < 1e-3 uses the Maclaurin series (eight terms, error below 1e-24)."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    out = special.hyp1f1(c, 0.5, np.where(small, -1.0, z))
    term = np.ones_like(z)
    series = np.ones_like(z)
    for k in range(8):
        term = term * (c + k) / (0.5 + k) * z / (k + 1)
        series = series + term
    return np.where(small, series, out)


def _density_conv_scalar(dens: DensitySpec, var: float, x: float, quad: QuadratureSpec) -> float:
    """``int f(z) N(x - z; var) dz`` for one point."""
    k = dens.kind
    p = dens.params
    s = dens.scale
    if s == 0.0:
        return 0.0
    sd = math.sqrt(var)
    R = quad.gaussian_tail_sigmas * sd
    if k == "constant":
        return s
    if k == "power_law":
        a = float(p["a"])
        if a >= 1.0:
            raise ValueError("|x|^-1 is not locally integrable")
        # z = +-r^(1/(1-a)) removes the pole: |z|^-a dz = dr / (1-a)
        q = 1.0 / (1.0 - a)
        total = 0.0
        for sign in (1.0, -1.0):
            lo_z = max(0.0, sign * x - R)
            hi_z = sign * x + R
            if hi_z <= 0:
                continue
            g = lambda r, sign=sign: q * float(gauss(var, x - sign * r ** q))
            r_lo, r_hi = lo_z ** (1.0 - a), hi_z ** (1.0 - a)
            brk = [max(sign * x, 0.0) ** (1.0 - a)]
            total += integrate_interval(g, r_lo, r_hi, quad, points=brk)
        return s * total
    if k == "holder_test" or k == "tabulated":
        lo, hi = x - R, x + R
        edges = [lo, hi] + [e for e in dens.kinks() if lo < e < hi] + [x]
        if k == "tabulated":
            xs = p["xs"]
            lo, hi = max(lo, xs[0]), min(hi, xs[-1])
            if hi <= lo:
                return 0.0
            edges = [lo, hi] + [e for e in xs if lo < e < hi] + ([x] if lo < x < hi else [])
        f = lambda z: float(dens.evaluate(z)) * float(gauss(var, x - z))
        return integrate_pieces(f, edges, quad)
    if k == "exponential_growth":
        logs = math.log(abs(s) * float(p["c1"]))
        lv = log_exp_power_convolution(float(p["c2"]), float(p["a"]), var, x, quad)
        return math.copysign(1.0, s) * math.exp(logs + lv)
    raise ValueError(k)


def log_exp_power_convolution(c: float, a: float, var: float, y: float,
                              quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``log int exp(c|z|^a) N(y - z; var) dz`` for 0 <= a < 2.

    The two half-lines z >= 0 and z <= 0 are handled separately (for large
    variances the integrand has a peak on each side). On each half-line the
    log-integrand is maximised and integrated over the region where it is
    within e^-80 of its peak. ``var = 0`` gives ``c|y|^a``.
    """
    if not 0.0 <= a < 2.0:
        raise ValueError("need 0 <= a < 2")
    if var < 0:
        raise ValueError("variance must be nonnegative")
    if var == 0.0:
        return c * abs(y) ** a if a > 0 else c
    if c == 0.0 or a == 0.0:
        return c
    halves = [_half_line_log_mass(c, a, var, y, sign, quad) for sign in (1.0, -1.0)]
    return float(np.logaddexp(*halves)) - 0.5 * math.log(2.0 * math.pi * var)


def _half_line_log_mass(c, a, var, y, sign, quad, drop=80.0):
    """``log int_0^inf exp(c r^a - (y - sign r)^2 / (2 var)) dr``."""
    sd = math.sqrt(var)
    h = lambda r: c * r ** a - (y - sign * r) ** 2 / (2.0 * var)
    # beyond R the quadratic term dominates: h decreasing and far below h(0)
    R = abs(y) + sd
    for _ in range(200):
        if h(R) < h(0.0) - drop and c * a * R ** (a - 1.0) < (R - abs(y)) / var:
            break
        R *= 2.0
    grid = np.linspace(0.0, R, 2001)
    vals = c * grid ** a - (y - sign * grid) ** 2 / (2.0 * var)
    k = int(np.argmax(vals))
    lo_b, hi_b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(lambda r: -h(r), bounds=(lo_b, hi_b), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, hi_b)})
    peak = float(res.x) if -res.fun >= vals[k] else float(grid[k])
    top = h(peak)
    step = min(sd, R / 2000.0) if peak > 0 else sd

    def walk(direction):
        r, st = peak, step
        while True:
            r += direction * st
            if r <= 0.0:
                return 0.0
            if h(r) < top - drop:
                return r
            st *= 1.3

    lo, hi = walk(-1.0), walk(1.0)
    f = lambda r: math.exp(h(r) - top)
    edges = [lo, hi] + ([peak] if lo < peak < hi else [])
    return top + math.log(integrate_pieces(f, edges, quad))


def j0(measure: InitialMeasure, nu, t, x, use_abs: bool = False,
       quad: QuadratureSpec = DEFAULT_QUAD, method: str = "auto"):
    """Homogeneous solution ``(mu * G_nu(t, .))(x)``; vectorised in ``x``.

    Atoms are summed exactly. The density part is integrated by adaptive
    quadrature over ``x +- gaussian_tail_sigmas`` standard deviations, split
    at the density's kinks. With ``method="auto"`` the constant and power-law
    densities use their closed forms; ``method="quadrature"`` forces
    numerical integration for everything but constants.
    ``use_abs=True`` evaluates ``(|mu| * G)(x)``.
    """
    nu = _nu(nu)
    if not (np.isscalar(t) or np.ndim(t) == 0):
        raise TypeError("t must be a scalar")
    t = float(t)
    if not math.isfinite(t) or t <= 0:
        raise ValueError("j0 needs t > 0")
    m = measure.abs() if use_abs else measure
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise ValueError("non-finite x")
    var = nu * t
    out = np.zeros(xa.shape)
    for loc, w in m.atoms:
        out += w * gauss(var, xa - loc)
    d = m.density
    if d is not None:
        if d.kind == "power_law" and not classify(InitialMeasure((), d)).in_MH:
            raise ValueError("power law with a = 1 is not locally integrable")
        if d.kind == "constant":
            out += d.scale
        elif d.kind == "power_law" and method == "auto":
            out += d.scale * power_law_j0(float(d.params["a"]), nu, t, xa)
        else:
            flat = out.reshape(-1)
            for i, xv in enumerate(xa.reshape(-1)):
                flat[i] += _density_conv_scalar(d, var, float(xv), quad)
    return float(out) if out.ndim == 0 else out
