"""Second-moment formulas, moment kernels and p-th moment upper bounds.

For quasi-linear noise coefficients, ``|rho(u)|^2 = lam^2 (varrho^2 + u^2)``,
the second moment of the solution is

    E u(t,x)^2 = J0(t,x)^2 + (J0^2 * K)(t,x) + varrho^2 H(t),

where ``*`` is the space-time convolution, ``K`` the resolvent kernel and
``H = 1 * K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian_kernel import gauss, std_normal_cdf
from .initial_data import InitialMeasure, classify, j0, power_law_j0
from .quadrature import (DEFAULT_QUAD, QuadratureSpec, integrate_interval,
                         integrate_pieces, integrate_sqrt_endpoints)

__all__ = ["MomentKernel", "RhoSpec", "kernel_K", "kernel_K_over_lam2", "kernel_H", "upsilon",
           "bdg_constants", "exact_second_moment", "j0sq_star_K", "one_star_K",
           "pmoment_upper_bound", "delta_I_second_moment", "power_law_scaling"]


@dataclass(frozen=True)
class MomentKernel:
    nu: float
    lam: float

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError("nu must be positive")
        if not math.isfinite(self.lam):
            raise ValueError("lam must be finite")


def _exp_phi(mk: MomentKernel, t):
    """``exp(lam^4 t/(4 nu)) Phi(lam^2 sqrt(t/(2 nu)))``."""
    l2 = mk.lam ** 2
    t = np.asarray(t, dtype=float)
    return np.exp(l2 * l2 * t / (4.0 * mk.nu)) * std_normal_cdf(l2 * np.sqrt(t / (2.0 * mk.nu)))


def _pos_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ValueError("need finite t > 0")
    return t


def _ret(v):
    return float(v) if np.ndim(v) == 0 else v


def kernel_K(mk: MomentKernel, t, x):
    """Resolvent kernel ``K(t,x)``:

    ``G_{nu/2}(t,x) (lam^2/sqrt(4 pi nu t) + lam^4/(2 nu) e^{lam^4 t/(4nu)} Phi(lam^2 sqrt(t/(2nu))))``.
    """
    t = _pos_t(t)
    l2 = mk.lam ** 2
    g = gauss(0.5 * mk.nu * t, np.asarray(x, dtype=float))
    return _ret(g * (l2 / np.sqrt(4.0 * math.pi * mk.nu * t) + l2 * l2 / (2.0 * mk.nu) * _exp_phi(mk, t)))


def kernel_K_over_lam2(mk: MomentKernel, t, x):
    """``K(t,x) / lam^2``, finite (and equal to ``G_nu^2``) at lam = 0.

    This is the second moment of the solution started from a unit Dirac mass.
    """
    t = _pos_t(t)
    l2 = mk.lam ** 2
    g = gauss(0.5 * mk.nu * t, np.asarray(x, dtype=float))
    return _ret(g * (1.0 / np.sqrt(4.0 * math.pi * mk.nu * t) + l2 / (2.0 * mk.nu) * _exp_phi(mk, t)))


def kernel_H(mk: MomentKernel, t):
    """``H(t) = 2 e^{lam^4 t/(4nu)} Phi(lam^2 sqrt(t/(2nu))) - 1``, with H(0) = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("need t >= 0")
    return _ret(2.0 * _exp_phi(mk, t) - 1.0)


def upsilon(mk: MomentKernel, t):
    """Time factor with ``K(t,x) = upsilon(t) G_nu(t,x)^2``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("need t >= 0")
    l2 = mk.lam ** 2
    return _ret(l2 + l2 * l2 * np.sqrt(math.pi * t / mk.nu) * _exp_phi(mk, t))


def bdg_constants(p: int, vip: float) -> tuple[float, float]:
    """Return ``(z_p bound, a_{p,vip})`` for an even moment order p."""
    if int(p) != p or p < 2 or int(p) % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p!r}")
    p = int(p)
    if p == 2:
        return 1.0, 1.0
    z = 2.0 * math.sqrt(p)
    a = math.sqrt(2.0) if vip == 0 else 2.0 ** ((p - 1.0) / p)
    return z, a


@dataclass(frozen=True)
class RhoSpec:
    """Description of the noise coefficient ``rho``.

    ``lip`` and ``vip`` are the constants of the linear growth bound
    ``|rho(u)|^2 <= lip^2 (vip^2 + u^2)``; ``LIP`` is the global Lipschitz
    constant when known. Modes:

    * ``quasi_linear``: |rho(u)|^2 = lam^2 (varrho^2 + u^2); simulated as
      ``lam*u`` when varrho = 0 and ``lam*sqrt(varrho^2+u^2)`` otherwise.
    * ``additive``: rho = sigma constant.
    * ``zero``: rho = 0.
    * ``lipschitz_bound``: only the growth constants (no concrete function).
    * ``custom``: a vectorised callable with declared constants.
    """

    mode: str
    lip: float
    vip: float
    lam: float = 0.0
    varrho: float = 0.0
    sigma: float = 0.0
    LIP: Optional[float] = None
    func: Optional[Callable] = None

    def __post_init__(self):
        if self.mode not in ("quasi_linear", "additive", "zero", "lipschitz_bound", "custom"):
            raise ValueError(f"unknown rho mode {self.mode!r}")
        if not (math.isfinite(self.lip) and self.lip >= 0 and math.isfinite(self.vip) and self.vip >= 0):
            raise ValueError("lip and vip must be finite and nonnegative")
        if self.mode == "lipschitz_bound" and self.lip <= 0:
            raise ValueError("lipschitz_bound needs lip > 0")
        if self.mode == "custom" and not callable(self.func):
            raise ValueError("custom rho needs a callable")

    @classmethod
    def quasi_linear(cls, lam: float, varrho: float = 0.0) -> "RhoSpec":
        return cls("quasi_linear", abs(lam), abs(varrho), lam=float(lam), varrho=abs(float(varrho)),
                   LIP=abs(lam))

    @classmethod
    def pam(cls, lam: float = 1.0) -> "RhoSpec":
        return cls.quasi_linear(lam, 0.0)

    @classmethod
    def additive(cls, sigma: float) -> "RhoSpec":
        return cls("additive", abs(sigma), 1.0 if sigma else 0.0, sigma=float(sigma), LIP=0.0)

    @classmethod
    def zero(cls) -> "RhoSpec":
        return cls("zero", 0.0, 0.0, LIP=0.0)

    @classmethod
    def lipschitz_bound(cls, lip: float, vip: float = 0.0, LIP: Optional[float] = None) -> "RhoSpec":
        return cls("lipschitz_bound", float(lip), float(vip), LIP=LIP)

    @classmethod
    def custom(cls, func: Callable, lip: float, vip: float, LIP: Optional[float] = None) -> "RhoSpec":
        return cls("custom", float(lip), float(vip), LIP=LIP, func=func)

    @property
    def is_quasi_linear(self) -> bool:
        return self.mode in ("quasi_linear", "zero")

    def moment_kernel(self, nu: float) -> MomentKernel:
        return MomentKernel(nu, self.lam if self.mode == "quasi_linear" else 0.0)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.mode == "quasi_linear":
            if self.varrho == 0.0:
                return self.lam * u
            return self.lam * np.sqrt(self.varrho ** 2 + u * u)
        if self.mode == "additive":
            return np.full(u.shape, self.sigma)
        if self.mode == "zero":
            return np.zeros(u.shape)
        if self.mode == "custom":
            return np.asarray(self.func(u), dtype=float)
        raise ValueError("lipschitz_bound carries no concrete function")

    def to_json(self) -> dict:
        if self.mode == "custom":
            raise ValueError("custom rho cannot be serialised")
        if self.mode == "quasi_linear":
            return {"mode": "quasi_linear", "lam": self.lam, "varrho": self.varrho}
        if self.mode == "additive":
            return {"mode": "additive", "sigma": self.sigma}
        if self.mode == "zero":
            return {"mode": "zero"}
        return {"mode": "lipschitz_bound", "lip": self.lip, "vip": self.vip, "LIP": self.LIP}

    @classmethod
    def from_json(cls, doc) -> "RhoSpec":
        mode = doc.get("mode")
        if mode == "quasi_linear":
            return cls.quasi_linear(float(doc["lam"]), float(doc.get("varrho", 0.0)))
        if mode == "pam":
            return cls.pam(float(doc.get("lam", 1.0)))
        if mode == "additive":
            return cls.additive(float(doc["sigma"]))
        if mode == "zero":
            return cls.zero()
        if mode == "lipschitz_bound":
            LIP = doc.get("LIP")
            return cls.lipschitz_bound(float(doc["lip"]), float(doc.get("vip", 0.0)),
                                       None if LIP is None else float(LIP))
        raise ValueError(f"unknown rho mode {mode!r}")


# ---------------------------------------------------------------------------
# space-time convolutions with K


def one_star_K(mk: MomentKernel, t: float, x: float = 0.0,
               quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """``int_0^t int_R K(s, y) dy ds`` by nested quadrature (should equal H(t))."""
    t = float(_pos_t(t))
    inner_q = quad.scaled(1e-2)

    def inner(s):
        if s <= 0:
            return 0.0
        sd = math.sqrt(0.5 * mk.nu * s)
        R = quad.gaussian_tail_sigmas * sd
        f = lambda y: float(kernel_K(mk, s, x - y))
        return integrate_interval(f, x - R, x + R, inner_q, points=[x])

    # K(s, .) integrates to upsilon(s)/sqrt(4 pi nu s): inverse square root at s = 0
    return integrate_sqrt_endpoints(inner, 0.0, t, quad, ends="lower")


def _atoms_pair_terms(measure: InitialMeasure, nu: float):
    atoms = measure.atoms
    out = []
    for i, (xi, wi) in enumerate(atoms):
        for j, (xj, wj) in enumerate(atoms):
            out.append((wi * wj, xi - xj, 0.5 * (xi + xj)))
    return out


def j0sq_star_K(measure: InitialMeasure, mk: MomentKernel, t: float, x: float,
                quad: QuadratureSpec = DEFAULT_QUAD, method: str = "auto") -> float:
    """Space-time convolution ``int_0^t int_R J0(s,y)^2 K(t-s, x-y) dy ds``.

    The outer time integral uses s = t sin^2(theta), which removes the
    inverse-square-root singularities at both ends. For a pure atom measure
    and ``method="auto"`` the inner space integral is done in closed form via
    the Gaussian product identity; otherwise it is an adaptive quadrature
    truncated at ``gaussian_tail_sigmas`` widths of the kernel around x.
    """
    t = float(_pos_t(t))
    nu = mk.nu
    if mk.lam == 0.0:
        return 0.0
    if method == "auto" and measure.is_constant_density:
        return measure.density.scale ** 2 * float(kernel_H(mk, t))

    if method == "auto" and measure.density is None:
        terms = _atoms_pair_terms(measure, nu)

        def outer(s):
            r = t - s
            if s <= 0 or r <= 0:
                return 0.0
            acc = 0.0
            for w, d, m in terms:
                acc += w * float(gauss(2.0 * nu * s, d)) * float(gauss(0.5 * nu * t, x - m))
            return float(upsilon(mk, r)) / math.sqrt(4.0 * math.pi * nu * r) * acc

        return integrate_sqrt_endpoints(outer, 0.0, t, quad, ends="both")

    dens = measure.density
    inner_q = quad.scaled(1e-2)
    kinks = [] if dens is None else dens.kinks()
    atom_locs = [a for a, _ in measure.atoms]
    a_pl = float(dens.params["a"]) if dens is not None and dens.kind == "power_law" else None

    def j0_fast(s, y):
        if a_pl is not None and not measure.atoms and method == "auto":
            return dens.scale * float(power_law_j0(a_pl, nu, s, y))
        return float(j0(measure, nu, s, y, quad=inner_q, method=method if method != "nested" else "auto"))

    def outer(s):
        r = t - s
        if s <= 0 or r <= 0:
            return 0.0
        sd_r = math.sqrt(0.5 * nu * r)
        R = quad.gaussian_tail_sigmas * sd_r
        lo, hi = x - R, x + R
        sd_s = math.sqrt(nu * s)
        for a in atom_locs:
            lo = min(lo, max(a - quad.gaussian_tail_sigmas * sd_s, x - 3 * R - abs(x - a)))
            hi = max(hi, min(a + quad.gaussian_tail_sigmas * sd_s, x + 3 * R + abs(x - a)))
        # J0(s, .)^2 has spikes of width sd_s at the atoms; without break points
        # on that scale Gauss-Kronrod nodes miss them entirely for small s
        near = [a + k * sd_s for a in atom_locs for k in (-4.0, -1.0, 1.0, 4.0)]
        pts = [p for p in kinks + atom_locs + near + [x] if lo < p < hi]
        f = lambda y: j0_fast(s, y) ** 2 * float(gauss(0.5 * nu * r, x - y))
        val = integrate_pieces(f, [lo, hi] + pts, inner_q)
        return float(upsilon(mk, r)) / math.sqrt(4.0 * math.pi * nu * r) * val

    return integrate_sqrt_endpoints(outer, 0.0, t, quad, ends="both")


def exact_second_moment(measure: InitialMeasure, mk: MomentKernel, vv: float, t: float, x: float,
                        quad: QuadratureSpec = DEFAULT_QUAD, method: str = "auto") -> float:
    """``E u(t,x)^2`` for ``|rho(u)|^2 = lam^2 (vv^2 + u^2)``.

    A single atom ``w delta_{x0}`` uses ``w^2 K(t,x-x0)/lam^2 + vv^2 H(t)``
    and a constant density c uses ``c^2 (1 + H(t)) + vv^2 H(t)``. Everything
    else (and ``method="nested"``) goes through :func:`j0sq_star_K`.
    """
    if not classify(measure).in_MH:
        raise ValueError("measure is not Gaussian integrable")
    t = float(_pos_t(t))
    h = float(kernel_H(mk, t))
    if method == "auto":
        if measure.density is None and len(measure.atoms) == 1:
            x0, w = measure.atoms[0]
            return w * w * float(kernel_K_over_lam2(mk, t, x - x0)) + vv * vv * h
        if measure.is_constant_density:
            c = measure.density.scale
            return c * c * (1.0 + h) + vv * vv * h
    j = float(j0(measure, mk.nu, t, x))
    m = "quadrature" if method == "nested" else method
    return j * j + j0sq_star_K(measure, mk, t, x, quad, method=m) + vv * vv * h


def pmoment_upper_bound(measure: InitialMeasure, rho: RhoSpec, p: int, t: float, x: float,
                        nu: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Upper bound on ``||u(t,x)||_p^2`` (not an estimate of it).

    p = 2: J0^2 + J0^2 * K_lip + vip^2 H_lip with kernels at lam = lip.
    p > 2: 2 J0^2 + 2 J0^2 * K_hat + vip^2 H_hat at lam = a_{p,vip} z_p lip.
    """
    z, a = bdg_constants(p, rho.vip)
    t = float(_pos_t(t))
    if p == 2:
        mk = MomentKernel(nu, rho.lip)
        return exact_second_moment(measure, mk, rho.vip, t, x, quad)
    mk = MomentKernel(nu, a * z * rho.lip)
    h = float(kernel_H(mk, t))
    j = float(j0(measure, nu, t, x))
    if measure.density is None and len(measure.atoms) == 1:
        x0, w = measure.atoms[0]
        conv = w * w * (float(kernel_K_over_lam2(mk, t, x - x0)) - float(gauss(nu * t, x - x0)) ** 2)
    else:
        conv = j0sq_star_K(measure, mk, t, x, quad)
    return 2.0 * j * j + 2.0 * conv + rho.vip ** 2 * h


def delta_I_second_moment(mk: MomentKernel, t, x):
    """``E I(t,x)^2`` for a unit Dirac mass at the origin:
    ``lam^2/(2nu) e^{lam^4 t/(4nu)} Phi(lam^2 sqrt(t/(2nu))) G_{nu/2}(t,x)``."""
    t = _pos_t(t)
    if mk.lam == 0:
        raise ValueError("need lam != 0")
    l2 = mk.lam ** 2
    return _ret(l2 / (2.0 * mk.nu) * _exp_phi(mk, t) * gauss(0.5 * mk.nu * t, np.asarray(x, dtype=float)))


def power_law_scaling(a: float, mk: MomentKernel, t_grid: Sequence[float],
                      quad: QuadratureSpec = DEFAULT_QUAD, x: float = 0.0) -> tuple[float, list]:
    """Log-log slope of ``||I(t,x)||_2`` for ``mu = |x|^-a dx``.

    ``||I(t,x)||_2^2 = (J0^2 * K)(t,x)`` is computed by nested quadrature at
    each grid time and the slope of ``log sqrt(value)`` against ``log t`` is
    fitted by least squares. Returns ``(slope, values)`` where values are the
    squared norms.
    """
    if not (0.0 < a < 1.0):
        raise ValueError("need 0 < a < 1")
    ts = np.asarray(sorted(float(v) for v in t_grid))
    if len(ts) < 3 or np.any(ts <= 0):
        raise ValueError("need at least three positive times")
    if math.log10(ts[-1] / ts[0]) < 1.5:
        raise ValueError("t_grid must span at least 1.5 decades")
    from .initial_data import DensitySpec
    mu = InitialMeasure.from_density(DensitySpec.power_law(a))
    vals = [j0sq_star_K(mu, mk, float(tv), x, quad) for tv in ts]
    if min(vals) <= 0:
        raise ArithmeticError("non-positive moment value")
    slope = float(np.polyfit(np.log(ts), 0.5 * np.log(vals), 1)[0])
    return slope, vals
