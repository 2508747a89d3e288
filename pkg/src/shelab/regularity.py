"""Hölder exponent estimation from simulated ensembles.

Exponents are read off the scaling of moment increments: if
``E|X(t+h) - X(t)|^p ~ h^(p beta)`` then beta is the slope of
``log E|Delta|^p`` against ``log h`` divided by p.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gaussian_kernel import _nu
from .initial_data import InitialMeasure, classify
from .quadrature import DEFAULT_QUAD, integrate_pieces
from .simulator import FieldEnsemble, GridSpec
from .rng import NoiseSeed

__all__ = ["AnisotropicMetric", "LagTable", "HolderEstimate", "moment_increments",
           "fit_exponent", "near_zero_exponent", "weak_limit_error", "synthetic_ensemble",
           "dyadic_lags"]


@dataclass(frozen=True)
class AnisotropicMetric:
    """``tau(p, q) = sum_i |p_i - q_i|^alpha_i`` with each alpha_i in (0, 1]."""

    alphas: tuple

    def __post_init__(self):
        al = tuple(float(a) for a in self.alphas)
        if not al or any(not (0.0 < a <= 1.0) for a in al):
            raise ValueError("every exponent must lie in (0, 1]")
        object.__setattr__(self, "alphas", al)

    def distance(self, p: Sequence[float], q: Sequence[float]) -> float:
        if len(p) != len(self.alphas) or len(q) != len(self.alphas):
            raise ValueError("dimension mismatch")
        return float(sum(abs(a - b) ** al for a, b, al in zip(p, q, self.alphas)))


@dataclass
class LagTable:
    lags: np.ndarray
    moments: np.ndarray
    std_errors: np.ndarray
    p: int
    direction: str
    window: tuple
    n_anchors: np.ndarray
    field: str = "I"

    def to_csv(self) -> str:
        lines = ["lag,moment,stderr"]
        lines += [f"{l:.17g},{m:.17g},{s:.17g}" for l, m, s in zip(self.lags, self.moments, self.std_errors)]
        return "\n".join(lines) + "\n"


@dataclass
class HolderEstimate:
    exponent: float
    std_error: float
    p: int
    direction: str
    window: tuple
    lags: list
    r_squared: float
    excluded_lags: list = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _check_p(p):
    if int(p) != p or p < 2 or int(p) % 2:
        raise ValueError("p must be an even integer >= 2")
    return int(p)


def dyadic_lags(step: float, span: float) -> list[float]:
    """``step * 2^k`` for k = 0, 1, ... while the lag is at most span/4."""
    out = []
    k = 0
    while step * 2 ** k <= span / 4.0 * (1 + 1e-12):
        out.append(step * 2 ** k)
        k += 1
    return out


def _lag_steps(lags, step, what):
    ks = []
    for l in lags:
        k = int(round(l / step))
        if k < 1 or abs(k * step - l) > 1e-8 * max(l, step):
            raise ValueError(f"{what} lag {l} is not a positive multiple of {step}")
        ks.append(k)
    if any(b <= a for a, b in zip(ks[:-1], ks[1:])):
        raise ValueError("lags must be strictly increasing")
    return ks


def _neff(a: np.ndarray, axis: int) -> float:
    """Effective sample size from the lag-1 autocorrelation along ``axis``."""
    n = a.size
    if a.shape[axis] < 3:
        return float(n)
    c = a - a.mean()
    num = np.sum(np.take(c, range(1, a.shape[axis]), axis=axis) *
                 np.take(c, range(0, a.shape[axis] - 1), axis=axis))
    den = np.sum(c * c)
    if den <= 0:
        return float(n)
    r1 = min(max(num / den, 0.0), 0.99)
    return max(1.0, n * (1.0 - r1) / (1.0 + r1))


def _increment_stats(D: np.ndarray, axis: int):
    """Mean and standard error of |Delta|^p samples D[replica, t, x]."""
    R = D.shape[0]
    per_rep = D.reshape(R, -1).mean(axis=1)
    mean = float(per_rep.mean())
    se_rep = float(per_rep.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
    per_anchor = D.mean(axis=0)
    n = per_anchor.size
    if n > 1:
        se_anchor = float(per_anchor.std(ddof=1) / math.sqrt(_neff(per_anchor, axis)))
    else:
        se_anchor = 0.0
    return mean, max(se_rep, se_anchor)


def moment_increments(ensemble: FieldEnsemble, p: int, direction: str, window: tuple,
                      lags: Optional[Sequence[float]] = None, field: str = "I") -> LagTable:
    """Estimate ``E|X(a + lag) - X(a)|^p`` over anchors a in the window.

    ``window = (t_lo, t_hi, x_lo, x_hi)``; both ends of every increment lie
    inside it. Time lags must be multiples of dt, space lags of dx, and every
    needed time must have been saved.
    """
    p = _check_p(p)
    if direction not in ("time", "space"):
        raise ValueError("direction must be 'time' or 'space'")
    grid = ensemble.grid
    t_lo, t_hi, x_lo, x_hi = (float(v) for v in window)
    X = ensemble.field(field)
    ts = ensemble.times
    xs = ensemble.xs
    tol_t, tol_x = 1e-9 * grid.dt, 1e-9 * grid.dx
    t_sel = np.nonzero((ts >= t_lo - tol_t) & (ts <= t_hi + tol_t))[0]
    x_sel = np.nonzero((xs >= x_lo - tol_x) & (xs <= x_hi + tol_x))[0]
    if t_sel.size == 0 or x_sel.size == 0:
        raise ValueError("empty window")
    step = grid.dt if direction == "time" else grid.dx
    span = (t_hi - t_lo) if direction == "time" else (x_hi - x_lo)
    if lags is None:
        lags = dyadic_lags(step, span)
    lags = [float(l) for l in lags]
    ks = _lag_steps(lags, step, direction)

    moments, ses, counts = [], [], []
    if direction == "time":
        pos = {int(m): i for i, m in enumerate(ensemble.t_index)}
        Xw = X[:, :, x_sel]
        for k, l in zip(ks, lags):
            a_idx, b_idx = [], []
            for i in t_sel:
                m = int(ensemble.t_index[i])
                j = pos.get(m + k)
                if j is not None and ts[j] <= t_hi + tol_t:
                    a_idx.append(i)
                    b_idx.append(j)
            if not a_idx:
                raise ValueError(f"time lag {l} exceeds the window or the saved times")
            D = np.abs(Xw[:, b_idx, :] - Xw[:, a_idx, :]) ** p
            mval, se = _increment_stats(D, axis=0)
            moments.append(mval)
            ses.append(se)
            counts.append(len(a_idx) * x_sel.size)
    else:
        xi = ensemble.x_index
        if np.any(np.diff(xi) != 1):
            raise ValueError("space increments need contiguous saved nodes")
        Xw = X[:, t_sel, :]
        for k, l in zip(ks, lags):
            a = x_sel[x_sel + k <= x_sel[-1]]
            if a.size == 0:
                raise ValueError(f"space lag {l} exceeds the window")
            D = np.abs(Xw[:, :, a + k] - Xw[:, :, a]) ** p
            mval, se = _increment_stats(D, axis=1)
            moments.append(mval)
            ses.append(se)
            counts.append(a.size * t_sel.size)
    return LagTable(np.array(lags), np.array(moments), np.array(ses), p, direction,
                    (t_lo, t_hi, x_lo, x_hi), np.array(counts), field)


def fit_exponent(table: LagTable, min_lags: int = 4, min_span: float = 10.0) -> HolderEstimate:
    """Weighted least-squares slope of log moment against log lag, over p.

    Weights are the inverse variances of log moments (``(se/m)^2``) when all
    standard errors are positive, otherwise uniform. The reported standard
    error is the larger of the known-variance and the residual-based values.
    """
    lags = np.asarray(table.lags, dtype=float)
    m = np.asarray(table.moments, dtype=float)
    se = np.asarray(table.std_errors, dtype=float)
    good = np.isfinite(m) & (m > 0)
    excluded = [float(v) for v in lags[~good]]
    lags, m, se = lags[good], m[good], se[good]
    if lags.size < min_lags:
        raise ValueError(f"need at least {min_lags} usable lags, have {lags.size}")
    if lags[-1] / lags[0] < min_span * (1 - 1e-12):
        raise ValueError("lags must span at least one decade")
    x = np.log(lags)
    y = np.log(m)
    known = bool(np.all(se > 0))
    w = (m / se) ** 2 if known else np.ones_like(y)
    W = w.sum()
    xb, yb = (w * x).sum() / W, (w * y).sum() / W
    sxx = (w * (x - xb) ** 2).sum()
    slope = (w * (x - xb) * (y - yb)).sum() / sxx
    resid = y - (yb + slope * (x - xb))
    rss = (w * resid ** 2).sum()
    tss = (w * (y - yb) ** 2).sum()
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    se_resid = math.sqrt(rss / (x.size - 2) / sxx) if x.size > 2 else 0.0
    se_model = math.sqrt(1.0 / sxx) if known else 0.0
    p = table.p
    return HolderEstimate(float(slope / p), float(max(se_resid, se_model) / p), p, table.direction,
                          tuple(table.window), [float(v) for v in lags], float(r2), excluded)


def near_zero_exponent(ensemble: FieldEnsemble, p: int, direction: str,
                       lags: Sequence[float], x_s: float = 0.0, t0: float = 0.0,
                       field: str = "u") -> HolderEstimate:
    """Exponent of increments anchored at the point (t0, x_s).

    Time: ``E|X(t0 + lag, x_s) - X(t0, x_s)|^p``. Space: the average of
    ``E|X(t0, x_s +- lag) - X(t0, x_s)|^p``. With t0 = 0 the t = 0 slice
    must be the exact initial data (not the warm-start surrogate); the
    measure must carry a Hölder-continuous density.
    """
    p = _check_p(p)
    meas = ensemble.measure
    if meas is None or classify(meas).holder_alpha is None:
        raise ValueError("needs a measure with a Hölder continuous density")
    if t0 == 0.0 and ensemble.info.get("t0_slice") != "initial_data":
        raise ValueError("the t = 0 slice is a surrogate; anchor at t0 = dt instead")
    grid = ensemble.grid
    X = ensemble.field(field)
    pos_t = {int(m): i for i, m in enumerate(ensemble.t_index)}
    pos_x = {int(j): i for i, j in enumerate(ensemble.x_index)}
    m0 = grid.time_index(t0)
    j0_ = grid.node_index(x_s)
    if m0 not in pos_t or j0_ not in pos_x:
        raise ValueError("anchor point not saved")
    lags = [float(l) for l in lags]
    step = grid.dt if direction == "time" else grid.dx
    ks = _lag_steps(lags, step, direction)
    moments, ses = [], []
    for k in ks:
        if direction == "time":
            if m0 + k not in pos_t:
                raise ValueError(f"time {t0 + k * grid.dt} not saved")
            D = np.abs(X[:, pos_t[m0 + k], pos_x[j0_]] - X[:, pos_t[m0], pos_x[j0_]]) ** p
        elif direction == "space":
            if j0_ + k not in pos_x or j0_ - k not in pos_x:
                raise ValueError("space lag leaves the saved window")
            a = X[:, pos_t[m0], pos_x[j0_]]
            D = 0.5 * (np.abs(X[:, pos_t[m0], pos_x[j0_ + k]] - a) ** p
                       + np.abs(X[:, pos_t[m0], pos_x[j0_ - k]] - a) ** p)
        else:
            raise ValueError("direction must be 'time' or 'space'")
        moments.append(float(D.mean()))
        ses.append(float(D.std(ddof=1) / math.sqrt(D.size)) if D.size > 1 else 0.0)
    if direction == "time":
        window = (t0, t0 + lags[-1], x_s, x_s)
    else:
        window = (t0, t0, x_s - lags[-1], x_s + lags[-1])
    table = LagTable(np.array(lags), np.array(moments), np.array(ses), p, direction, window,
                     np.ones(len(lags), dtype=int), field)
    return fit_exponent(table)


def _measure_integral(measure: InitialMeasure, phi: Callable, lo: float, hi: float) -> float:
    total = sum(w * float(phi(a)) for a, w in measure.atoms)
    d = measure.density
    if d is not None:
        pts = [lo, hi] + [k for k in d.kinks() if lo < k < hi]
        total += integrate_pieces(lambda z: float(d.evaluate(z)) * float(phi(z)), pts, DEFAULT_QUAD)
    return total


def weak_limit_error(ensemble: FieldEnsemble, phi: Callable, t_list: Sequence[float],
                     measure: Optional[InitialMeasure] = None,
                     max_rel_stderr: float = 0.5) -> list[tuple[float, float, float]]:
    """Estimate ``E[(sum_j u(t,x_j) phi(x_j) dx - int phi dmu)^2]`` for each t.

    Returns a list of (t, mean squared error, standard error). The saved
    spatial window must cover the support of ``phi`` (checked at its edges).
    Raises ValueError if the relative standard error exceeds
    ``max_rel_stderr`` (ensemble too small).
    """
    measure = measure or ensemble.measure
    if measure is None:
        raise ValueError("measure required")
    xs = ensemble.xs
    w = np.asarray(phi(xs), dtype=float)
    scale = float(np.max(np.abs(w))) or 1.0
    if abs(w[0]) > 1e-10 * scale or abs(w[-1]) > 1e-10 * scale:
        raise ValueError("test function not negligible at the edges of the saved window")
    target = _measure_integral(measure, phi, float(xs[0]), float(xs[-1]))
    grid = ensemble.grid
    pos = {int(m): i for i, m in enumerate(ensemble.t_index)}
    out = []
    for t in t_list:
        m = grid.time_index(float(t))
        if m not in pos:
            raise ValueError(f"time {t} not saved")
        s = ensemble.values[:, pos[m], :] @ w * grid.dx - target
        sq = s * s
        mean = float(sq.mean())
        se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else 0.0
        if mean > 0 and se / mean > max_rel_stderr:
            raise ValueError(f"ensemble too small at t={t}: relative stderr {se / mean:.3g}")
        out.append((float(t), mean, se))
    return out


def synthetic_ensemble(beta: float, direction: str, replicas: int, n_t: int = 65, n_x: int = 65,
                       dt: float = 1.0 / 64, dx: float = 1.0 / 64, seed: int = 0) -> FieldEnsemble:
    """Gaussian field whose increments along ``direction`` satisfy
    ``E|Delta|^2 = lag^(2 beta)`` exactly (fractional Brownian motion,
    independent copies along the other axis). For testing the estimator."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    n = n_t if direction == "time" else n_x
    step = dt if direction == "time" else dx
    s = step * np.arange(1, n)
    if beta == 1.0:
        chol = s[:, None]
    else:
        h2 = 2 * beta
        cov = 0.5 * (s[:, None] ** h2 + s[None, :] ** h2 - np.abs(s[:, None] - s[None, :]) ** h2)
        chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(seed)
    other = n_x if direction == "time" else n_t
    z = rng.standard_normal((replicas, other, chol.shape[1]))
    path = np.concatenate([np.zeros((replicas, other, 1)), z @ chol.T], axis=2)
    values = path if direction == "space" else np.transpose(path, (0, 2, 1))
    L = 6.0 + dx * (n_x - 1)
    nx = int(round(2 * L / dx))
    grid = GridSpec(L, nx, dt * (n_t - 1), n_t - 1, nu=min(1.0, 0.5 * dx * dx / dt),
                    window_half_width=0.0)
    j_lo = int(round((0.0 + L) / dx))
    return FieldEnsemble(grid, values, np.zeros(values.shape[1:]), NoiseSeed(seed),
                         np.arange(n_t), np.arange(j_lo, j_lo + n_x), np.arange(replicas))
