"""Seeded Monte Carlo solver for the stochastic heat equation

    du = (nu/2) u_xx dt + rho(u) W(dt, dx)

on [-L, L] x [0, t_max] with the explicit scheme

    u[m+1, j] = u[m, j] + nu dt/(2 dx^2) (u[m, j+1] - 2 u[m, j] + u[m, j-1])
                + rho(u[m, j]) xi[m, j] sqrt(dt/dx),

where xi are standard normals from :mod:`shelab.rng`. Nodes sit at
``x_j = -L + j dx`` (j = 0..nx); node j stands for the cell
``[x_j - dx/2, x_j + dx/2]``. The two end nodes are clamped to the exact
homogeneous solution J0.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba as nb
import numpy as np

from .initial_data import InitialMeasure, classify, j0
from .moments import RhoSpec
from .quadrature import DEFAULT_QUAD, QuadratureSpec
from .rng import NoiseSeed, fill_row, normals_block, row_key

# TBB is often too old in containers; fall back quietly
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__all__ = ["GridSpec", "FieldEnsemble", "SimulationError", "simulate", "sample_path",
           "scheme_second_moment", "initial_slice", "write_ensemble_csv", "ensemble_metadata",
           "atomic_write", "concat_ensembles"]


class SimulationError(ArithmeticError):
    """Raised when replicas overflow; ``failures`` maps replica id to step."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


@dataclass(frozen=True)
class GridSpec:
    """Space-time grid. ``nx`` counts cells on [-L, L], so there are nx+1 nodes."""

    L: float
    nx: int
    t_max: float
    nt: int
    nu: float = 1.0
    window_half_width: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.L) and self.L > 0):
            raise ValueError("L must be positive")
        if int(self.nx) != self.nx or self.nx < 3:
            raise ValueError("nx must be an integer >= 3")
        if int(self.nt) != self.nt or self.nt < 1:
            raise ValueError("nt must be an integer >= 1")
        if not (math.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError("t_max must be positive")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError("nu must be positive")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nt", int(self.nt))
        if self.courant > 0.5 * (1.0 + 1e-12):
            raise ValueError(f"unstable grid: nu dt/dx^2 = {self.courant:.6g} > 1/2")
        need = self.window_half_width + 6.0 * math.sqrt(self.nu * self.t_max)
        if self.L < need * (1.0 - 1e-12):
            raise ValueError(f"L = {self.L} is below the truncation guard {need:.6g}")

    @classmethod
    def from_spacing(cls, L: float, dx: float, t_max: float, dt: float, nu: float = 1.0,
                     window_half_width: float = 0.0) -> "GridSpec":
        nx = int(round(2.0 * L / dx))
        nt = int(round(t_max / dt))
        if abs(nx * dx - 2 * L) > 1e-9 * L or abs(nt * dt - t_max) > 1e-9 * t_max:
            raise ValueError("dx and dt must divide 2L and t_max")
        return cls(L, nx, t_max, nt, nu, window_half_width)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.nx

    @property
    def dt(self) -> float:
        return self.t_max / self.nt

    @property
    def courant(self) -> float:
        return self.nu * self.dt / self.dx ** 2

    @property
    def xs(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.nx + 1)

    @property
    def ts(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    def node_index(self, x: float) -> int:
        """Cell containing x; a point on a cell boundary goes to the left cell."""
        return int(math.ceil((x + self.L) / self.dx - 0.5))

    def time_index(self, t: float) -> int:
        m = t / self.dt
        k = int(round(m))
        if abs(k - m) > 1e-8 * max(1.0, m):
            raise ValueError(f"t = {t} is not a grid time")
        return k

    def to_json(self) -> dict:
        return {"L": self.L, "nx": self.nx, "t_max": self.t_max, "nt": self.nt, "nu": self.nu,
                "window_half_width": self.window_half_width}

    @classmethod
    def from_json(cls, doc) -> "GridSpec":
        if "nx" in doc:
            return cls(float(doc["L"]), int(doc["nx"]), float(doc["t_max"]), int(doc["nt"]),
                       float(doc.get("nu", 1.0)), float(doc.get("window_half_width", 0.0)))
        return cls.from_spacing(float(doc["L"]), float(doc["dx"]), float(doc["t_max"]),
                                float(doc["dt"]), float(doc.get("nu", 1.0)),
                                float(doc.get("window_half_width", 0.0)))


@dataclass
class FieldEnsemble:
    """Saved simulation output.

    ``values[r, k, i]`` is u at replica ``replica_ids[r]``, time
    ``times[k] = t_index[k]*dt`` and position ``xs[i]``; ``j0_slice[k, i]``
    is the exact J0 there (the initial slice itself at t = 0).
    """

    grid: GridSpec
    values: np.ndarray
    j0_slice: np.ndarray
    seed: NoiseSeed
    t_index: np.ndarray
    x_index: np.ndarray
    replica_ids: np.ndarray
    measure: Optional[InitialMeasure] = None
    rho: Optional[RhoSpec] = None
    warm_start: bool = False
    info: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return int(self.values.shape[0])

    @property
    def times(self) -> np.ndarray:
        return self.grid.dt * self.t_index

    @property
    def xs(self) -> np.ndarray:
        return -self.grid.L + self.grid.dx * self.x_index

    @property
    def I(self) -> np.ndarray:
        return self.values - self.j0_slice[None, :, :]

    def field(self, name: str) -> np.ndarray:
        if name == "u":
            return self.values
        if name == "I":
            return self.I
        raise ValueError(f"field must be 'u' or 'I', got {name!r}")


def initial_slice(measure: InitialMeasure, grid: GridSpec) -> np.ndarray:
    """Grid representation of the initial measure (atoms spread over their cell)."""
    xs = grid.xs
    u0 = np.zeros(grid.nx + 1)
    if measure.density is not None:
        u0 += measure.density.evaluate(xs)
    for a, w in measure.atoms:
        j = grid.node_index(a)
        if not 1 <= j <= grid.nx - 1:
            raise ValueError(f"atom at {a} lies outside the interior of the grid")
        u0[j] += w / grid.dx
    return u0


def _rho_code(rho: RhoSpec):
    if rho.mode == "zero" or (rho.mode == "quasi_linear" and rho.lam == 0.0) or \
            (rho.mode == "additive" and rho.sigma == 0.0):
        return 0, 0.0, 0.0
    if rho.mode == "quasi_linear":
        if rho.varrho == 0.0:
            return 1, rho.lam, 0.0
        return 2, rho.lam, rho.varrho
    if rho.mode == "additive":
        return 3, rho.sigma, 0.0
    if rho.mode == "custom":
        return -1, 0.0, 0.0
    raise ValueError("lipschitz_bound rho has no concrete function to simulate")


@nb.njit(cache=True)
def _step(u, v, row, coef, nscale, code, p1, p2):
    n = u.shape[0]
    if code == 0:
        for j in range(1, n - 1):
            v[j] = u[j] + coef * (u[j + 1] - 2.0 * u[j] + u[j - 1])
    elif code == 1:
        for j in range(1, n - 1):
            v[j] = u[j] + coef * (u[j + 1] - 2.0 * u[j] + u[j - 1]) + (p1 * u[j]) * row[j] * nscale
    elif code == 2:
        for j in range(1, n - 1):
            r = p1 * math.sqrt(p2 * p2 + u[j] * u[j])
            v[j] = u[j] + coef * (u[j + 1] - 2.0 * u[j] + u[j - 1]) + r * row[j] * nscale
    else:
        for j in range(1, n - 1):
            v[j] = u[j] + coef * (u[j + 1] - 2.0 * u[j] + u[j - 1]) + p1 * row[j] * nscale


@nb.njit(parallel=True, cache=True)
def _evolve(u_start, m_start, nt, bc_left, bc_right, coef, nscale, code, p1, p2,
            seed_key, replica_ids, save_pos, x_lo, x_hi, out, status):
    n = u_start.shape[0]
    half = (n + 1) // 2
    for k in nb.prange(replica_ids.shape[0]):
        u = u_start.copy()
        v = np.empty(n)
        row = np.zeros(n)
        ub = np.empty(half)
        mb = np.empty(half)
        vb = np.empty(half)
        for m in range(m_start, nt):
            if code != 0:
                fill_row(row_key(seed_key, replica_ids[k], m), row, ub, mb, vb)
            _step(u, v, row, coef, nscale, code, p1, p2)
            v[0] = bc_left[m + 1]
            v[n - 1] = bc_right[m + 1]
            u, v = v, u
            idx = save_pos[m + 1]
            check = idx >= 0 or (m + 1) % 64 == 0 or m + 1 == nt
            if idx >= 0:
                for i in range(x_lo, x_hi):
                    out[k, idx, i - x_lo] = u[i]
            if check:
                ok = True
                for i in range(n):
                    if not math.isfinite(u[i]):
                        ok = False
                        break
                if not ok:
                    status[k] = m + 1
                    break


def _boundary_values(measure, grid, quad):
    ts = grid.ts
    left = np.empty(grid.nt + 1)
    right = np.empty(grid.nt + 1)
    u0 = None
    for m, t in enumerate(ts):
        if m == 0:
            continue
        vals = j0(measure, grid.nu, float(t), np.array([-grid.L, grid.L]), quad=quad)
        left[m], right[m] = vals[0], vals[1]
    if measure.density is not None:
        d0 = measure.density.evaluate(np.array([-grid.L, grid.L]))
        left[0], right[0] = d0[0], d0[1]
    else:
        left[0] = right[0] = 0.0
    return left, right


def _resolve_save(grid, save_steps, save_window):
    if save_steps is None:
        steps = np.arange(grid.nt + 1)
    else:
        steps = np.unique(np.asarray(save_steps, dtype=np.int64))
        if steps.size == 0 or steps[0] < 0 or steps[-1] > grid.nt:
            raise ValueError("save_steps must lie in [0, nt]")
    if save_window is None:
        x_lo, x_hi = 0, grid.nx + 1
    else:
        lo, hi = save_window
        x_lo = max(int(math.ceil((lo + grid.L) / grid.dx - 1e-9)), 0)
        x_hi = min(int(math.floor((hi + grid.L) / grid.dx + 1e-9)), grid.nx) + 1
        if x_hi <= x_lo:
            raise ValueError("empty spatial save window")
    return steps, x_lo, x_hi


def simulate(measure: InitialMeasure, rho: RhoSpec, grid: GridSpec, seed: NoiseSeed,
             replicas: int, *, save_steps: Optional[Sequence[int]] = None,
             save_window: Optional[tuple] = None, warm_start: bool = False,
             replica_offset: int = 0, on_failure: str = "raise",
             quad: QuadratureSpec = DEFAULT_QUAD, engine: str = "auto") -> FieldEnsemble:
    """Run ``replicas`` independent copies of the scheme.

    Args:
        save_steps: time indices to keep (default: all).
        save_window: (x_lo, x_hi) physical range of nodes to keep (default: all).
        warm_start: start the stochastic evolution at t = dt from the exact
            J0(dt, .) instead of the sampled initial data.
        replica_offset: first replica id; ids select noise streams, so a large
            ensemble can be produced in batches.
        on_failure: "raise" or "drop" for replicas that overflow.
        engine: "auto" (compiled kernel when rho is built in) or "numpy".
    """
    if not classify(measure).in_MH:
        raise ValueError("measure is not Gaussian integrable")
    if int(replicas) != replicas or replicas < 1:
        raise ValueError("replicas must be a positive integer")
    replicas = int(replicas)
    if replica_offset < 0 or replica_offset + replicas > (1 << 32):
        raise ValueError("replica ids must lie in [0, 2^32)")
    code, p1, p2 = _rho_code(rho)
    steps, x_lo, x_hi = _resolve_save(grid, save_steps, save_window)

    xs = grid.xs
    info = {"t0_slice": "initial_data"}
    if warm_start:
        u1 = np.asarray(j0(measure, grid.nu, grid.dt, xs, quad=quad), dtype=float)
        if not measure.atoms and np.all(np.isfinite(initial_slice(measure, grid))):
            u0 = initial_slice(measure, grid)
        else:
            u0 = u1.copy()
            info["t0_slice"] = "surrogate_j0_dt"
        m_start, u_start = 1, u1
    else:
        u0 = initial_slice(measure, grid)
        if not np.all(np.isfinite(u0)):
            raise ValueError("initial density is unbounded on the grid; use warm_start")
        m_start, u_start = 0, u0
    left, right = _boundary_values(measure, grid, quad)
    u_start = u_start.copy()
    u_start[0], u_start[-1] = left[m_start], right[m_start]

    save_pos = np.full(grid.nt + 1, -1, dtype=np.int64)
    save_pos[steps] = np.arange(steps.size)
    out = np.full((replicas, steps.size, x_hi - x_lo), np.nan)
    # slices at or before the start are deterministic
    if steps[0] == 0:
        out[:, 0, :] = u0[x_lo:x_hi]
    if m_start == 1 and save_pos[1] >= 0:
        out[:, save_pos[1], :] = u_start[x_lo:x_hi]
    status = np.zeros(replicas, dtype=np.int64)
    ids = np.arange(replica_offset, replica_offset + replicas, dtype=np.int64)
    coef = 0.5 * grid.nu * grid.dt / grid.dx ** 2
    nscale = math.sqrt(grid.dt / grid.dx)

    if code >= 0 and engine == "auto":
        _evolve(u_start, m_start, grid.nt, left, right, coef, nscale, code, p1, p2,
                seed.key, ids, save_pos, x_lo, x_hi, out, status)
    else:
        _evolve_numpy(rho, u_start, m_start, grid, left, right, coef, nscale, seed, ids,
                      save_pos, x_lo, x_hi, out, status)

    failures = {int(ids[k]): int(status[k]) for k in np.nonzero(status)[0]}
    if failures:
        if on_failure == "raise":
            raise SimulationError(
                f"{len(failures)} replica(s) overflowed (first: replica {min(failures)} at step "
                f"{failures[min(failures)]}); moments grow like exp(lam^4 t/(4 nu))", failures)
        keep = status == 0
        out = out[keep]
        ids = ids[keep]
        info["dropped_replicas"] = failures

    j0s = _j0_slices(measure, grid, steps, xs[x_lo:x_hi], u0[x_lo:x_hi], quad)
    return FieldEnsemble(grid, out, j0s, seed, steps, np.arange(x_lo, x_hi), ids, measure, rho,
                         warm_start, info)


def _evolve_numpy(rho, u_start, m_start, grid, left, right, coef, nscale, seed, ids,
                  save_pos, x_lo, x_hi, out, status):
    # same arithmetic order as the compiled kernel, vectorised over replicas
    n = u_start.shape[0]
    u = np.tile(u_start, (ids.size, 1))
    alive = np.ones(ids.size, dtype=bool)
    for m in range(m_start, grid.nt):
        xi = normals_block(seed, ids, m, n)
        v = np.empty_like(u)
        c = u[:, 1:-1]
        r = np.asarray(rho(c), dtype=float)
        v[:, 1:-1] = c + coef * (u[:, 2:] - 2.0 * c + u[:, :-2]) + r * xi[:, 1:-1] * nscale
        v[:, 0] = left[m + 1]
        v[:, -1] = right[m + 1]
        u = v
        bad = alive & ~np.all(np.isfinite(u), axis=1)
        if bad.any():
            status[bad] = m + 1
            alive &= ~bad
        idx = save_pos[m + 1]
        if idx >= 0:
            out[alive, idx, :] = u[alive, x_lo:x_hi]


def _j0_slices(measure, grid, steps, xs, u0_window, quad):
    res = np.empty((steps.size, xs.size))
    for k, m in enumerate(steps):
        if m == 0:
            res[k] = u0_window
        else:
            res[k] = j0(measure, grid.nu, float(m * grid.dt), xs, quad=quad)
    return res


def sample_path(ensemble: FieldEnsemble, replica: int) -> np.ndarray:
    """Saved time x space slice of one replica (index into the ensemble)."""
    if not 0 <= replica < ensemble.replicas:
        raise IndexError(f"replica {replica} out of range [0, {ensemble.replicas})")
    return ensemble.values[replica].copy()


def scheme_second_moment(measure: InitialMeasure, rho: RhoSpec, grid: GridSpec,
                         steps: Sequence[int], nodes: Sequence[int]) -> np.ndarray:
    """Exact E u^2 of the discrete scheme (no Monte Carlo) for quasi-linear or
    additive rho, by propagating the mean and the second-moment matrix.

    Returns an array of shape (len(steps), len(nodes)). Cost O(nt nx^2).
    """
    if rho.mode not in ("quasi_linear", "additive", "zero"):
        raise ValueError("needs a quasi-linear, additive or zero rho")
    u0 = initial_slice(measure, grid)
    if not np.all(np.isfinite(u0)):
        raise ValueError("unbounded initial slice")
    left, right = _boundary_values(measure, grid, DEFAULT_QUAD)
    coef = 0.5 * grid.nu * grid.dt / grid.dx ** 2
    q = grid.dt / grid.dx
    mean = u0.copy()
    S = np.outer(u0, u0)
    want = {int(s): i for i, s in enumerate(steps)}
    nodes = np.asarray(nodes)
    res = np.empty((len(want), nodes.size))
    if 0 in want:
        res[want[0]] = np.diag(S)[nodes]

    def apply_rows(M):
        P = np.zeros_like(M)
        P[1:-1] = M[1:-1] + coef * (M[2:] - 2.0 * M[1:-1] + M[:-2])
        return P

    for m in range(grid.nt):
        d = np.diag(S)
        if rho.mode == "quasi_linear":
            var = rho.lam ** 2 * (rho.varrho ** 2 + d)
        elif rho.mode == "additive":
            var = np.full_like(d, rho.sigma ** 2)
        else:
            var = np.zeros_like(d)
        bc = np.zeros_like(mean)
        bc[0], bc[-1] = left[m + 1], right[m + 1]
        pm = apply_rows(mean[:, None])[:, 0]
        PS = apply_rows(S)
        PSP = apply_rows(PS.T).T
        S = PSP + np.outer(pm, bc) + np.outer(bc, pm) + np.outer(bc, bc)
        S[np.arange(1, S.shape[0] - 1), np.arange(1, S.shape[0] - 1)] += q * var[1:-1]
        mean = pm + bc
        if m + 1 in want:
            res[want[m + 1]] = np.diag(S)[nodes]
    return res


# ---------------------------------------------------------------------------
# export


def atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def ensemble_metadata(ens: FieldEnsemble) -> dict:
    return {
        "grid": ens.grid.to_json(),
        "seed": ens.seed.master_seed,
        "replica_ids": [int(ens.replica_ids[0]), int(ens.replica_ids[-1]) + 1] if ens.replicas else [],
        "replicas": ens.replicas,
        "measure": None if ens.measure is None else ens.measure.to_json(),
        "rho": None if ens.rho is None or ens.rho.mode == "custom" else ens.rho.to_json(),
        "warm_start": ens.warm_start,
        "t_index": [int(v) for v in ens.t_index],
        "x_index": [int(ens.x_index[0]), int(ens.x_index[-1]) + 1],
        "info": ens.info,
    }


def write_ensemble_csv(ens: FieldEnsemble, path) -> None:
    """CSV rows (replica, t_index, x_index, value) with 17 significant digits."""
    lines = ["replica,t_index,x_index,value"]
    for r, rid in enumerate(ens.replica_ids):
        for k, m in enumerate(ens.t_index):
            row = ens.values[r, k]
            lines.extend(f"{rid},{m},{j},{v:.17g}" for j, v in zip(ens.x_index, row))
    atomic_write(path, "\n".join(lines) + "\n")


def concat_ensembles(parts: Sequence[FieldEnsemble]) -> FieldEnsemble:
    """Join ensembles that differ only in their replica ids."""
    if not parts:
        raise ValueError("nothing to join")
    first = parts[0]
    for e in parts[1:]:
        if (e.grid != first.grid or e.seed != first.seed or not np.array_equal(e.t_index, first.t_index)
                or not np.array_equal(e.x_index, first.x_index) or e.warm_start != first.warm_start):
            raise ValueError("ensembles are not compatible")
    if len(parts) == 1:
        return first
    info = dict(first.info)
    dropped = {}
    for e in parts:
        dropped.update(e.info.get("dropped_replicas", {}))
    if dropped:
        info["dropped_replicas"] = dropped
    return FieldEnsemble(first.grid, np.concatenate([e.values for e in parts]), first.j0_slice, first.seed,
                         first.t_index, first.x_index, np.concatenate([e.replica_ids for e in parts]),
                         first.measure, first.rho, first.warm_start, info)
