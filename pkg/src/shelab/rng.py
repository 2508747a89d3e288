"""Counter-based normal variates keyed by (seed, replica, time step, node).

Each variate is a pure function of its four integer coordinates, so
ensembles are reproducible under any evaluation order or thread count.

Construction: a SplitMix64 finaliser hashes the coordinates into a 64-bit
row key; node pairs (2k, 2k+1) take two further hashes of the key, which
become two uniforms and then two normals by the Box-Muller transform. The
logarithm and the sine/cosine are evaluated with fixed polynomials so the
compiled loop vectorises; both are accurate to a few ulp on their reduced
ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["NoiseSeed", "mix64", "row_key", "fill_row", "normal_variate", "normals_block"]

_U = np.uint64
GOLDEN = _U(0x9E3779B97F4A7C15)
_MASK64 = (1 << 64) - 1
_SQRT2 = math.sqrt(2.0)
_LN2 = math.log(2.0)
_PIO2 = 0.5 * math.pi
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@nb.njit(cache=True)
def row_key(seed_key, replica, step):
    """Key of the noise row for one replica and one time step."""
    c = (_U(replica) << _U(32)) | _U(step)
    return mix64(seed_key ^ mix64(c + GOLDEN))


@nb.njit(fastmath=True, error_model="numpy", cache=True)
def fill_row(key, out, ub, mb, vb):
    """Write standard normals for node indices 0..len(out)-1 into ``out``.

    ``ub``, ``mb``, ``vb`` are scratch arrays of length ``(len(out)+1)//2``.
    """
    n = out.shape[0]
    half = (n + 1) // 2
    for i in range(half):
        z1 = mix64(key + _U(2 * i + 1) * GOLDEN)
        z2 = mix64(key + _U(2 * i + 2) * GOLDEN)
        ub[i] = np.float64((z1 >> _U(11)) + _U(1)) * _INV53   # (0, 1]
        vb[i] = np.float64(z2 >> _U(11)) * _INV53              # [0, 1)
    ubi = ub.view(np.uint64)
    mbi = mb.view(np.uint64)
    for i in range(half):
        mbi[i] = (ubi[i] & _U(0x000FFFFFFFFFFFFF)) | _U(0x3FF0000000000000)
    for i in range(half):
        # log(u) = e ln2 + log(m), m in [1/sqrt2, sqrt2) after adjustment
        e = np.float64(np.int64(ubi[i] >> _U(52)) - 1023)
        m = mb[i]
        big = np.float64(m > _SQRT2)
        m = m * (1.0 - 0.5 * big)
        e = e + big
        s = (m - 1.0) / (m + 1.0)
        s2 = s * s
        p = 1.0 / 19
        p = p * s2 + 1.0 / 17
        p = p * s2 + 1.0 / 15
        p = p * s2 + 1.0 / 13
        p = p * s2 + 1.0 / 11
        p = p * s2 + 1.0 / 9
        p = p * s2 + 1.0 / 7
        p = p * s2 + 1.0 / 5
        p = p * s2 + 1.0 / 3
        p = p * s2 + 1.0
        lg = 2.0 * s * p + e * _LN2
        r = math.sqrt(-2.0 * lg)
        # angle 2 pi v split into quadrant q and offset a in [-pi/4, pi/4)
        w = 4.0 * vb[i]
        q = np.floor(w)
        a = (w - q - 0.5) * _PIO2
        a2 = a * a
        sn = a * (1.0 + a2 * (-1.0 / 6 + a2 * (1.0 / 120 + a2 * (-1.0 / 5040 + a2 * (
            1.0 / 362880 + a2 * (-1.0 / 39916800 + a2 * (1.0 / 6227020800 + a2 * (-1.0 / 1307674368000))))))))
        cs = 1.0 + a2 * (-0.5 + a2 * (1.0 / 24 + a2 * (-1.0 / 720 + a2 * (1.0 / 40320 + a2 * (
            -1.0 / 3628800 + a2 * (1.0 / 479001600 + a2 * (-1.0 / 87178291200 + a2 / 20922789888000)))))))
        # rotate by pi/4 to undo the 0.5 offset, then by the quadrant
        c4 = (cs - sn) * 0.7071067811865476
        s4 = (cs + sn) * 0.7071067811865476
        q0 = np.float64(q == 0.0)
        q1 = np.float64(q == 1.0)
        q2 = np.float64(q == 2.0)
        q3 = np.float64(q == 3.0)
        ub[i] = r * (q0 * c4 - q1 * s4 - q2 * c4 + q3 * s4)
        vb[i] = r * (q0 * s4 + q1 * c4 - q2 * s4 - q3 * c4)
    for i in range(n):
        k = i >> 1
        out[i] = vb[k] if (i & 1) else ub[k]


@dataclass(frozen=True)
class NoiseSeed:
    """Master seed of a simulation (an unsigned 64-bit integer)."""

    master_seed: int

    def __post_init__(self):
        s = int(self.master_seed)
        if s < 0 or s > _MASK64:
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", s)

    @property
    def key(self) -> np.uint64:
        return np.uint64(_mix64_py(self.master_seed ^ 0x6A09E667F3BCC909))


def _mix64_py(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@nb.njit(cache=True)
def _block(seed_key, replicas, step, n):
    out = np.empty((replicas.shape[0], n))
    half = (n + 1) // 2
    ub = np.empty(half)
    mb = np.empty(half)
    vb = np.empty(half)
    row = np.empty(n)
    for k in range(replicas.shape[0]):
        fill_row(row_key(seed_key, replicas[k], step), row, ub, mb, vb)
        out[k, :] = row
    return out


def normals_block(seed: NoiseSeed, replicas, step: int, n: int) -> np.ndarray:
    """Normals for nodes 0..n-1 of one time step for several replicas."""
    reps = np.ascontiguousarray(np.asarray(replicas, dtype=np.int64))
    _check_index(step)
    for r in reps:
        _check_index(int(r))
    return _block(seed.key, reps, int(step), int(n))


def _check_index(i: int):
    if i < 0 or i >= (1 << 32):
        raise ValueError("replica and step indices must lie in [0, 2^32)")


def normal_variate(seed: NoiseSeed, replica: int, step: int, node: int) -> float:
    """The single variate at (replica, step, node)."""
    if node < 0:
        raise ValueError("node must be nonnegative")
    return float(normals_block(seed, [replica], step, node + 1)[0, node])
