"""Counter-based Philox4x64-10 streams keyed by (master_seed, stream_index).

Block ``c`` of stream ``(seed, index)`` is ``Philox(counter=(c, 0, 0, 0),
key=(seed, index))``; it yields four 64-bit words, turned into four standard
normals by Box-Muller.  Every value depends only on the stream fields and the
block counter, never on how work is scheduled.  The block function agrees
bit-for-bit with ``numpy.random.Philox`` (whose counter is pre-incremented),
which the test suite uses as an oracle.
"""

from dataclasses import dataclass, replace

import numba as nb
import numpy as np

__all__ = ["RngStream", "philox_block", "blocks_for"]

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


@nb.njit(cache=True)
def _mulhilo(a, b):
    lo = a * b
    a0 = a & _LO32
    a1 = a >> _S32
    b0 = b & _LO32
    b1 = b >> _S32
    p01 = a0 * b1
    p10 = a1 * b0
    mid = ((a0 * b0) >> _S32) + (p01 & _LO32) + (p10 & _LO32)
    hi = a1 * b1 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(cache=True)
def _philox(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@nb.njit(cache=True)
def _box_muller(x, y):
    u1 = ((x >> _S11) + np.uint64(1)) * _TWO_M53  # (0, 1]
    u2 = (y >> _S11) * _TWO_M53
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@nb.njit(cache=True)
def fill_normals(seed, stream, counter, out):
    """Fill ``out`` with normals from blocks ``counter, counter + 1, ...``.

    Returns the first unused block counter.  A partially used final block is
    discarded.
    """
    k0 = np.uint64(seed)
    k1 = np.uint64(stream)
    c = np.uint64(counter)
    zero = np.uint64(0)
    m = out.shape[0]
    full = m // 4
    for b in range(full):
        x0, x1, x2, x3 = _philox(c, zero, zero, zero, k0, k1)
        c += np.uint64(1)
        z0, z1 = _box_muller(x0, x1)
        z2, z3 = _box_muller(x2, x3)
        i = 4 * b
        out[i] = z0
        out[i + 1] = z1
        out[i + 2] = z2
        out[i + 3] = z3
    rest = m - 4 * full
    if rest > 0:
        x0, x1, x2, x3 = _philox(c, zero, zero, zero, k0, k1)
        c += np.uint64(1)
        i = 4 * full
        z0, z1 = _box_muller(x0, x1)
        out[i] = z0
        if rest > 1:
            out[i + 1] = z1
        if rest > 2:
            z2, z3 = _box_muller(x2, x3)
            out[i + 2] = z2
    return c


def blocks_for(count):
    """Number of Philox blocks consumed by ``count`` normals."""
    return -(-int(count) // 4)


def philox_block(seed, stream, counter):
    """The four raw 64-bit words of one block, as a uint64 array."""
    u = np.uint64
    words = _philox(u(counter), u(0), u(0), u(0), u(seed), u(stream))
    return np.array(words, dtype=np.uint64)


def _check_u64(name, value):
    if int(value) != value or not 0 <= value < 2 ** 64:
        raise ValueError(f"{name} must be an integer in [0, 2**64), got {value!r}")
    return int(value)


@dataclass(frozen=True)
class RngStream:
    """Immutable position in a counter-based normal stream."""

    master_seed: int
    stream_index: int = 0
    counter: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", _check_u64("master_seed", self.master_seed))
        object.__setattr__(self, "stream_index", _check_u64("stream_index", self.stream_index))
        object.__setattr__(self, "counter", _check_u64("counter", self.counter))

    def normals(self, count):
        """Return ``(z, next_stream)`` with ``count`` standard normals."""
        out = np.empty(int(count))
        fill_normals(self.master_seed, self.stream_index, self.counter, out)
        return out, self.advance(blocks_for(count))

    def advance(self, blocks):
        return replace(self, counter=self.counter + int(blocks))
