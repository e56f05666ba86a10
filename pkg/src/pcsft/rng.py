"""Counter-based random numbers (Philox4x32-10) with random access.

Every standard normal is a pure function of ``(master_seed, stream_id, k)``:
normal ``k`` of a stream is one 64-bit word of Philox block ``k // 2`` fed
through a 256-layer ziggurat.  Nothing is stateful, so any trial can be regenerated
in isolation and parallel workers never share generator state.

The 128-bit Philox counter holds the block index in its low 64 bits and the
stream id in its high 64 bits; the 64-bit key is the master seed.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ValidationError

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_SHIFT11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0

U64_MAX = (1 << 64) - 1


@nb.njit(inline="always", cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds; all arguments are uint64 holding 32-bit words."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


# 256-layer ziggurat; layer i spans [0, x_i] with equal areas, x_256 = 0.
_ZIG_R = 3.6541528853610088
_ZIG_V = 4.92867323399e-3


def _ziggurat_tables():
    x = np.empty(257)
    x[0] = _ZIG_V / math.exp(-0.5 * _ZIG_R * _ZIG_R)
    x[1] = _ZIG_R
    for i in range(1, 255):
        x[i + 1] = math.sqrt(-2.0 * math.log(math.exp(-0.5 * x[i] * x[i]) + _ZIG_V / x[i]))
    x[256] = 0.0
    scale = float(1 << 52)
    ki = np.empty(256, dtype=np.uint64)
    ki[0] = np.uint64(_ZIG_R / x[0] * scale)
    for i in range(1, 256):
        ki[i] = np.uint64(x[i + 1] / x[i] * scale)
    wi = x[:256] / scale
    fi = np.exp(-0.5 * x * x)
    return ki, wi, fi


_ZIG_K, _ZIG_W, _ZIG_F = _ziggurat_tables()
_AUX_KEY = np.uint64(0x5851F42D4C957F2D)
_MASK52 = np.uint64(0x000FFFFFFFFFFFFF)
_MASK8 = np.uint64(0xFF)
_ONE = np.uint64(1)
_SHIFT8 = np.uint64(8)
_SHIFT9 = np.uint64(9)


@nb.njit(inline="always", cache=True)
def _block_words(key, stream, block):
    x0, x1, x2, x3 = philox4x32(
        block & _MASK32, block >> _SHIFT32,
        stream & _MASK32, stream >> _SHIFT32,
        key & _MASK32, key >> _SHIFT32,
    )
    return (x0 << _SHIFT32) | x1, (x2 << _SHIFT32) | x3


@nb.njit(inline="always", cache=True)
def _uniform(w):
    return (float(w >> _SHIFT11) + 0.5) * _INV_2_53


@nb.njit(cache=True)
def _ziggurat_slow(w, key, stream, k):
    # Rejection path for normal k; extra words come from the auxiliary key so
    # the primary stream stays one word per normal.
    aux = key ^ _AUX_KEY
    base = np.uint64(k) << _SHIFT8
    for j in range(128):
        idx = w & _MASK8
        neg = (w >> _SHIFT8) & _ONE
        rabs = (w >> _SHIFT9) & _MASK52
        x = float(rabs) * _ZIG_W[idx]
        if rabs < _ZIG_K[idx]:
            return -x if neg else x
        u, w_next = _block_words(aux, stream, base | np.uint64(j))
        if idx == 0:
            for t in range(128):
                a, b = _block_words(aux, stream, base | np.uint64(128 + t))
                xx = -math.log(_uniform(a)) / _ZIG_R
                yy = -math.log(_uniform(b))
                if yy + yy > xx * xx:
                    x = _ZIG_R + xx
                    return -x if neg else x
        elif _ZIG_F[idx] + _uniform(u) * (_ZIG_F[idx + 1] - _ZIG_F[idx]) < math.exp(-0.5 * x * x):
            return -x if neg else x
        w = w_next
    return 0.0


@nb.njit(inline="always", cache=True)
def _ziggurat(w, key, stream, k):
    idx = w & _MASK8
    rabs = (w >> _SHIFT9) & _MASK52
    if rabs < _ZIG_K[idx]:
        x = float(rabs) * _ZIG_W[idx]
        return -x if (w >> _SHIFT8) & _ONE else x
    return _ziggurat_slow(w, key, stream, k)


@nb.njit(inline="always", cache=True)
def normal_pair(key, stream, block):
    """Normals ``2*block`` and ``2*block + 1`` of a stream (arguments uint64)."""
    w0, w1 = _block_words(key, stream, block)
    k = np.int64(block) * 2
    return _ziggurat(w0, key, stream, k), _ziggurat(w1, key, stream, k + 1)


BUFFER = 256  # normals per refill; a multiple of 2


@nb.njit(cache=True, nogil=True)
def refill(key, stream, first, words, buf):
    """Normals ``first .. first + buf.size - 1`` into ``buf`` (``first`` even).

    Philox words are produced in one tight loop and then fed through the
    ziggurat, which pipelines far better than interleaving the two.
    """
    b0 = first >> 1
    for i in range(buf.size >> 1):
        a, b = _block_words(key, stream, np.uint64(b0 + i))
        words[2 * i] = a
        words[2 * i + 1] = b
    for i in range(buf.size):
        buf[i] = _ziggurat(words[i], key, stream, first + i)


@nb.njit(cache=True, nogil=True)
def fill_normals(key, stream, start, out):
    """Write normals ``start .. start + out.size - 1`` of a stream into ``out``."""
    words = np.empty(BUFFER, dtype=np.uint64)
    buf = np.empty(BUFFER)
    n = out.size
    i = 0
    while i < n:
        k = start + i
        first = k - (k % BUFFER)
        refill(key, stream, first, words, buf)
        off = k - first
        take = min(BUFFER - off, n - i)
        out[i:i + take] = buf[off:off + take]
        i += take


_BRIDGE_KEY = np.uint64(0x2545F4914F6CDD1D)


@nb.njit(inline="always", cache=True)
def aux_uniform(key, stream, index):
    """Uniform in (0, 1) from a counter space disjoint from the normals."""
    w0, _ = _block_words(key ^ _BRIDGE_KEY, stream, np.uint64(index))
    return _uniform(w0)


@nb.njit(cache=True)
def _philox_block(c, k):
    return philox4x32(np.uint64(c[0]), np.uint64(c[1]), np.uint64(c[2]), np.uint64(c[3]),
                      np.uint64(k[0]), np.uint64(k[1]))


def philox_block(counter, key):
    """Raw Philox4x32-10 output for a 4-word counter and 2-word key (for tests)."""
    c = np.asarray(counter, dtype=np.uint64)
    k = np.asarray(key, dtype=np.uint64)
    return tuple(int(x) for x in _philox_block(c, k))


def stream_offset(value):
    """Stable 32-bit tag of a float, used to key sweep rows by threshold value."""
    return zlib.crc32(struct.pack("<d", float(value)))


@dataclass(frozen=True)
class RngStream:
    """One independent, reproducible stream of standard normals."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= U64_MAX:
                raise ValidationError(f"{name} must be an unsigned 64-bit integer, got {v!r}", field=name)

    @property
    def key(self):
        return np.uint64(self.master_seed)

    @property
    def stream(self):
        return np.uint64(self.stream_id)

    def normals(self, count, start=0):
        """Normals with global indices ``start .. start + count - 1``."""
        out = np.empty(int(count), dtype=np.float64)
        if count:
            fill_normals(self.key, self.stream, np.int64(start), out)
        return out

    def spawn(self, stream_id):
        return RngStream(self.master_seed, int(stream_id))
