"""Philox4x64-10 for numba kernels, bit-compatible with ``numpy.random.Philox``.

A stream is keyed by ``(seed, stream_id)``: ``key = [seed, stream_id]`` with the
counter starting at zero, i.e. ``numpy.random.Philox(key=seed | stream_id << 64)``.
Output word ``i`` of a stream depends only on ``(seed, stream_id, i)``.

Kernels pull steps from a small int8 buffer refilled by :func:`fill_steps` and
keep the buffer cursor in a local variable::

    rng = new_rng(seed, stream_id)
    buf = np.empty(STEP_BUFFER, np.int8)
    cursor = STEP_BUFFER
    ...
    if cursor == STEP_BUFFER:
        fill_steps(rng, buf, threshold)
        cursor = 0
    x = buf[cursor]
    cursor += 1

(Holding the cursor in an array costs an order of magnitude in the hot loop.)
"""

import math

import numpy as np
from numba import njit, uint64

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)

STEP_BUFFER = 64  # multiple of 4


@njit(cache=True, inline="always")
def _mulhi(a, b):
    a_lo = a & uint64(0xFFFFFFFF)
    a_hi = a >> uint64(32)
    b_lo = b & uint64(0xFFFFFFFF)
    b_hi = b >> uint64(32)
    t = a_hi * b_lo + ((a_lo * b_lo) >> uint64(32))
    w1 = (t & uint64(0xFFFFFFFF)) + a_lo * b_hi
    return a_hi * b_hi + (t >> uint64(32)) + (w1 >> uint64(32))


@njit(cache=True, inline="always")
def _round(c0, c1, c2, c3, k0, k1):
    hi0 = _mulhi(_M0, c0)
    lo0 = _M0 * c0
    hi1 = _mulhi(_M1, c2)
    lo1 = _M1 * c2
    return hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0


@njit(cache=True, inline="always")
def philox_block(ctr, k0, k1):
    """Encrypt counter ``(ctr, 0, 0, 0)`` under key ``(k0, k1)``; 10 rounds."""
    # unrolled by hand: numba does not unroll the tuple-swapping loop
    c0, c1, c2, c3 = _round(ctr, uint64(0), uint64(0), uint64(0), k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    c0, c1, c2, c3 = _round(c0, c1, c2, c3, k0, k1)
    k0 += _W0
    k1 += _W1
    return _round(c0, c1, c2, c3, k0, k1)


@njit(cache=True)
def new_rng(seed, stream_id):
    """Generator state ``[key0, key1, block counter]`` for one stream."""
    rng = np.zeros(3, dtype=np.uint64)
    rng[0] = uint64(seed)
    rng[1] = uint64(stream_id)
    return rng


@njit(cache=True)
def fill_raw(rng, out):
    """Next ``len(out)`` 64-bit words of the stream (``len(out) % 4 == 0``)."""
    k0 = rng[0]
    k1 = rng[1]
    ctr = rng[2]
    for i in range(0, out.shape[0], 4):
        ctr += uint64(1)
        a, b, c, d = philox_block(ctr, k0, k1)
        out[i] = a
        out[i + 1] = b
        out[i + 2] = c
        out[i + 3] = d
    rng[2] = ctr


@njit(cache=True)
def fill_steps(rng, buf, threshold):
    """Refill ``buf`` with +-1 steps, one uniform per step.

    A step is +1 when ``(word >> 11) < threshold``, which is the integer form
    of ``uniform < p`` (see :func:`step_threshold`).
    """
    k0 = rng[0]
    k1 = rng[1]
    ctr = rng[2]
    s = uint64(11)
    for i in range(0, buf.shape[0], 4):
        ctr += uint64(1)
        a, b, c, d = philox_block(ctr, k0, k1)
        buf[i] = 1 if (a >> s) < threshold else -1
        buf[i + 1] = 1 if (b >> s) < threshold else -1
        buf[i + 2] = 1 if (c >> s) < threshold else -1
        buf[i + 3] = 1 if (d >> s) < threshold else -1
    rng[2] = ctr


def step_threshold(p: float) -> np.uint64:
    """Integer threshold equivalent to ``u < p`` for ``u = (x >> 11) * 2**-53``.

    ``k * 2**-53 < p`` iff ``k < ceil(p * 2**53)``; scaling by a power of two
    is exact, so this agrees with numpy's float comparison bit for bit.
    """
    return np.uint64(math.ceil(p * 2.0**53))
