"""Counter-based deterministic random streams (keyed SplitMix64).

Every draw is a pure function of ``(seed, counter)``: word ``i`` of the
stream keyed by the 64-bit ``seed`` is

    mix64((seed + GOLDEN_GAMMA * (i + 1)) mod 2**64)

where ``mix64`` is the SplitMix64 finalizer (Steele/Lea/Flood constants
0x9e3779b97f4a7c15, 0xbf58476d1ce4e5b9, 0x94d049bb133111eb and shifts
30/27/31).  Uniform doubles take the top 53 bits, normals pair uniforms
through Box-Muller.  Disjoint counter ranges never overlap, so workers
can fill sub-ranges independently and reductions stay bit-identical for
any worker count.  The whole generator fits in this docstring, which is
the point: any language can replay the streams.
"""

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_U64 = np.uint64
_TWO53_INV = 2.0 ** -53


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer on a uint64 array; overflow wraps mod 2**64.
    z = (z ^ (z >> _U64(30))) * _U64(_MIX_A)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX_B)
    return z ^ (z >> _U64(31))


def words(seed: int, start: int, count: int) -> np.ndarray:
    """Raw stream words ``start .. start+count-1`` as uint64."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_U64(seed & 0xFFFFFFFFFFFFFFFF) + _U64(GOLDEN_GAMMA) * idx)


def uniforms_from_words(w: np.ndarray) -> np.ndarray:
    """Map raw words to uniforms on [0, 1) (top 53 bits), elementwise."""
    return (w >> _U64(11)).astype(np.float64) * _TWO53_INV


def normals_from_words(w: np.ndarray) -> np.ndarray:
    """Box-Muller on adjacent word pairs along the last axis.

    Words (2i, 2i+1) produce normals (2i, 2i+1):
    z0 = sqrt(-2 ln u1) cos(2 pi u2), z1 = the sin partner, where u1 is
    word 2i mapped to (0, 1] and u2 is word 2i+1 mapped to [0, 1).
    Each output pair depends only on its own word pair, so any
    even-aligned partition of the counter range reproduces bitwise.
    """
    if w.shape[-1] % 2:
        raise ValueError("word count must be even for Box-Muller pairing")
    u1 = ((w[..., 0::2] >> _U64(11)).astype(np.float64) + 1.0) * _TWO53_INV
    u2 = (w[..., 1::2] >> _U64(11)).astype(np.float64) * _TWO53_INV
    r = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    out = np.empty(w.shape)
    out[..., 0::2] = r * np.cos(ang)
    out[..., 1::2] = r * np.sin(ang)
    return out


def uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms on [0, 1), one stream word each."""
    return uniforms_from_words(words(seed, start, count))


def normals(seed: int, start: int, count: int) -> np.ndarray:
    """Standard normals; consumes 2*ceil(count/2) words from ``start``.

    Callers partitioning counter space should use even block sizes and
    even-aligned starts so batched and per-block calls agree bitwise.
    """
    pairs = (count + 1) // 2
    return normals_from_words(words(seed, start, 2 * pairs))[:count]


def derive(seed: int, *tags: int) -> int:
    """Child seed for a named substream.

    ``derive(s, t)`` = ``mix64(s XOR mix64(t + GOLDEN_GAMMA))``; chained
    left to right for several tags.  Distinct tag paths give streams
    that are independent for all practical purposes.
    """
    s = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        for t in tags:
            s = _mix64(s ^ _mix64(_U64(t & 0xFFFFFFFFFFFFFFFF) + _U64(GOLDEN_GAMMA)))
    return int(s)
