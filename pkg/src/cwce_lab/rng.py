"""Counter-based random streams.

Every random quantity in the package is derived from Philox4x64-10 raw
64-bit words.  A stream is identified by a 64-bit ``seed`` and a 64-bit
``stream`` index (the individual index for panels); the two are packed into
the 128-bit Philox key as ``seed | stream << 64`` and the counter starts at
zero.  Words are turned into uniforms on the open interval (0, 1) as
``((w >> 11) + 0.5) * 2**-53`` and into standard normals through the inverse
normal CDF, so the mapping from words to variates does not depend on
numpy's own sampling algorithms and can be reproduced in any language with a
Philox implementation and an accurate ``ndtri``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def _key(seed: int, stream: int) -> int:
    return (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)


def raw_words(seed: int, stream: int, size: int) -> np.ndarray:
    """First ``size`` uint64 words of stream ``(seed, stream)``."""
    bitgen = np.random.Philox(key=_key(seed, stream))
    return bitgen.random_raw(size)


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def uniforms(seed: int, stream: int, size: int) -> np.ndarray:
    return words_to_uniform(raw_words(seed, stream, size))


def normals(seed: int, stream: int, size: int) -> np.ndarray:
    return ndtri(uniforms(seed, stream, size))


class Stream:
    """Sequential reader over one (seed, stream) pair.

    Draws are taken in fixed-size blocks from the front of the stream, so a
    caller that always requests the same block sizes in the same order gets
    the same numbers regardless of threading.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._bitgen = np.random.Philox(key=_key(seed, stream))

    def uniform(self, size) -> np.ndarray:
        n = int(np.prod(size))
        return words_to_uniform(self._bitgen.random_raw(n)).reshape(size)

    def normal(self, size) -> np.ndarray:
        return ndtri(self.uniform(size))


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    """NumPy generator on the Philox stream ``(seed, stream)``, for auxiliary draws."""
    return np.random.Generator(np.random.Philox(key=_key(seed, stream)))
