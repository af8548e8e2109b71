"""Counter-addressable SplitMix64 streams.

A stream is identified by a 64-bit key. Draw ``i`` of the stream is the
SplitMix64 output ``mix64(key + (i + 1) * GAMMA)``, i.e. exactly the i-th
output of the reference SplitMix64 generator seeded with ``key``. Because
every draw is addressable by its counter, whole blocks are produced with
vectorised uint64 arithmetic and runs can be split across workers without
sharing state.

Constants (Steele, Lea & Flood 2014 / Vigna's reference C code)::

    GAMMA = 0x9E3779B97F4A7C15
    mix64(z): z = (z ^ z >> 30) * 0xBF58476D1CE4E5B9
              z = (z ^ z >> 27) * 0x94D049BB133111EB
              return z ^ z >> 31

Uniforms take the top 53 bits: ``(x >> 11) * 2**-53`` in [0, 1).

Seed derivation (``derive_seed``) folds a path of non-negative integers
into a key::

    h = seed
    for p in path:
        h = mix64((h ^ (p * 0xD1B54A32D192ED03 mod 2**64)) + GAMMA)

Normal variates use Box-Muller on two consecutive uniforms::

    z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
"""
import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB
PATH_MUL = 0xD1B54A32D192ED03
INV_2_53 = 1.0 / 9007199254740992.0

# stream ids used by the simulators
STREAM_DECISION = 1
STREAM_REWARD = 2
STREAM_NOISE = 3
STREAM_PROBE = 4
STREAM_CONTEXT = 5


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MUL2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Fold integer path components into a 64-bit stream key."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    h = seed
    for p in path:
        if p < 0:
            raise ValueError("path components must be non-negative")
        h = mix64(((h ^ ((p * PATH_MUL) & MASK64)) + GAMMA) & MASK64)
    return h


def _mix64_array(z):
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(MUL1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(MUL2)
    return z ^ (z >> np.uint64(31))


def raw_block(key: int, start: int, n: int) -> np.ndarray:
    """uint64 draws ``start .. start + n - 1`` of stream ``key``."""
    counters = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + counters * np.uint64(GAMMA)
        return _mix64_array(z)


def uniform_block(key: int, start: int, n: int) -> np.ndarray:
    """float64 uniforms in [0, 1) for draws ``start .. start + n - 1``."""
    return (raw_block(key, start, n) >> np.uint64(11)).astype(np.float64) * INV_2_53


def box_muller(u1, u2):
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


class CounterRNG:
    """Sequential view over one stream; ``counter`` is the next draw index."""

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def from_seed(cls, seed: int, *path: int) -> "CounterRNG":
        return cls(derive_seed(seed, *path))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * GAMMA) & MASK64)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * INV_2_53

    def uniforms(self, n: int) -> np.ndarray:
        out = uniform_block(self.key, self.counter, n)
        self.counter += n
        return out

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return float(box_muller(np.float64(u1), np.float64(u2)))

    def normals(self, n: int) -> np.ndarray:
        u = self.uniforms(2 * n)
        return box_muller(u[0::2], u[1::2])

    def __repr__(self):
        return f"CounterRNG(key=0x{self.key:016x}, counter={self.counter})"
