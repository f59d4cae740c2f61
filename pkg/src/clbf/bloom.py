"""Seeded Bloom filters over canonically encoded keys.

A filter is a fixed-size bit array plus k index functions. Keys are byte
strings; composite keys are built with :func:`encode_key`, which
length-prefixes each field so distinct field tuples can never collide as
bytes.

Index derivation
----------------
Every key is first reduced to a 64-bit content hash with FNV-1a. Slot
indices are then drawn independently per slot by passing the content hash,
a seed tag, and the slot number through the splitmix64 finalizer:

    idx_L = mix64(h0 ^ seed_tag ^ (L + 1) * GAMMA) mod m      L = 0 .. k-1

where ``seed_tag = mix64(seed + GAMMA)``. The finalizer has full avalanche,
so for fixed m the k indices of a key behave like independent uniform draws
over [0, m). That property is what the occupancy analysis downstream
assumes, and the test suite checks it directly against the exact occupancy
distribution. Classic double hashing (h_a + L * h_b) was rejected: it pins
the per-key index set to two degrees of freedom, which visibly distorts the
occupied-bit distribution on small filters (two hashes of one key can then
never land on the same bit).

The same scheme is reproduced in vectorized form by the simulation engine;
a fixture test keeps the two implementations bit-identical.

Serialization is little-endian: a 14-byte header (m: u32, k: u16,
seed: u64) followed by ceil(m / 8) bytes of bits packed LSB-first.
"""

from __future__ import annotations

import struct

__all__ = [
    "BloomFilter",
    "ParameterError",
    "encode_key",
    "fnv1a64",
    "hash_indices",
    "mix64",
]

_MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_HEADER = struct.Struct("<IHQ")

MAX_BITS = 2**32 - 1


class ParameterError(ValueError):
    """A structural parameter is out of its documented domain."""


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a content hash of ``data``."""
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def mix64(x: int) -> int:
    """splitmix64 finalizer; bijective on 64-bit integers."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return x ^ (x >> 31)


def encode_key(*fields: bytes) -> bytes:
    """Concatenate fields, each preceded by its u16 little-endian length.

    The prefix makes the encoding injective over field tuples:
    ('ab', 'c') and ('a', 'bc') map to different byte strings.
    """
    parts = []
    for field in fields:
        if len(field) > 0xFFFF:
            raise ParameterError("key field longer than 65535 bytes")
        parts.append(len(field).to_bytes(2, "little"))
        parts.append(field)
    return b"".join(parts)


def _seed_tag(seed: int) -> int:
    return mix64((seed + GAMMA) & _MASK64)


def hash_indices(key: bytes, m: int, k: int, seed: int) -> list[int]:
    """The k slot indices of ``key`` in a filter of geometry (m, k, seed)."""
    h0 = fnv1a64(key)
    tag = _seed_tag(seed)
    return [mix64(h0 ^ tag ^ (((L + 1) * GAMMA) & _MASK64)) % m for L in range(k)]


class BloomFilter:
    """Fixed-geometry Bloom filter.

    No false negatives: a key that was inserted always tests positive.
    False positives occur with a rate governed by the load and k.
    """

    __slots__ = ("m", "k", "seed", "_bits", "_tag")

    def __init__(self, m: int, k: int, seed: int = 0):
        if not 1 <= m <= MAX_BITS:
            raise ParameterError(f"bit count m={m} outside [1, 2^32-1]")
        if not 1 <= k <= m:
            raise ParameterError(f"hash count k={k} outside [1, m={m}]")
        if not 0 <= seed <= _MASK64:
            raise ParameterError(f"seed {seed} outside u64 range")
        self.m = m
        self.k = k
        self.seed = seed
        self._bits = bytearray((m + 7) // 8)
        self._tag = _seed_tag(seed)

    def _indices(self, key: bytes) -> list[int]:
        h0 = fnv1a64(key)
        m, tag = self.m, self._tag
        return [mix64(h0 ^ tag ^ (((L + 1) * GAMMA) & _MASK64)) % m for L in range(self.k)]

    def insert(self, key: bytes) -> None:
        for idx in self._indices(key):
            self._bits[idx >> 3] |= 1 << (idx & 7)

    def contains(self, key: bytes) -> bool:
        bits = self._bits
        return all(bits[idx >> 3] & (1 << (idx & 7)) for idx in self._indices(key))

    def popcount(self) -> int:
        """Number of set bits."""
        return int.from_bytes(self._bits, "little").bit_count()

    def bit(self, idx: int) -> bool:
        if not 0 <= idx < self.m:
            raise ParameterError(f"bit index {idx} outside [0, {self.m})")
        return bool(self._bits[idx >> 3] & (1 << (idx & 7)))

    def fill(self) -> None:
        """Set every bit (saturate). Mainly useful for adversarial tests."""
        for i in range(len(self._bits)):
            self._bits[i] = 0xFF
        self._mask_padding()

    def _mask_padding(self) -> None:
        tail = self.m & 7
        if tail:
            self._bits[-1] &= (1 << tail) - 1

    def raw_bits(self) -> bytes:
        """The packed bit array without the header (LSB-first)."""
        return bytes(self._bits)

    def load_bits(self, data: bytes) -> None:
        if len(data) != len(self._bits):
            raise ParameterError(
                f"bit image is {len(data)} bytes, geometry needs {len(self._bits)}"
            )
        tail = self.m & 7
        if tail and data[-1] >> tail:
            raise ParameterError("padding bits beyond m are set")
        self._bits = bytearray(data)

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.m, self.k, self.seed) + bytes(self._bits)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BloomFilter":
        if len(blob) < _HEADER.size:
            raise ParameterError("filter image shorter than its 14-byte header")
        m, k, seed = _HEADER.unpack_from(blob)
        if m < 1:
            raise ParameterError("filter image declares m=0")
        if not 1 <= k <= m:
            raise ParameterError(f"filter image declares k={k} outside [1, m={m}]")
        body = blob[_HEADER.size :]
        if len(body) != (m + 7) // 8:
            raise ParameterError(
                f"filter image has {len(body)} body bytes, m={m} needs {(m + 7) // 8}"
            )
        out = cls(m, k, seed)
        out.load_bits(body)
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (
            self.m == other.m
            and self.k == other.k
            and self.seed == other.seed
            and self._bits == other._bits
        )

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, k={self.k}, seed={self.seed}, set={self.popcount()})"
