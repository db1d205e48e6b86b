"""Arithmetic in GF(2)[x] and GF(2^m), and the diffusion map.

Polynomials over GF(2) are held as Python ints: bit j is the coefficient
of x^j. A residue modulo a degree-m generator is an int below 2^m.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigInvalid, DegreeTooLarge, LengthMismatch, UnverifiedGenerator

MAX_EXHAUSTIVE_DEGREE = 24

# Primitive moduli, bit j = coefficient of x^j.
BUILTIN_MODULI = {
    4: 0x13,  # x^4 + x + 1
    8: 0x11D,  # x^8 + x^4 + x^3 + x^2 + 1
    10: 0x409,  # x^10 + x^3 + 1
    16: 0x1100B,  # x^16 + x^12 + x^3 + x + 1
    20: 0x100009,  # x^20 + x^3 + 1
    24: 0x1000087,  # x^24 + x^7 + x^2 + x + 1
}


@dataclass(frozen=True)
class BitPolynomial:
    """A polynomial of degree < ``length`` over GF(2)."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.value < 0 or self.value.bit_length() > self.length:
            raise LengthMismatch(
                f"value needs {self.value.bit_length()} bits, length is {self.length}"
            )

    @classmethod
    def from_bits(cls, bits) -> "BitPolynomial":
        """Build from a coefficient sequence, lowest exponent first."""
        bits = list(bits)
        value = 0
        for j, b in enumerate(bits):
            if b:
                value |= 1 << j
        return cls(value, len(bits))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitPolynomial":
        return cls(int.from_bytes(data, "little"), max(8 * len(data), 1))

    def bits(self) -> list[int]:
        return [(self.value >> j) & 1 for j in range(self.length)]

    def __getitem__(self, j: int) -> int:
        if not 0 <= j < self.length:
            raise IndexError(j)
        return (self.value >> j) & 1

    def __xor__(self, other: "BitPolynomial") -> "BitPolynomial":
        if other.length != self.length:
            raise LengthMismatch(f"{self.length} != {other.length}")
        return BitPolynomial(self.value ^ other.value, self.length)

    def weight(self) -> int:
        return self.value.bit_count()

    def padded(self, length: int) -> "BitPolynomial":
        """Zero-pad high to ``length``; shrinking is refused."""
        if length < self.length:
            raise LengthMismatch(f"cannot truncate length {self.length} to {length}")
        return BitPolynomial(self.value, length)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.length + 7) // 8, "little")

    def serialize(self) -> str:
        return f"p:{self.value:x};L={self.length}"

    @classmethod
    def parse(cls, text: str) -> "BitPolynomial":
        head, _, tail = text.partition(";")
        if not head.startswith("p:") or not tail.startswith("L="):
            raise ValueError(f"not a polynomial literal: {text!r}")
        return cls(int(head[2:], 16), int(tail[2:]))


@dataclass(frozen=True)
class Generator:
    """A monic degree-m modulus with nonzero constant term."""

    modulus: int
    primitive_verified: bool = False

    def __post_init__(self):
        m = self.modulus.bit_length() - 1
        if m < 2:
            raise ConfigInvalid(f"generator degree must be >= 2, got {m}")
        if not self.modulus & 1:
            raise ConfigInvalid("generator constant term must be 1")

    @property
    def degree(self) -> int:
        return self.modulus.bit_length() - 1

    @classmethod
    def verified(cls, modulus: int) -> "Generator":
        """Run the primitivity test and return a verified generator."""
        g = cls(modulus)
        if not is_primitive(g):
            raise UnverifiedGenerator(f"{g.serialize()} is not primitive")
        return cls(modulus, True)

    @classmethod
    def attested(cls, modulus: int) -> "Generator":
        """Trust the caller that ``modulus`` is primitive (needed for m > 24)."""
        return cls(modulus, True)

    def serialize(self) -> str:
        return f"g:{self.modulus:x}"

    @classmethod
    def parse(cls, text: str, *, verify: bool = True) -> "Generator":
        if not text.startswith("g:"):
            raise ValueError(f"not a generator literal: {text!r}")
        modulus = int(text[2:], 16)
        return cls.verified(modulus) if verify else cls(modulus)

    def __str__(self):
        terms = [f"x^{j}" if j > 1 else ("x" if j == 1 else "1")
                 for j in range(self.degree, -1, -1) if self.modulus >> j & 1]
        return " + ".join(terms)


def builtin(m: int) -> Generator:
    """The built-in primitive generator of degree ``m``."""
    try:
        return Generator(BUILTIN_MODULI[m], True)
    except KeyError:
        raise ConfigInvalid(
            f"no built-in generator of degree {m}; have {sorted(BUILTIN_MODULI)}"
        ) from None


def clmul(a: int, b: int) -> int:
    """Carry-less product of two GF(2)[x] polynomials."""
    if a < b:
        a, b = b, a
    c = 0
    while b:
        if b & 1:
            c ^= a
        a <<= 1
        b >>= 1
    return c


def poly_mod(a: int, mod: int) -> int:
    """Remainder of ``a`` divided by ``mod`` in GF(2)[x] (long division)."""
    n = mod.bit_length()
    shift = a.bit_length() - n
    while shift >= 0:
        a ^= mod << shift
        shift = a.bit_length() - n
    return a


def _value(P) -> int:
    return P.value if isinstance(P, BitPolynomial) else int(P)


def reduce(P, G: Generator) -> int:
    """P(x) mod G(x) as an m-bit residue."""
    return poly_mod(_value(P), G.modulus)


def gf2_mul(a: int, b: int, G: Generator) -> int:
    """Product of two residues in GF(2)[x]/G(x)."""
    return poly_mod(clmul(a, b), G.modulus)


def x_power(k: int, G: Generator) -> int:
    """x^k mod G(x) by square-and-multiply."""
    result, base = 1, poly_mod(2, G.modulus)
    while k:
        if k & 1:
            result = gf2_mul(result, base, G)
        base = gf2_mul(base, base, G)
        k >>= 1
    return result


def _require_verified(G: Generator):
    if not G.primitive_verified:
        raise UnverifiedGenerator(f"{G.serialize()} has not been verified primitive")


def diffuse(P, G: Generator, seed: int = 0) -> int:
    """x^m * (reduce(P) XOR seed) in GF(2^m).

    With ``seed == 0`` this is the plain diffusion x^m P(x) mod G(x). The
    seed enters as an affine offset, so distances between two outputs under
    the same seed do not depend on it.
    """
    _require_verified(G)
    m = G.degree
    if seed >> m:
        raise ValueError(f"seed {seed:#x} is wider than {m} bits")
    return poly_mod((reduce(P, G) ^ seed) << m, G.modulus)


def lfsr_step(state: int, G: Generator) -> int:
    """Multiply a residue by x: one shift-register step."""
    state <<= 1
    if state >> G.degree:
        state ^= G.modulus
    return state


def is_primitive(G: Generator) -> bool:
    """True iff x has multiplicative order exactly 2^m - 1 modulo G.

    Walks the powers of x one LFSR step at a time, so it is only offered
    up to degree 24.
    """
    m = G.degree
    if m > MAX_EXHAUSTIVE_DEGREE:
        raise DegreeTooLarge(f"exhaustive order test capped at m={MAX_EXHAUSTIVE_DEGREE}, got {m}")
    mod, top = G.modulus, 1 << m
    period = top - 1
    s = 1
    for k in range(1, period + 1):
        s <<= 1
        if s & top:
            s ^= mod
        if s == 1:
            return k == period
    return False


def find_primitive(m: int, count: int = 1, *, exclude=()) -> list[Generator]:
    """The ``count`` smallest primitive moduli of degree m, skipping ``exclude``."""
    found = []
    skip = {g.modulus if isinstance(g, Generator) else int(g) for g in exclude}
    for modulus in range((1 << m) | 1, 1 << (m + 1), 2):
        if modulus in skip:
            continue
        # an even number of terms means x + 1 divides the modulus
        if modulus.bit_count() % 2 == 0:
            continue
        g = Generator(modulus)
        if is_primitive(g):
            found.append(Generator(modulus, True))
            if len(found) == count:
                return found
    raise ConfigInvalid(f"only {len(found)} primitive moduli of degree {m} available")


def kernel_size(L: int, m: int) -> int:
    """Number of length-L inputs reducing to zero modulo a degree-m generator."""
    return 1 << max(L - m, 0)


def hamming_weight(word: int) -> int:
    return int(word).bit_count()


def hamming_distance(a: int, b: int) -> int:
    return (a ^ b).bit_count()


class Diffuser:
    """Table-driven diffusion for a fixed (generator, seed, input width).

    Reduction is linear, so the input is split into bytes and the diffused
    image of every byte value at every byte position is precomputed. A call
    then costs one table lookup per input byte.
    """

    def __init__(self, G: Generator, seed: int = 0, width: int = 32):
        _require_verified(G)
        self.generator = G
        self.width = width
        self.seed = seed
        self._tables = _byte_tables(G.modulus, (width + 7) // 8)
        self._offset = diffuse(0, G, seed)
        self._np_tables = None

    @property
    def m(self) -> int:
        return self.generator.degree

    def __call__(self, value: int) -> int:
        if value >> self.width:
            raise LengthMismatch(f"input wider than {self.width} bits")
        out = self._offset
        for table in self._tables:
            out ^= table[value & 0xFF]
            value >>= 8
        return out

    def many(self, values: np.ndarray) -> np.ndarray:
        """Vectorized diffusion of an array of inputs (width <= 64)."""
        if self._np_tables is None:
            self._np_tables = [np.array(t, dtype=np.uint64) for t in self._tables]
        v = np.asarray(values, dtype=np.uint64)
        out = np.full(v.shape, self._offset, dtype=np.uint64)
        for k, table in enumerate(self._np_tables):
            out ^= table[(v >> np.uint64(8 * k)) & np.uint64(0xFF)]
        return out


@lru_cache(maxsize=256)
def _byte_tables(modulus: int, n_bytes: int) -> tuple[tuple[int, ...], ...]:
    G = Generator(modulus, True)
    m = G.degree
    tables = []
    for k in range(n_bytes):
        unit = [poly_mod(1 << (8 * k + j + m), modulus) for j in range(8)]
        table = [0] * 256
        for b in range(1, 256):
            low = b & -b
            table[b] = table[b ^ low] ^ unit[low.bit_length() - 1]
        tables.append(tuple(table))
    return tuple(tables)
