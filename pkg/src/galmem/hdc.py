"""Binding, bundling and cleanup over fixed-width binary hypervectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyBundle
from .gf2 import Diffuser, Generator, builtin, diffuse


@dataclass(frozen=True)
class Hypervector:
    bits: int
    dim: int

    def __post_init__(self):
        if self.dim < 1 or self.bits < 0 or self.bits.bit_length() > self.dim:
            raise ValueError(f"bits do not fit in dimension {self.dim}")

    def __xor__(self, other: "Hypervector") -> "Hypervector":
        _check(self, other)
        return Hypervector(self.bits ^ other.bits, self.dim)

    def weight(self) -> int:
        return self.bits.bit_count()

    def to_array(self) -> np.ndarray:
        raw = np.frombuffer(self.bits.to_bytes((self.dim + 7) // 8, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.dim]

    @classmethod
    def from_array(cls, arr) -> "Hypervector":
        arr = np.asarray(arr, dtype=np.uint8)
        packed = np.packbits(arr, bitorder="little")
        return cls(int.from_bytes(packed.tobytes(), "little"), len(arr))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator) -> "Hypervector":
        return cls.from_array(rng.integers(0, 2, size=dim, dtype=np.uint8))


def _check(a: Hypervector, b: Hypervector):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} != {b.dim}")


def rotl(v: Hypervector, r: int = 1) -> Hypervector:
    r %= v.dim
    mask = (1 << v.dim) - 1
    return Hypervector(((v.bits << r) | (v.bits >> (v.dim - r))) & mask, v.dim)


def role_shift(role: Hypervector) -> int:
    return role.bits % role.dim


def bind(role: Hypervector, filler: Hypervector) -> Hypervector:
    """role XOR rotl(filler, role mod D).

    The rotation is keyed by the role, so swapping fillers between two roles
    moves them by different amounts; a role-independent shift would cancel
    under XOR. Invertible given the role; not commutative; bind(0, f) == f.
    """
    _check(role, filler)
    return Hypervector(role.bits ^ rotl(filler, role_shift(role)).bits, role.dim)


def unbind(bound: Hypervector, role: Hypervector) -> Hypervector:
    _check(bound, role)
    return rotl(Hypervector(bound.bits ^ role.bits, bound.dim), -role_shift(role))


def bundle(vs) -> Hypervector:
    """Bitwise strict majority; an even split gives 0."""
    vs = list(vs)
    if not vs:
        raise EmptyBundle("cannot bundle an empty list")
    for v in vs[1:]:
        _check(vs[0], v)
    if len(vs) == 1:
        return vs[0]
    counts = np.sum([v.to_array().astype(np.int32) for v in vs], axis=0)
    return Hypervector.from_array(2 * counts > len(vs))


def hamming(a: Hypervector, b: Hypervector) -> int:
    _check(a, b)
    return (a.bits ^ b.bits).bit_count()


class Codebook:
    """Named atoms generated from their names.

    The UTF-8 name is read as a polynomial and diffused to a nonzero residue
    s; the atom is the concatenation of s, x^m s, x^2m s, ... (m bits each),
    truncated to ``dim``. Two names therefore differ by the same chain
    started from the diffused difference, which sits near dim/2 in weight.
    """

    def __init__(self, dim: int, generator: Generator | None = None, seed: int = 0):
        self.dim = dim
        self.generator = generator or builtin(24)
        self.seed = seed % (1 << self.generator.degree)
        self._step = Diffuser(self.generator, 0, self.generator.degree)
        self._atoms: dict[str, Hypervector] = {}

    def __len__(self):
        return len(self._atoms)

    def __contains__(self, name):
        return name in self._atoms

    def __getitem__(self, name: str) -> Hypervector:
        return self._atoms[name]

    def names(self) -> list[str]:
        return sorted(self._atoms)

    def atom(self, name: str) -> Hypervector:
        """Return (and register) the atom for ``name``."""
        hv = self._atoms.get(name)
        if hv is None:
            hv = self._atoms[name] = self.generate(name)
        return hv

    def generate(self, name: str) -> Hypervector:
        data = name.encode("utf-8")
        m = self.generator.degree
        salt = b""
        while True:
            # trailing 0x01 keeps names that differ by trailing NULs apart
            s = diffuse(int.from_bytes(data + salt + b"\x01", "little"), self.generator, self.seed)
            if s:
                break
            salt += b"#"
        bits, offset = 0, 0
        while offset < self.dim:
            bits |= s << offset
            s = self._step(s)
            offset += m
        return Hypervector(bits & ((1 << self.dim) - 1), self.dim)

    def register(self, name: str, hv: Hypervector) -> Hypervector:
        if hv.dim != self.dim:
            raise DimensionMismatch(f"atom dimension {hv.dim} != codebook dimension {self.dim}")
        self._atoms[name] = hv
        return hv

    def subset(self, names) -> "Codebook":
        """A codebook holding only ``names`` (same generator and seed)."""
        book = Codebook(self.dim, self.generator, self.seed)
        for n in names:
            book.register(n, self.atom(n))
        return book

    def cleanup(self, v: Hypervector) -> tuple[str, int]:
        return cleanup(v, self)


def cleanup(v: Hypervector, book: Codebook) -> tuple[str, int]:
    """Nearest atom by Hamming distance; ties go to the smallest name."""
    if v.dim != book.dim:
        raise DimensionMismatch(f"query dimension {v.dim} != codebook dimension {book.dim}")
    if not len(book):
        raise ValueError("codebook is empty")
    best = min(book.names(), key=lambda n: ((v.bits ^ book[n].bits).bit_count(), n))
    return best, (v.bits ^ book[best].bits).bit_count()


def sentence_demo(dim: int = 1024, seed: int = 0) -> dict:
    """Role-filler encoding of "the dog bit the man" against its swap."""
    book = Codebook(dim, seed=seed)
    subj, verb, obj = book.atom("Subject"), book.atom("Verb"), book.atom("Object")
    dog, bite, man = book.atom("Dog"), book.atom("Bite"), book.atom("Man")
    fillers = book.subset(["Dog", "Bite", "Man"])

    repr1 = bundle([bind(subj, dog), bind(verb, bite), bind(obj, man)])
    repr2 = bundle([bind(subj, man), bind(verb, bite), bind(obj, dog)])

    def query(r):
        return {role: cleanup(unbind(r, book[role]), fillers)[0]
                for role in ("Subject", "Verb", "Object")}

    q1, q2 = query(repr1), query(repr2)
    hd = hamming(repr1, repr2) / dim
    ok = (repr1 != repr2 and q1 == {"Subject": "Dog", "Verb": "Bite", "Object": "Man"}
          and q2 == {"Subject": "Man", "Verb": "Bite", "Object": "Dog"})
    return {"dim": dim, "seed": seed, "fractional_hd": hd, "repr1": q1, "repr2": q2,
            "distinct": repr1 != repr2, "recovered": ok}
