"""Quasi-orthogonality statistics for the diffusion map.

Exact Hamming-weight laws on GF(2^m)*, Monte Carlo concentration checks,
the single-bit avalanche orbit, and the random sparse projection baseline
it is compared against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._rng import make_rng, worker_count
from .errors import DegreeTooLarge, LengthMismatch, OrbitTooLong
from .gf2 import BitPolynomial, Diffuser, Generator, _require_verified, lfsr_step, poly_mod

MAX_ENUMERATION_DEGREE = 20
CHUNK = 1 << 14


@dataclass(frozen=True)
class WeightHistogram:
    counts: tuple[int, ...]
    total: int

    def __post_init__(self):
        if sum(self.counts) != self.total:
            raise ValueError("histogram counts do not sum to total")

    @classmethod
    def from_weights(cls, weights, m: int) -> "WeightHistogram":
        counts = np.bincount(np.asarray(weights, dtype=np.int64), minlength=m + 1)
        return cls(tuple(int(c) for c in counts[: m + 1]), int(counts.sum()))

    @property
    def m(self) -> int:
        return len(self.counts) - 1

    def mean(self) -> Fraction:
        return Fraction(sum(w * c for w, c in enumerate(self.counts)), self.total)

    def variance(self) -> Fraction:
        mu = self.mean()
        second = Fraction(sum(w * w * c for w, c in enumerate(self.counts)), self.total)
        return second - mu * mu

    def tail(self, epsilon: float) -> Fraction:
        m = self.m
        bad = sum(c for w, c in enumerate(self.counts) if abs(w / m - 0.5) > epsilon)
        return Fraction(bad, self.total)


@dataclass
class QodReport:
    m: int
    L: int
    epsilon: float
    mean: Fraction | float
    variance: Fraction | float
    empirical_tail: float
    hoeffding_bound: float
    exact_tail: float
    slack: float
    samples: int
    rng_seed: int | None = None
    rejected: int = 0
    exhaustive: bool = False
    histogram: WeightHistogram | None = field(default=None, repr=False)

    @property
    def within_bound(self) -> bool:
        return self.empirical_tail <= self.hoeffding_bound + self.slack

    def to_dict(self) -> dict:
        def num(v):
            return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else v

        return {
            "m": self.m,
            "L": self.L,
            "epsilon": self.epsilon,
            "mean": num(self.mean),
            "mean_float": float(self.mean),
            "variance": float(self.variance),
            "empirical_tail": self.empirical_tail,
            "exact_tail": self.exact_tail,
            "hoeffding_bound": self.hoeffding_bound,
            "slack": self.slack,
            "within_bound": self.within_bound,
            "samples": self.samples,
            "rejected": self.rejected,
            "rng_seed": self.rng_seed,
            "exhaustive": self.exhaustive,
        }


def hw_moments_closed_form(m: int) -> tuple[Fraction, Fraction]:
    """Mean and variance of HW over GF(2^m)*, i.e. Binomial(m, 1/2) given >= 1."""
    if m < 2:
        raise ValueError("m must be >= 2")
    nz = 1 - Fraction(1, 2**m)
    mean = Fraction(m * 2 ** (m - 1), 2**m - 1)
    var = Fraction(m, 4) / nz - Fraction(m * m, 4) * Fraction(1, 2**m) / (nz * nz)
    return mean, var


def binomial_conditioned_counts(m: int) -> tuple[int, ...]:
    return (0,) + tuple(math.comb(m, w) for w in range(1, m + 1))


def exact_tail(m: int, epsilon: float) -> Fraction:
    """P(|HW/m - 1/2| > epsilon) for HW uniform over the nonzero residues."""
    bad = sum(math.comb(m, w) for w in range(1, m + 1) if abs(w / m - 0.5) > epsilon)
    return Fraction(bad, 2**m - 1)


def hoeffding_bound(m: int, epsilon: float) -> float:
    return 2.0 * math.exp(-2.0 * epsilon * epsilon * m)


def multiplicative_orbit(G: Generator) -> np.ndarray:
    """x^0, x^1, ..., x^(2^m - 2) mod G as an array."""
    m = G.degree
    if m > MAX_ENUMERATION_DEGREE:
        raise DegreeTooLarge(f"enumeration capped at m={MAX_ENUMERATION_DEGREE}, got {m}")
    n = (1 << m) - 1
    out = np.empty(n, dtype=np.uint32)
    s, mod, top = 1, G.modulus, 1 << m
    for k in range(n):
        out[k] = s
        s <<= 1
        if s & top:
            s ^= mod
    return out


def hw_distribution_exact(G: Generator) -> WeightHistogram:
    """Weight histogram of Psi over every nonzero residue.

    Psi permutes the nonzero residues, so this walks the powers of x once and
    histograms the weights of x^m * x^k.
    """
    _require_verified(G)
    orbit = multiplicative_orbit(G)
    if len(np.unique(orbit)) != len(orbit) or orbit.min() == 0:
        raise ValueError(f"{G.serialize()} does not generate the full multiplicative group")
    # x^m * x^k runs over the same orbit, shifted by m positions
    images = np.roll(orbit, -G.degree)
    return WeightHistogram.from_weights(np.bitwise_count(images), G.degree)


def qod_exhaustive(G: Generator, epsilon: float = 0.25) -> QodReport:
    hist = hw_distribution_exact(G)
    m = G.degree
    tail = float(hist.tail(epsilon))
    return QodReport(
        m=m, L=m, epsilon=epsilon, mean=hist.mean(), variance=hist.variance(),
        empirical_tail=tail, exact_tail=float(exact_tail(m, epsilon)),
        hoeffding_bound=hoeffding_bound(m, epsilon), slack=0.0,
        samples=hist.total, exhaustive=True, histogram=hist,
    )


def _random_words(rng: np.random.Generator, n: int, L: int) -> np.ndarray:
    words = rng.integers(0, 1 << 63, size=n, dtype=np.uint64, endpoint=True) if L == 64 else None
    if words is None:
        words = rng.integers(0, 1 << L, size=n, dtype=np.uint64, endpoint=False)
    return words


def _sample_chunk(G, L, n, rng_seed, stream):
    """Weights of Psi(delta) for n deltas drawn uniformly off the kernel."""
    rng = make_rng(rng_seed, stream)
    m = G.degree
    if L <= 64:
        psi = Diffuser(G, 0, L)
        weights = np.empty(0, dtype=np.int64)
        rejected = 0
        while len(weights) < n:
            out = psi.many(_random_words(rng, n - len(weights), L))
            keep = out != 0
            rejected += int((~keep).sum())
            weights = np.concatenate([weights, np.bitwise_count(out[keep]).astype(np.int64)])
        return weights, rejected
    weights, rejected = [], 0
    n_bytes = (L + 7) // 8
    while len(weights) < n:
        delta = int.from_bytes(rng.bytes(n_bytes), "little") & ((1 << L) - 1)
        r = poly_mod(delta, G.modulus)
        if r == 0:
            rejected += 1
            continue
        weights.append(poly_mod(r << m, G.modulus).bit_count())
    return np.array(weights, dtype=np.int64), rejected


def concentration_check(G: Generator, L: int, epsilon: float, samples: int,
                        rng_seed: int = 0) -> QodReport:
    """Monte Carlo tail of |HW(Psi(delta))/m - 1/2| against the Hoeffding bound.

    Deltas are drawn uniformly from the length-L inputs with nonzero residue
    (rejection on the kernel). Sampling is split into fixed-size chunks, each
    with its own RNG stream, so the counts do not depend on GALMEM_THREADS.
    """
    _require_verified(G)
    m = G.degree
    if L <= m:
        raise ValueError(f"need L > m, got L={L}, m={m}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = [min(CHUNK, samples - s) for s in range(0, samples, CHUNK)]

    def run(i):
        return _sample_chunk(G, L, sizes[i], rng_seed, i)

    workers = worker_count()
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    hist = WeightHistogram.from_weights(np.concatenate([p[0] for p in parts]), m)
    rejected = sum(p[1] for p in parts)
    p_exact = float(exact_tail(m, epsilon))
    return QodReport(
        m=m, L=L, epsilon=epsilon, mean=float(hist.mean()), variance=float(hist.variance()),
        empirical_tail=float(hist.tail(epsilon)), exact_tail=p_exact,
        hoeffding_bound=hoeffding_bound(m, epsilon),
        slack=3.0 * math.sqrt(p_exact * (1 - p_exact) / samples),
        samples=samples, rng_seed=rng_seed, rejected=rejected, histogram=hist,
    )


def avalanche_orbit(G: Generator, L: int) -> list[int]:
    """[Psi(e_0), ..., Psi(e_{L-1})]: successive LFSR states from x^m."""
    _require_verified(G)
    m = G.degree
    if L > (1 << m) - 1:
        raise OrbitTooLong(f"L={L} exceeds the orbit length {(1 << m) - 1}")
    out = []
    s = poly_mod(1 << m, G.modulus)
    for _ in range(L):
        out.append(s)
        s = lfsr_step(s, G)
    return out


# -- random sparse projection baseline ------------------------------------


@dataclass(frozen=True)
class SparseProjection:
    """m parity rows, each reading exactly k distinct input positions."""

    rows: tuple[tuple[int, ...], ...]
    L: int
    k: int
    rng_seed: int | None = None

    def __post_init__(self):
        for row in self.rows:
            if len(set(row)) != self.k or len(row) != self.k:
                raise ValueError("every row needs exactly k distinct indices")
            if min(row) < 0 or max(row) >= self.L:
                raise ValueError("row index out of range")

    @property
    def m(self) -> int:
        return len(self.rows)

    @classmethod
    def sample(cls, m: int, L: int, k: int, rng_seed: int = 0, stream: int = 0):
        if not 1 <= k <= L:
            raise ValueError(f"need 1 <= k <= L, got k={k}, L={L}")
        rng = make_rng(rng_seed, stream)
        rows = tuple(tuple(sorted(int(i) for i in rng.choice(L, size=k, replace=False)))
                     for _ in range(m))
        return cls(rows, L, k, rng_seed)

    def masks(self) -> list[int]:
        return [sum(1 << i for i in row) for row in self.rows]


def rsp_project(W: SparseProjection, x: BitPolynomial) -> int:
    """Row-wise parity W x over GF(2); bit i of the result is row i."""
    if x.length != W.L:
        raise LengthMismatch(f"input length {x.length} != projection width {W.L}")
    out = 0
    for i, mask in enumerate(W.masks()):
        out |= ((x.value & mask).bit_count() & 1) << i
    return out


def rsp_expected_distance(m: int, L: int, k: int, d: int) -> float:
    """m (1 - (1 - d/L)^k) / 2: the textbook mean output distance."""
    if not 1 <= k <= L or not 0 <= d <= L:
        raise ValueError("need 1 <= k <= L and 0 <= d <= L")
    return m * (1.0 - (1.0 - d / L) ** k) / 2.0


def rsp_parity_expected_distance(m: int, L: int, k: int, d: int) -> float:
    """Exact mean distance for parity rows with k distinct taps.

    A row's output flips iff it reads an odd number of the d differing
    positions; that count is hypergeometric.
    """
    if not 1 <= k <= L or not 0 <= d <= L:
        raise ValueError("need 1 <= k <= L and 0 <= d <= L")
    odd = sum(math.comb(d, j) * math.comb(L - d, k - j) for j in range(1, k + 1, 2))
    return m * odd / math.comb(L, k)


def _row_taps(rng, n_rows: int, L: int, k: int) -> np.ndarray:
    """(n_rows, k) uniform k-subsets of range(L)."""
    if k * k > L:
        return np.argpartition(rng.random((n_rows, L)), k - 1, axis=1)[:, :k]
    # few taps: draw with replacement, redraw rows that repeat an index
    taps = rng.integers(0, L, size=(n_rows, k))
    while True:
        s = np.sort(taps, axis=1)
        bad = np.flatnonzero((s[:, 1:] == s[:, :-1]).any(axis=1))
        if not len(bad):
            return taps
        taps[bad] = rng.integers(0, L, size=(len(bad), k))


def rsp_monte_carlo_distance(m: int, L: int, k: int, d: int, trials: int,
                             rng_seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of D over fresh projection draws.

    The input pair differs on positions 0..d-1; with uniformly drawn rows
    any fixed pair at distance d has the same law.
    """
    rng = make_rng(rng_seed, 0)
    dist = np.zeros(trials, dtype=np.int64)
    for start in range(0, trials, 4096):
        n = min(4096, trials - start)
        taps = _row_taps(rng, n * m, L, k)
        flips = ((taps < d).sum(axis=1) & 1).reshape(n, m)
        dist[start:start + n] = flips.sum(axis=1)
    return float(dist.mean()), float(dist.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0


@dataclass
class WorstCaseComparison:
    rows: list[tuple[int, int, int]]
    m: int
    L: int
    k: int
    trials: int
    rng_seed: int

    def summary(self) -> dict:
        psi = np.array([r[1] for r in self.rows])
        rsp = np.array([r[2] for r in self.rows])
        return {
            "m": self.m, "L": self.L, "k": self.k, "trials": self.trials,
            "rng_seed": self.rng_seed,
            "psi_mean": float(psi.mean()), "psi_min": int(psi.min()),
            "psi_max": int(psi.max()), "rsp_max": int(rsp.max()),
            "rsp_mean_of_max": float(rsp.mean()),
        }


def compare_worst_case(G: Generator, k: int, L: int, trials: int,
                       rng_seed: int = 0) -> WorstCaseComparison:
    """Single-bit flips e_j: HW(Psi(e_j)) next to the worst RSP distance.

    For a single flipped input bit the RSP distance is the number of rows
    that tap position j (the column weight), typically near m k / L. The
    RSP column holds the max over draws.
    """
    m = G.degree
    if not 1 <= k <= L:
        raise ValueError(f"need 1 <= k <= L, got k={k}, L={L}")
    psi = avalanche_orbit(G, L)
    rng = make_rng(rng_seed, 0)
    worst = np.zeros(L, dtype=np.int64)
    for _ in range(trials):
        taps = _row_taps(rng, m, L, k)
        worst = np.maximum(worst, np.bincount(taps.ravel(), minlength=L))
    rows = [(j, psi[j].bit_count(), int(worst[j])) for j in range(L)]
    return WorstCaseComparison(rows, m, L, k, trials, rng_seed)
