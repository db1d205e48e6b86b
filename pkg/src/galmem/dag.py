"""Multi-hop reasoning over relation records held in a BlockMemory.

A record (subject, relation, object) is written under the key
bind(node_hv(subject), label_hv(relation)) with the object id as entry
address. A traversal chains reads; the confidence of a path (CR2) is the
product of the per-read CR1 values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .errors import DegenerateFit, NotFound
from .gf2 import BitPolynomial
from .hdc import Codebook, Hypervector, bind
from .memory import BlockMemory, RRMode, VoteResult


@dataclass(frozen=True)
class RelationRecord:
    subject: int
    relation: int
    object: int


@dataclass(frozen=True)
class Hop:
    node: int
    relation: int
    result: VoteResult

    @property
    def target(self) -> int:
        return self.result.winner


@dataclass(frozen=True)
class PathTrace:
    start: int
    hops: tuple[Hop, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.hops)

    @property
    def cr1s(self) -> list[float]:
        return [h.result.cr1 for h in self.hops]

    @property
    def cr2(self) -> float:
        out = 1.0
        for h in self.hops:
            out *= h.result.cr1
        return out

    @property
    def nodes(self) -> tuple[int, ...]:
        return (self.start,) + tuple(h.target for h in self.hops)

    @property
    def end(self) -> int:
        return self.hops[-1].target if self.hops else self.start

    def extend(self, relation: int, result: VoteResult) -> "PathTrace":
        return PathTrace(self.start, self.hops + (Hop(self.end, relation, result),))

    def prefix(self, n: int) -> "PathTrace":
        return PathTrace(self.start, self.hops[:n])

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "relations": [h.relation for h in self.hops],
            "cr1": self.cr1s,
            "cr2": self.cr2,
        }


class Ranking(list):
    """Complete paths, best first; early-terminated paths sit in ``partial``."""

    def __init__(self, items=(), partial=()):
        super().__init__(items)
        self.partial = list(partial)


class RelationStore:
    """A BlockMemory plus the codebook that turns ids into keys."""

    def __init__(self, memory: BlockMemory, codebook: Codebook | None = None):
        self.memory = memory
        dim = memory.config.input_bits
        self.codebook = codebook or Codebook(dim)
        if self.codebook.dim != dim:
            raise ValueError(f"codebook dimension {self.codebook.dim} != memory input {dim}")

    def node_hv(self, node: int) -> Hypervector:
        return self.codebook.atom(f"node:{node}")

    def label_hv(self, relation: int) -> Hypervector:
        return self.codebook.atom(f"rel:{relation}")

    def key(self, subject: int, relation: int) -> BitPolynomial:
        hv = bind(self.node_hv(subject), self.label_hv(relation))
        return BitPolynomial(hv.bits, hv.dim)

    def read(self, subject: int, relation: int) -> VoteResult:
        return self.memory.read(self.key(subject, relation))


@dataclass
class LoadReport:
    writes: int = 0
    collisions_per_block: list[int] = field(default_factory=list)
    rescued: int = 0
    poisoned: int = 0

    @property
    def collisions(self) -> int:
        return sum(self.collisions_per_block)

    def to_dict(self) -> dict:
        return {"writes": self.writes, "collisions": self.collisions,
                "collisions_per_block": self.collisions_per_block,
                "rescued": self.rescued, "poisoned": self.poisoned}


def load_edges(store: RelationStore, edges) -> LoadReport:
    """One memory write per record."""
    report = LoadReport(collisions_per_block=[0] * store.memory.n_blocks)
    for e in edges:
        w = store.memory.write(store.key(e.subject, e.relation), e.object)
        report.writes += 1
        for b in w.collided_blocks:
            report.collisions_per_block[b] += 1
    occ = store.memory.occupancy()
    report.rescued, report.poisoned = occ["rescued"], occ["poisoned"]
    return report


def _candidates(step) -> list[int]:
    if isinstance(step, (int, np.integer)):
        return [int(step)]
    return sorted(int(r) for r in step)


def _rank_key(trace: PathTrace):
    return (-trace.cr2, trace.nodes)


def accepts(result: VoteResult, quorum: int) -> bool:
    return result.rescued or result.votes_for_winner >= quorum


def traverse(store: RelationStore, start: int, relations, fs: int,
             quorum: int | None = None) -> Ranking:
    """Beam search along ``relations``, keeping at most ``fs`` paths per hop.

    ``relations[i]`` is the label (or collection of labels) tried at hop i.
    A read counts as a hop only if it wins with at least ``quorum`` votes
    (default: a strict majority of blocks) or is a Rescue hit, which keeps
    reads of absent keys from inventing edges. Paths are ranked by CR2,
    then by node sequence.
    """
    if fs < 1:
        raise ValueError("frontier size must be >= 1")
    relations = list(relations)
    if not relations:
        raise ValueError("need at least one hop")
    n = store.memory.n_blocks
    if quorum is None:
        quorum = n // 2 + 1
    frontier = [PathTrace(start)]
    partial = []
    for hop, step in enumerate(relations):
        successors = []
        for path in frontier:
            grown = False
            for rel in _candidates(step):
                try:
                    result = store.read(path.end, rel)
                except NotFound:
                    continue
                if accepts(result, quorum):
                    successors.append(path.extend(rel, result))
                    grown = True
            if not grown and path.depth:
                partial.append(path)
        successors.sort(key=_rank_key)
        frontier = successors[:fs]
        if not frontier:
            raise NotFound(f"frontier emptied at hop {hop + 1} of {len(relations)}")
    return Ranking(frontier, sorted(partial, key=_rank_key))


def exhaustive_paths(store: RelationStore, start: int, relations,
                     quorum: int | None = None) -> list[PathTrace]:
    """Every accepted path, no pruning; the reference for beam soundness."""
    n = store.memory.n_blocks
    if quorum is None:
        quorum = n // 2 + 1
    paths = [PathTrace(start)]
    for step in relations:
        nxt = []
        for path in paths:
            for rel in _candidates(step):
                try:
                    result = store.read(path.end, rel)
                except NotFound:
                    continue
                if accepts(result, quorum):
                    nxt.append(path.extend(rel, result))
        paths = nxt
    return sorted(paths, key=_rank_key)


def effective_branching(traces) -> float:
    """How many ways CR2 actually separates the surviving paths.

    1.0 when every trace has the same CR2. Otherwise the fraction of
    distinct CR2 values among the traces, scaled by the observed branching
    factor n_traces ** (1 / depth).
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    classes = len({round(t.cr2, 12) for t in traces})
    if classes == 1:
        return 1.0
    depth = max(t.depth for t in traces)
    observed = len(traces) ** (1.0 / depth) if depth else 1.0
    return observed * classes / len(traces)


def cr2_by_depth(traces) -> dict[int, list[float]]:
    """CR2 of every prefix of every trace, grouped by prefix depth."""
    out: dict[int, list[float]] = {}
    for t in traces:
        cr2 = 1.0
        for n, c in enumerate(t.cr1s, start=1):
            cr2 *= c
            out.setdefault(n, []).append(cr2)
    return out


def cr2_by_depth_from_cr1(cr1: np.ndarray) -> dict[int, np.ndarray]:
    """Same grouping for a (traces, depth) array of per-hop CR1 values."""
    prod = np.cumprod(np.asarray(cr1, dtype=float), axis=1)
    return {n + 1: prod[:, n] for n in range(prod.shape[1])}


@dataclass
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    residuals: dict[str, float]
    depths: list[int]
    means: list[float]
    counts: list[int]

    @property
    def best_model(self) -> str:
        return min(self.residuals, key=self.residuals.get)

    def rows(self) -> list[tuple[int, float, float, int]]:
        return [(n, f, math.log(f), c) for n, f, c in zip(self.depths, self.means, self.counts)]

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "residuals": self.residuals,
                "best_model": self.best_model}


def decay_fit(by_depth, aggregate: str = "mean") -> DecayFit:
    """Least-squares fit of log F(n) = a + b n, against two alternatives.

    F(n) is the mean CR2 at depth n (``aggregate="geometric"`` uses the
    geometric mean instead). Residual sums are reported in F-space for the
    multiplicative fit, an additive F = 1 - c n, and a power law F = c n^-a.
    """
    depths = sorted(by_depth)
    if len(depths) < 3:
        raise DegenerateFit(f"need at least 3 depths, got {len(depths)}")
    means, counts = [], []
    for n in depths:
        vals = np.asarray(by_depth[n], dtype=float)
        if len(vals) == 0:
            raise DegenerateFit(f"no traces at depth {n}")
        if (vals <= 0).any() if aggregate == "geometric" else vals.mean() <= 0:
            raise DegenerateFit(f"non-positive CR2 at depth {n}")
        f = float(np.exp(np.log(vals).mean())) if aggregate == "geometric" else float(vals.mean())
        means.append(f)
        counts.append(len(vals))
    x = np.array(depths, dtype=float)
    F = np.array(means)
    y = np.log(F)
    slope, intercept = np.polyfit(x, y, 1)
    y_hat = intercept + slope * x
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float(((y - y_hat) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    c_add = float((x * (1.0 - F)).sum() / (x * x).sum())
    a_pow, logc_pow = np.polyfit(np.log(x), y, 1)
    residuals = {
        "multiplicative": float(((np.exp(y_hat) - F) ** 2).sum()),
        "additive": float(((1.0 - c_add * x - F) ** 2).sum()),
        "power": float(((np.exp(logc_pow + a_pow * np.log(x)) - F) ** 2).sum()),
    }
    return DecayFit(float(slope), float(intercept), r2, residuals, depths, means, counts)


def simulate_replay(p, trials: int, rng_seed: int = 0) -> float:
    """Fraction of trials in which every hop i succeeds with probability p[i]."""
    rng = make_rng(rng_seed, 0)
    p = np.asarray(p, dtype=float)
    ok = np.ones(trials, dtype=bool)
    for pi in p:
        ok &= rng.random(trials) < pi
    return float(ok.mean())


# -- synthetic workloads ----------------------------------------------------


def synthetic_dag(branching: int, depth: int, rng_seed: int = 0,
                  roots: int = 1, max_edges: int | None = None):
    """A forest in which every internal node has ``branching`` children.

    Child i hangs off relation label i. Node ids are distinct random 63-bit
    values so every edge carries its own entry address. Returns
    (root ids, edge list), edges in breadth-first order.
    """
    rng = make_rng(rng_seed, 0)
    seen: set[int] = set()

    def fresh():
        while True:
            v = int(rng.integers(1, 1 << 63))
            if v not in seen:
                seen.add(v)
                return v

    root_ids = [fresh() for _ in range(roots)]
    level, edges = list(root_ids), []
    for _ in range(depth):
        nxt = []
        for node in level:
            for label in range(branching):
                if max_edges is not None and len(edges) >= max_edges:
                    return root_ids, edges
                child = fresh()
                edges.append(RelationRecord(node, label, child))
                nxt.append(child)
        level = nxt
    return root_ids, edges


def inject_abstentions(store: RelationStore, edges, per_edge: int = 0,
                       rate: float = 0.0, rng_seed: int = 0) -> int:
    """Poison slots of stored edges (Don't Care memories only).

    With ``per_edge`` = k every edge ends up with exactly N - k blocks voting
    for its object: blocks still voting for it are poisoned at random until
    that holds, so earlier accidental collisions count towards k. With
    ``rate``, each edge independently loses one random block with that
    probability. Returns the number of slots poisoned; raises ValueError if
    an edge already has fewer than N - k votes.
    """
    mem = store.memory
    if mem.config.rr_mode != RRMode.DONT_CARE:
        raise ValueError("abstentions can only be injected in Don't Care mode")
    rng = make_rng(rng_seed, 1)
    n = mem.n_blocks
    total = 0
    for e in edges:
        key = store.key(e.subject, e.relation)
        if per_edge:
            voters = [b for b, v in enumerate(mem.block_votes(key)) if v == e.object]
            extra = len(voters) - (n - per_edge)
            if extra < 0:
                raise ValueError(f"edge {e} already has only {len(voters)} votes")
            if extra:
                pick = rng.choice(voters, size=extra, replace=False)
                total += len(mem.inject_abstention(key, sorted(int(b) for b in pick)))
        if rate > 0 and rng.random() < rate:
            total += len(mem.inject_abstention(key, [int(rng.integers(n))]))
    return total


def expected_collisions(n_writes: int, slots: int) -> tuple[float, float]:
    """Mean and variance of Don't Care collisions in one block.

    Write i collides when its (uniform) address was touched by any of the
    i - 1 earlier writes; the variance sums the per-write Bernoulli terms.
    """
    i = np.arange(n_writes, dtype=float)
    p = 1.0 - (1.0 - 1.0 / slots) ** i
    return float(p.sum()), float((p * (1 - p)).sum())


def parse_edges(lines) -> list[RelationRecord]:
    """``subject<TAB>relation<TAB>object`` lines, decimal ids; '#' starts a comment."""
    out = []
    for no, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"line {no}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            out.append(RelationRecord(*(int(p) for p in parts)))
        except ValueError:
            raise ValueError(f"line {no}: ids must be decimal integers") from None
    return out
