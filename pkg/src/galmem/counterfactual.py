"""Abduction, intervention and prediction over two non-interfering stores.

The factual scaffold (Pi_A) holds world records and the causal mechanisms.
A query abduces the background value U from evidence on Pi_A, builds a
fresh counterfactual scaffold (Pi_B, same generators, new seeds) holding
the mechanisms with X's mechanism replaced by do(X = x), and predicts Y
there. The estimate is the ratio of the two path confidences.

Variable values are codebook atoms named by strings. A mechanism is a
relation record (cause value, mechanism label, effect value), so prediction
is an ordinary traversal.
"""

from __future__ import annotations

import enum
import hashlib
import math
import warnings
from dataclasses import dataclass, field

from ._rng import make_rng
from .dag import PathTrace, RelationRecord, RelationStore, traverse
from .errors import AbductionFailed, DegenerateFactual, NotFound, RoleAbsent
from .hdc import Codebook, Hypervector, bind, bundle, cleanup, unbind
from .memory import BlockMemory, MemoryConfig, RRMode, VoteResult


def name_id(name: str) -> int:
    """Stable 64-bit id of a value or label name."""
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


class ScaffoldRole(enum.Enum):
    FACTUAL = "factual"
    COUNTERFACTUAL = "counterfactual"


@dataclass(frozen=True)
class WorldRecord:
    bindings: tuple[tuple[str, str], ...]
    hv: Hypervector

    @property
    def roles(self) -> dict[str, str]:
        return dict(self.bindings)

    def __getitem__(self, role: str) -> str:
        return self.roles[role]


@dataclass(frozen=True)
class Mechanism:
    cause: str
    label: str
    effect: str


class Scaffold:
    """A RelationStore plus the name registry and stored world records."""

    def __init__(self, role: ScaffoldRole, config: MemoryConfig, codebook: Codebook | None = None):
        self.role = role
        self.store = RelationStore(BlockMemory(config), codebook)
        self.names: dict[int, str] = {}
        self.worlds: dict[int, WorldRecord] = {}
        self.mechanisms: list[Mechanism] = []

    @property
    def memory(self) -> BlockMemory:
        return self.store.memory

    @property
    def codebook(self) -> Codebook:
        return self.store.codebook

    def _id(self, name: str) -> int:
        i = name_id(name)
        other = self.names.setdefault(i, name)
        if other != name:
            raise ValueError(f"id clash between {other!r} and {name!r}")
        return i

    def role_hv(self, role: str) -> Hypervector:
        return self.codebook.atom(f"role:{role}")

    def value_hv(self, value: str) -> Hypervector:
        return self.codebook.atom(f"val:{value}")

    def record(self, bindings: dict[str, str]) -> WorldRecord:
        """Bundle role-filler bindings (each role once) into a record."""
        items = tuple(sorted(bindings.items()))
        hv = bundle([bind(self.role_hv(r), self.value_hv(v)) for r, v in items])
        return WorldRecord(items, hv)

    def evidence_key(self, evidence: dict[str, str]) -> Hypervector:
        key = Hypervector(0, self.codebook.dim)
        for r, v in sorted(evidence.items()):
            key = key ^ bind(self.role_hv(r), self.value_hv(v))
        return key

    def add_world(self, bindings: dict[str, str], evidence_roles=("X", "Y")) -> WorldRecord:
        """Store a world under the key built from its evidence roles."""
        rec = self.record(bindings)
        wid = len(self.worlds) + 1
        self.worlds[wid] = rec
        key = self.evidence_key({r: bindings[r] for r in evidence_roles})
        self.memory.write(key.bits, wid)
        return rec

    def add_mechanism(self, cause: str, label: str, effect: str) -> RelationRecord:
        rec = RelationRecord(self._id(cause), self._id(label), self._id(effect))
        self.memory.write(self.store.key(rec.subject, rec.relation), rec.object)
        self.mechanisms.append(Mechanism(cause, label, effect))
        return rec

    def mechanism_key(self, cause: str, label: str):
        return self.store.key(self._id(cause), self._id(label))

    def inject(self, cause: str, label: str, blocks) -> list[int]:
        """Poison the given blocks of one mechanism's key (Don't Care only)."""
        return self.memory.inject_abstention(self.mechanism_key(cause, label), blocks)

    def chain(self, start: str, labels, fs: int = 1) -> PathTrace:
        ranking = traverse(self.store, self._id(start), [[self._id(l)] for l in labels], fs)
        return ranking[0]

    def resolve(self, node: int) -> str:
        return self.names[node]

    def snapshot(self) -> bytes:
        return self.memory.snapshot()


@dataclass(frozen=True)
class Abduction:
    u_hat: str
    cr1: float
    world: int
    vote: VoteResult


def abduce(piA: Scaffold, evidence: dict[str, str], u_role: str = "U") -> Abduction:
    """Retrieve the world matching ``evidence`` and clean up its U filler."""
    try:
        vote = piA.memory.read(piA.evidence_key(evidence).bits)
    except NotFound as exc:
        raise AbductionFailed(f"no stored world matches {evidence}", exc.result) from None
    record = piA.worlds.get(vote.winner)
    if record is None:
        raise AbductionFailed(f"winning entry {vote.winner} is not a world record", vote)
    values = [v for r, v in record.bindings if r == u_role]
    if not values:
        raise RoleAbsent(u_role)
    fillers = piA.codebook.subset(sorted({f"val:{v}" for _, v in record.bindings}))
    name, _ = cleanup(unbind(record.hv, piA.role_hv(u_role)), fillers)
    return Abduction(name[len("val:"):], vote.cr1, vote.winner, vote)


def intervene(scaffold: Scaffold, record: WorldRecord, role: str, new_value: str) -> WorldRecord:
    """Replace the filler of ``role``; the other bindings are re-bundled as-is."""
    roles = record.roles
    if role not in roles:
        raise RoleAbsent(role)
    roles[role] = new_value
    return scaffold.record(roles)


def query_role(scaffold: Scaffold, record: WorldRecord, role: str) -> str:
    """Unbind ``role`` from the record and clean up against its fillers."""
    fillers = scaffold.codebook.subset(sorted({f"val:{v}" for _, v in record.bindings}))
    return cleanup(unbind(record.hv, scaffold.role_hv(role)), fillers)[0][len("val:"):]


def fresh_seeds(config: MemoryConfig, rng_seed: int) -> tuple[int, ...]:
    """Per-block seeds that differ from ``config``'s in every block."""
    rng = make_rng(rng_seed, 0x0CF)
    out = []
    for s in config.seeds:
        t = s
        while t == s:
            t = int(rng.integers(0, 1 << config.m))
        out.append(t)
    return tuple(out)


def counterfactual_scaffold(piA: Scaffold, rng_seed: int = 0) -> Scaffold:
    cfg = piA.memory.config.with_seeds(fresh_seeds(piA.memory.config, rng_seed))
    return Scaffold(ScaffoldRole.COUNTERFACTUAL, cfg, piA.codebook)


def populate_intervened(piB: Scaffold, mechanisms, u_hat: str, x_label: str, new_x: str):
    """Mechanisms, with U's link through ``x_label`` replaced by do(X = new_x)."""
    piB.add_mechanism(u_hat, x_label, new_x)
    for mech in mechanisms:
        if mech.label == x_label and mech.cause == u_hat:
            continue
        piB.add_mechanism(mech.cause, mech.label, mech.effect)


def predict(piB: Scaffold, u_hat: str, x: str, labels=("f_X", "f_Y")) -> tuple[str, PathTrace]:
    """Walk U -> X -> Y in Pi_B; returns the predicted Y and its trace."""
    trace = piB.chain(u_hat, labels)
    if piB.resolve(trace.hops[0].target) != x:
        warnings.warn(f"first hop reached {piB.resolve(trace.hops[0].target)!r}, not {x!r}")
    return piB.resolve(trace.end), trace


def estimate(factual: PathTrace, counterfactual: PathTrace) -> float:
    """Counterfactual CR2 over factual CR2, unclamped."""
    if not factual.hops or not counterfactual.hops:
        raise ValueError("both traces need at least one hop")
    if factual.cr2 == 0:
        raise DegenerateFactual("factual CR2 is zero")
    if factual.depth != counterfactual.depth:
        warnings.warn(f"traces differ in depth ({factual.depth} vs {counterfactual.depth}); "
                      "no normalization applied")
    return counterfactual.cr2 / factual.cr2


@dataclass
class CounterfactualResult:
    u_hat: str
    y_hat: str
    ratio: float
    factual: PathTrace
    counterfactual: PathTrace
    abduction: Abduction
    notes: list[str] = field(default_factory=list)

    @property
    def factual_cr2(self) -> float:
        return self.factual.cr2

    @property
    def counterfactual_cr2(self) -> float:
        return self.counterfactual.cr2

    def to_dict(self) -> dict:
        return {
            "u_hat": self.u_hat,
            "y_hat": self.y_hat,
            "ratio": self.ratio,
            "factual_cr2": self.factual_cr2,
            "counterfactual_cr2": self.counterfactual_cr2,
            "abduction_cr1": self.abduction.cr1,
            "factual_cr1": self.factual.cr1s,
            "counterfactual_cr1": self.counterfactual.cr1s,
        }


def run_query(piA: Scaffold, evidence: dict[str, str], intervention: dict[str, str],
              labels=("f_X", "f_Y"), rng_seed: int = 0, inject_b=()) -> CounterfactualResult:
    """Abduce on Pi_A, intervene, predict on a fresh Pi_B, estimate.

    ``inject_b`` lists (cause, label, blocks) abstentions to apply in Pi_B
    after it is populated. Pi_B is discarded afterwards.
    """
    if len(intervention) != 1:
        raise ValueError("exactly one intervened variable is supported")
    (x_role, new_x), = intervention.items()
    ab = abduce(piA, evidence)
    factual = piA.chain(ab.u_hat, labels)
    piB = counterfactual_scaffold(piA, rng_seed)
    populate_intervened(piB, piA.mechanisms, ab.u_hat, labels[0], new_x)
    for cause, label, blocks in inject_b:
        piB.inject(cause, label, blocks)
    y_hat, cf = predict(piB, ab.u_hat, new_x, labels)
    return CounterfactualResult(ab.u_hat, y_hat, estimate(factual, cf), factual, cf, ab)


def toy_chain(rr_mode=RRMode.RESCUE, n_blocks: int = 10, m: int = 10, segment_bits: int = 64,
              seed: int = 0) -> Scaffold:
    """U -> X -> Y with one stored world (u0, x1, y1) and both X mechanisms."""
    cfg = MemoryConfig.unified(n_blocks, m, segment_bits, seed=seed, rr_mode=rr_mode)
    piA = Scaffold(ScaffoldRole.FACTUAL, cfg)
    piA.add_world({"U": "u0", "X": "x1", "Y": "y1"})
    piA.add_mechanism("u0", "f_X", "x1")
    piA.add_mechanism("x1", "f_Y", "y1")
    piA.add_mechanism("x0", "f_Y", "y0")
    return piA


def hop_product(trace: PathTrace) -> float:
    """CR2 recomputed from the raw vote counts of each hop."""
    return math.prod(1.0 if h.result.rescued else h.result.votes_for_winner / h.result.n_blocks
                     for h in trace.hops)
