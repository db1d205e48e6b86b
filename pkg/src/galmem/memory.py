"""Block-partitioned associative store with majority-vote readout.

An input of length N*q is cut into N contiguous segments; block b diffuses
segment b with its own generator and seed into an m-bit slot address and
stores an entry address (EA) there. A read lets every block vote for the EA
in its slot. Collisions are handled by one of two policies: Rescue keeps
the first occupant and records the newcomer in an exact-match side table,
Don't Care poisons the slot so the block abstains from then on.
"""

from __future__ import annotations

import enum
import io
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigInvalid, LengthMismatch, NotFound, ScheduleViolation, SnapshotError
from .gf2 import BitPolynomial, Diffuser, Generator, builtin, find_primitive

MAGIC = b"GMEM1"
EA_MASK = (1 << 64) - 1
POISON = -1
DEFAULT_SLOT_BUDGET = 1 << 26

_EMPTY, _HOLDS, _POISONED, _CONTESTED = 0, 1, 2, 3


class RRMode(enum.IntEnum):
    DONT_CARE = 0
    RESCUE = 1

    @classmethod
    def parse(cls, text: str) -> "RRMode":
        key = text.lower().replace("-", "").replace("_", "").replace("'", "")
        if key in ("rescue", "1", "rr1"):
            return cls.RESCUE
        if key in ("dontcare", "0", "rr0"):
            return cls.DONT_CARE
        raise ValueError(f"unknown rr mode {text!r}")


class Schedule(enum.IntEnum):
    UNIFIED = 0
    GATED = 1

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        key = text.lower()
        if key in ("unified", "u"):
            return cls.UNIFIED
        if key in ("gated", "g"):
            return cls.GATED
        raise ValueError(f"unknown schedule {text!r}")


@lru_cache(maxsize=32)
def gated_generators(m: int, n: int) -> tuple[Generator, ...]:
    """n distinct primitive generators of degree m, built-in one first."""
    first = builtin(m)
    if n == 1:
        return (first,)
    return (first,) + tuple(find_primitive(m, n - 1, exclude=[first]))


@dataclass(frozen=True)
class MemoryConfig:
    n_blocks: int
    m: int
    segment_bits: int
    generators: tuple[Generator, ...]
    seeds: tuple[int, ...]
    rr_mode: RRMode = RRMode.RESCUE
    schedule: Schedule = Schedule.UNIFIED
    rescue_always: bool = False
    slot_budget: int = DEFAULT_SLOT_BUDGET

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ConfigInvalid("n_blocks must be >= 1")
        if len(self.generators) != self.n_blocks or len(self.seeds) != self.n_blocks:
            raise ConfigInvalid("need one generator and one seed per block")
        if any(g.degree != self.m for g in self.generators):
            raise ConfigInvalid(f"all generators must have degree m={self.m}")
        if any(s < 0 or s >> self.m for s in self.seeds):
            raise ConfigInvalid(f"seeds must be {self.m}-bit residues")
        if self.segment_bits < 1:
            raise ConfigInvalid("segment_bits must be >= 1")
        if self.schedule == Schedule.UNIFIED:
            if len(set(self.generators)) != 1 or len(set(self.seeds)) != 1:
                raise ConfigInvalid("unified schedule needs one generator and one seed")
        if self.n_blocks << self.m > self.slot_budget:
            raise ConfigInvalid(
                f"{self.n_blocks} x 2^{self.m} slots exceeds the budget of {self.slot_budget}"
            )

    @property
    def input_bits(self) -> int:
        return self.n_blocks * self.segment_bits

    @property
    def total_slots(self) -> int:
        return self.n_blocks << self.m

    @classmethod
    def unified(cls, n_blocks: int, m: int, segment_bits: int, seed: int = 0,
                rr_mode=RRMode.RESCUE, generator: Generator | None = None, **kw):
        g = generator or builtin(m)
        return cls(n_blocks, m, segment_bits, (g,) * n_blocks, (seed,) * n_blocks,
                   rr_mode, Schedule.UNIFIED, **kw)

    @classmethod
    def gated(cls, n_blocks: int, m: int, segment_bits: int, seeds=None,
              rr_mode=RRMode.RESCUE, **kw):
        gens = gated_generators(m, n_blocks)
        if seeds is None:
            seeds = tuple((0x9E37 * (b + 1)) % (1 << m) for b in range(n_blocks))
        return cls(n_blocks, m, segment_bits, gens, tuple(seeds), rr_mode, Schedule.GATED, **kw)

    def with_seeds(self, seeds) -> "MemoryConfig":
        """Same generators, new per-block seeds, Gated schedule."""
        return MemoryConfig(self.n_blocks, self.m, self.segment_bits, self.generators,
                            tuple(seeds), self.rr_mode, Schedule.GATED,
                            self.rescue_always, self.slot_budget)

    def to_dict(self) -> dict:
        return {
            "n_blocks": self.n_blocks,
            "m": self.m,
            "segment_bits": self.segment_bits,
            "generators": [g.serialize() for g in self.generators],
            "seeds": list(self.seeds),
            "rr_mode": self.rr_mode.name.lower(),
            "schedule": self.schedule.name.lower(),
            "rescue_always": self.rescue_always,
        }


@dataclass(frozen=True)
class VoteResult:
    """Outcome of one read.

    ``cr1`` is votes_for_winner / N, except on a Rescue hit where it is
    pinned to 1.0 (``rescued`` is then True and the raw tally is kept).
    """

    winner: int | None
    votes_for_winner: int
    abstentions: int
    n_blocks: int
    tally: tuple[tuple[int, int], ...] = ()
    rescued: bool = False

    @property
    def cr1(self) -> float:
        if self.winner is None:
            return 0.0
        if self.rescued:
            return 1.0
        return self.votes_for_winner / self.n_blocks

    @property
    def other_votes(self) -> int:
        return self.n_blocks - self.abstentions - self.votes_for_winner


@dataclass
class WriteReport:
    collided_blocks: list[int] = field(default_factory=list)
    rescued: bool = False


class BlockMemory:
    """N independent stores of 2^m slots each."""

    def __init__(self, config: MemoryConfig):
        self.config = config
        self._diffusers = [Diffuser(g, s, config.segment_bits)
                           for g, s in zip(config.generators, config.seeds)]
        size = 1 << config.m
        self._slots: list[list] = [[None] * size for _ in range(config.n_blocks)]
        self.rescue: dict[int, int] = {}
        # Rescue mode: slots whose occupant was challenged by another EA
        self._contested: list[set[int]] = [set() for _ in range(config.n_blocks)]
        self.writes = 0
        self.collisions = 0

    @property
    def n_blocks(self) -> int:
        return self.config.n_blocks

    def _coerce(self, P) -> int:
        if isinstance(P, BitPolynomial):
            if P.length > self.config.input_bits:
                raise LengthMismatch(
                    f"input length {P.length} exceeds {self.config.input_bits} "
                    f"({self.n_blocks} blocks x {self.config.segment_bits} bits)"
                )
            return P.value
        value = int(P)
        if value < 0 or value.bit_length() > self.config.input_bits:
            raise LengthMismatch(f"input wider than {self.config.input_bits} bits")
        return value

    def addresses(self, P) -> list[int]:
        """Slot address of P in every block."""
        value = self._coerce(P)
        q = self.config.segment_bits
        mask = (1 << q) - 1
        return [d((value >> (b * q)) & mask) for b, d in enumerate(self._diffusers)]

    def write(self, P, ea: int) -> WriteReport:
        if not 0 <= ea <= EA_MASK:
            raise ValueError("entry address must be an unsigned 64-bit value")
        value = self._coerce(P)
        rescue_mode = self.config.rr_mode == RRMode.RESCUE
        known = rescue_mode and self.rescue.get(value) == ea
        report = WriteReport()
        for b, addr in enumerate(self.addresses(value)):
            block = self._slots[b]
            slot = block[addr]
            if slot is None:
                block[addr] = ea
            elif slot == ea:
                continue
            elif rescue_mode:
                self._contested[b].add(addr)
                if not known:
                    report.collided_blocks.append(b)
            else:
                block[addr] = POISON
                report.collided_blocks.append(b)
        if rescue_mode and (report.collided_blocks or value in self.rescue):
            # a rescued input keeps its table entry current on every rewrite
            self.rescue[value] = ea
            report.rescued = True
        self.writes += 1
        self.collisions += len(report.collided_blocks)
        return report

    def tally(self, P) -> VoteResult:
        """Raw block vote, without rescue and without raising."""
        return self._tally_at(self.addresses(P))

    def _tally_at(self, addrs) -> VoteResult:
        counts = Counter()
        for block, addr in zip(self._slots, addrs):
            slot = block[addr]
            if slot is not None and slot != POISON:
                counts[slot] += 1
        return self._result(counts, None, False)

    def block_votes(self, P) -> list:
        """What each block holds at P's address: an EA, None (empty) or POISON."""
        return [self._slots[b][a] for b, a in enumerate(self.addresses(P))]

    def _result(self, counts: Counter, winner, rescued) -> VoteResult:
        if winner is None and counts:
            winner = min(counts, key=lambda ea: (-counts[ea], ea))
        cast = sum(counts.values())
        return VoteResult(
            winner=winner,
            votes_for_winner=counts.get(winner, 0) if winner is not None else 0,
            abstentions=self.n_blocks - cast,
            n_blocks=self.n_blocks,
            tally=tuple(sorted(counts.items())),
            rescued=rescued,
        )

    def read(self, P) -> VoteResult:
        """Majority vote over blocks; ties go to the smallest EA.

        In Rescue mode the side table is consulted when some block abstained,
        the votes disagree, or an addressed slot saw a conflicting write
        (always, if ``rescue_always``); a hit wins with cr1 pinned to 1.
        Raises NotFound when nothing wins.
        """
        value = self._coerce(P)
        addrs = self.addresses(value)
        raw = self._tally_at(addrs)
        if self.config.rr_mode == RRMode.RESCUE:
            contested = (raw.abstentions > 0 or len(raw.tally) > 1
                         or any(a in c for a, c in zip(addrs, self._contested)))
            if contested or self.config.rescue_always:
                hit = self.rescue.get(value)
                if hit is not None:
                    return self._result(Counter(dict(raw.tally)), hit, True)
        if raw.winner is None:
            raise NotFound("every block abstained", raw)
        return raw

    def reseed(self, block: int, new_seed: int):
        """Gated schedule only: later diffusions in ``block`` use ``new_seed``.

        Slots written under the old seed are left in place and become
        unreachable for inputs that now address elsewhere.
        """
        if self.config.schedule != Schedule.GATED:
            raise ScheduleViolation("reseeding requires the gated schedule")
        seeds = list(self.config.seeds)
        seeds[block] = new_seed
        self.config = MemoryConfig(
            self.config.n_blocks, self.config.m, self.config.segment_bits,
            self.config.generators, tuple(seeds), self.config.rr_mode,
            self.config.schedule, self.config.rescue_always, self.config.slot_budget,
        )
        self._diffusers[block] = Diffuser(self.config.generators[block], new_seed,
                                          self.config.segment_bits)

    def inject_abstention(self, P, blocks) -> list[int]:
        """Poison P's slots in the given blocks (Don't Care mode only).

        Stands in for a collision without needing a colliding input; used to
        construct workloads with known per-hop CR1.
        """
        if self.config.rr_mode != RRMode.DONT_CARE:
            raise ScheduleViolation("abstentions can only be injected in Don't Care mode")
        addrs = self.addresses(P)
        for b in blocks:
            self._slots[b][addrs[b]] = POISON
        return sorted(set(blocks))

    def occupancy(self) -> dict:
        held = poisoned = 0
        for block in self._slots:
            for slot in block:
                if slot is None:
                    continue
                if slot == POISON:
                    poisoned += 1
                else:
                    held += 1
        return {"held": held, "poisoned": poisoned, "rescued": len(self.rescue),
                "writes": self.writes, "collisions": self.collisions}

    # -- snapshot ---------------------------------------------------------

    def snapshot(self) -> bytes:
        """Little-endian binary image: config, slot arrays, rescue table."""
        c = self.config
        out = io.BytesIO()
        out.write(MAGIC)
        head = struct.pack("<IIIBBB", c.n_blocks, c.m, c.segment_bits,
                           int(c.rr_mode), int(c.schedule), int(c.rescue_always))
        head += struct.pack("<QQ", self.writes, self.collisions)
        head += b"".join(struct.pack("<QQ", g.modulus, s)
                         for g, s in zip(c.generators, c.seeds))
        _section(out, head)
        for block, contested in zip(self._slots, self._contested):
            state = np.fromiter(
                (_EMPTY if s is None else _POISONED if s == POISON else _HOLDS for s in block),
                dtype=np.uint8, count=len(block))
            state[sorted(contested)] = _CONTESTED
            eas = np.fromiter((s if s is not None and s != POISON else 0 for s in block),
                              dtype=np.uint64, count=len(block))
            _section(out, state.tobytes() + eas.astype("<u8").tobytes())
        key_bytes = (c.input_bits + 7) // 8
        entries = b"".join(k.to_bytes(key_bytes, "little") + struct.pack("<Q", v)
                           for k, v in sorted(self.rescue.items()))
        _section(out, struct.pack("<QI", len(self.rescue), key_bytes) + entries)
        return out.getvalue()

    @classmethod
    def load(cls, data: bytes) -> "BlockMemory":
        if not data.startswith(MAGIC):
            raise SnapshotError("bad magic, not a GMEM1 snapshot")
        view = memoryview(data)
        pos = len(MAGIC)
        head, pos = _read_section(view, pos)
        n, m, q, rr, sched, always = struct.unpack_from("<IIIBBB", head, 0)
        off = struct.calcsize("<IIIBBB")
        writes, collisions = struct.unpack_from("<QQ", head, off)
        off += 16
        gens, seeds = [], []
        for _ in range(n):
            modulus, seed = struct.unpack_from("<QQ", head, off)
            off += 16
            gens.append(Generator(modulus, True))
            seeds.append(seed)
        config = MemoryConfig(n, m, q, tuple(gens), tuple(seeds), RRMode(rr),
                              Schedule(sched), bool(always),
                              max(DEFAULT_SLOT_BUDGET, n << m))
        mem = cls(config)
        mem.writes, mem.collisions = writes, collisions
        size = 1 << m
        for b in range(n):
            body, pos = _read_section(view, pos)
            if len(body) != 9 * size:
                raise SnapshotError(f"block {b}: expected {9 * size} bytes, got {len(body)}")
            state = np.frombuffer(body[:size], dtype=np.uint8)
            eas = np.frombuffer(body[size:], dtype="<u8")
            block = mem._slots[b]
            for addr in np.flatnonzero((state == _HOLDS) | (state == _CONTESTED)):
                block[addr] = int(eas[addr])
            mem._contested[b] = set(np.flatnonzero(state == _CONTESTED).tolist())
            for addr in np.flatnonzero(state == _POISONED):
                block[addr] = POISON
        body, pos = _read_section(view, pos)
        count, key_bytes = struct.unpack_from("<QI", body, 0)
        off = 12
        for _ in range(count):
            key = int.from_bytes(body[off:off + key_bytes], "little")
            (ea,) = struct.unpack_from("<Q", body, off + key_bytes)
            mem.rescue[key] = ea
            off += key_bytes + 8
        if pos != len(data):
            raise SnapshotError("trailing bytes after snapshot")
        return mem


def _section(out, payload: bytes):
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)


def _read_section(view, pos):
    if pos + 8 > len(view):
        raise SnapshotError("truncated snapshot")
    (n,) = struct.unpack_from("<Q", view, pos)
    pos += 8
    if pos + n > len(view):
        raise SnapshotError("truncated snapshot")
    return bytes(view[pos:pos + n]), pos + n
