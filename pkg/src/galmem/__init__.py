"""Deterministic GF(2) diffusion memory with vote-based confidence."""

__version__ = "0.1.0"

from .counterfactual import Scaffold, WorldRecord, abduce, estimate, intervene, predict, run_query
from .dag import (PathTrace, RelationRecord, RelationStore, decay_fit, effective_branching,
                  load_edges, traverse)
from .errors import *  # noqa: F401,F403
from .gf2 import BitPolynomial, Generator, builtin, diffuse, is_primitive, reduce
from .hdc import Codebook, Hypervector, bind, bundle, cleanup, unbind
from .memory import BlockMemory, MemoryConfig, RRMode, Schedule, VoteResult
from .qod import QodReport, concentration_check, hw_distribution_exact, qod_exhaustive
