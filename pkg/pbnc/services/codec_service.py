"""
Precode and batch encoding, and erasure decoding of batch equations jointly with the precode checks.

Both decoders work on "equation groups": each precode check contributes one labeled equation with
a zero right-hand side, each batch contributes the w equations (G H)^T v_I = Y^T. A group whose
unknown part has full column rank is solved outright. Inactivation decoding additionally treats a
chosen packet as a symbol when no group can be solved and finishes with a dense system in those
symbols.
"""

from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from pbnc import config
from pbnc.errors import InconsistentSystemError, InputError
from pbnc.models.models import BatchEquation, BatchPrecursor, DecodeResult, LiftedCode, PacketBlock
from pbnc.services.field_service import GaloisField, field_table_build

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PrecodeEncoder:
    """Systematic encoder of the labeled precode: free columns carry the inputs."""

    code: LiftedCode
    pivots: np.ndarray
    free: np.ndarray
    parity_map: np.ndarray
    attempts: int

    @property
    def rank(self) -> int:
        return int(self.pivots.size)

    @property
    def A_eff(self) -> int:
        return int(self.free.size)


def build_precode_encoder(
    code: LiftedCode, rng: Optional[np.random.Generator] = None, attempts: Optional[int] = None
) -> PrecodeEncoder:
    """Row-reduce the labeled checks; relabel rank-deficient precodes a bounded number of times."""
    attempts = config.PRECODE_RELABEL_ATTEMPTS if attempts is None else attempts
    field = field_table_build(code.m)
    K = code.K
    used = 0
    while True:
        H = code.parity_check_matrix()
        result = field.rref_with_pivots(H, np.zeros((H.shape[0], 0), dtype=np.int64))
        if result.rank == code.n_checks or rng is None or used >= attempts:
            break
        used += 1
        logger.debug(f"Precode has rank {result.rank} < {code.n_checks}; relabeling (attempt {used})")
        code = code.with_labels([field.random_nonzero(row.size, rng) for row in code.check_rows])
    if result.rank < code.n_checks:
        logger.warning(
            f"Precode keeps rank {result.rank} < {code.n_checks} checks; encoding {K - result.rank} inputs instead of {code.A}"
        )
    pivots = result.pivots
    free = np.setdiff1d(np.arange(K), pivots)
    parity_map = result.reduced[: result.rank][:, free]
    return PrecodeEncoder(code=code, pivots=pivots, free=free, parity_map=np.ascontiguousarray(parity_map), attempts=used)


def precode_encode(encoder: PrecodeEncoder, inputs: PacketBlock) -> PacketBlock:
    """K intermediate packets whose labeled check sums all vanish."""
    if inputs.count != encoder.A_eff:
        raise InputError(f"Precode takes {encoder.A_eff} input packets, got {inputs.count}")
    field = field_table_build(encoder.code.m)
    V = np.zeros((inputs.T, encoder.code.K), dtype=np.int64)
    V[:, encoder.free] = inputs.payload
    if encoder.rank:
        V[:, encoder.pivots] = field.matmul(inputs.payload, np.ascontiguousarray(encoder.parity_map.T))
    return PacketBlock(V, encoder.code.m)


def outer_encode(
    batch_rows: Sequence[np.ndarray], V: PacketBlock, M: int, rng: np.random.Generator
) -> List[BatchPrecursor]:
    """X_i = V[:, I_i] G_i with a fresh uniformly random |I_i| x M generator per batch."""
    field = field_table_build(V.m)
    precursors = []
    for k, row in enumerate(batch_rows):
        index_set = np.asarray(row, dtype=np.int64)
        if index_set.size == 0:
            raise InputError(f"Batch row {k} has no variable nodes")
        G = field.random_matrix(index_set.size, M, rng)
        X = field.matmul(np.ascontiguousarray(V.payload[:, index_set]), G)
        precursors.append(BatchPrecursor(index_set=index_set, G=G, X=X))
    return precursors


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _Group:
    vars: np.ndarray
    A: np.ndarray
    rhs: np.ndarray


def _equation_groups(batches: Sequence[BatchEquation], code: LiftedCode, T: int) -> List[_Group]:
    field = field_table_build(code.m)
    groups = [
        _Group(np.asarray(cols, dtype=np.int64), np.asarray(labels, dtype=np.int64)[None, :], np.zeros((1, T), dtype=np.int64))
        for cols, labels in zip(code.check_rows, code.check_labels)
        if len(cols)
    ]
    for batch in batches:
        if batch.received == 0:
            continue
        A = field.matmul(batch.G, batch.H).T
        groups.append(_Group(np.asarray(batch.index_set, dtype=np.int64), np.ascontiguousarray(A), np.ascontiguousarray(batch.Y.T)))
    return groups


def _payload_width(batches: Sequence[BatchEquation]) -> int:
    return int(batches[0].Y.shape[0]) if batches else 1


class _EquationSolver:
    """Joint peeling over equation groups, optionally with inactivation of stalled packets."""

    def __init__(self, groups: List[_Group], K: int, T: int, field: GaloisField, max_inactive: int, max_rounds: Optional[int] = None):
        self.groups = groups
        self.K = K
        self.T = T
        self.field = field
        self.max_inactive = max_inactive
        self.max_rounds = max_rounds
        self.const = np.zeros((K, T), dtype=np.int64)
        self.sym = np.zeros((K, 0), dtype=np.int64)
        self.resolved = np.zeros(K, dtype=bool)
        self.done = np.zeros(len(groups), dtype=bool)
        self.deficiency = np.zeros(len(groups), dtype=np.int64)
        self.constraints: List[Tuple[np.ndarray, np.ndarray]] = []
        self.adjacency: List[List[int]] = [[] for _ in range(K)]
        for g, group in enumerate(groups):
            for v in group.vars:
                self.adjacency[int(v)].append(g)
        self.rounds = 0

    @property
    def n_inactive(self) -> int:
        return self.sym.shape[1]

    def _constrain(self, sym_rows: np.ndarray, const_rows: np.ndarray):
        for s, c in zip(sym_rows, const_rows):
            if s.any():
                self.constraints.append((s, c))
            elif c.any():
                raise InconsistentSystemError("Batch equations contradict each other")

    def _examine(self, g: int) -> List[int]:
        group = self.groups[g]
        unknown = ~self.resolved[group.vars]
        known_vars = group.vars[~unknown]
        rhs_c = group.rhs.copy()
        rhs_s = np.zeros((group.A.shape[0], self.n_inactive), dtype=np.int64)
        if known_vars.size:
            A_known = np.ascontiguousarray(group.A[:, ~unknown])
            rhs_c ^= self.field.matmul(A_known, self.const[known_vars])
            if self.n_inactive:
                rhs_s = self.field.matmul(A_known, np.ascontiguousarray(self.sym[known_vars]))
        unknown_vars = group.vars[unknown]
        if unknown_vars.size == 0:
            self._constrain(rhs_s, rhs_c)
            self.done[g] = True
            return []
        result = self.field.rref_with_pivots(group.A[:, unknown], np.hstack([rhs_c, rhs_s]))
        if result.rank < unknown_vars.size:
            self.deficiency[g] = unknown_vars.size - result.rank
            return []
        for k, col in enumerate(result.pivots):
            v = int(unknown_vars[col])
            self.const[v] = result.rhs[k, : self.T]
            self.sym[v] = result.rhs[k, self.T:]
            self.resolved[v] = True
        leftover = result.rhs[result.rank:]
        self._constrain(leftover[:, self.T:], leftover[:, : self.T])
        self.done[g] = True
        return [int(unknown_vars[col]) for col in result.pivots]

    def _peel(self, queue: deque):
        queued = np.zeros(len(self.groups), dtype=bool)
        queued[list(queue)] = True
        wave = list(queue)
        while wave:
            if self.max_rounds is not None and self.rounds >= self.max_rounds:
                break
            self.rounds += 1
            following = []
            for g in wave:
                queued[g] = False
                if self.done[g]:
                    continue
                for v in self._examine(g):
                    for g2 in self.adjacency[v]:
                        if not self.done[g2] and not queued[g2]:
                            queued[g2] = True
                            following.append(g2)
            wave = following

    def _choose_inactive(self) -> int:
        score = np.zeros(self.K, dtype=np.int64)
        for g in np.flatnonzero(~self.done & (self.deficiency == 1)):
            group = self.groups[g]
            score[group.vars[~self.resolved[group.vars]]] += 1
        score[self.resolved] = -1
        return int(np.argmax(score))

    def _inactivate(self, v: int):
        self.sym = np.hstack([self.sym, np.zeros((self.K, 1), dtype=np.int64)])
        self.sym[v, -1] = 1
        self.const[v] = 0
        self.resolved[v] = True

    def run(self) -> DecodeResult:
        self._peel(deque(range(len(self.groups))))
        while not self.resolved.all() and self.n_inactive < self.max_inactive:
            v = self._choose_inactive()
            self._inactivate(v)
            logger.debug(f"Inactivated packet {v} ({self.n_inactive} inactive)")
            self._peel(deque(g for g in self.adjacency[v] if not self.done[g]))
        return self._finish()

    def _known(self) -> np.ndarray:
        return self.resolved & ~self.sym.any(axis=1)

    def _finish(self) -> DecodeResult:
        if not self.resolved.all():
            return DecodeResult(self._known(), self.const, False, self.n_inactive, self.rounds)
        if not self.n_inactive:
            return DecodeResult(self.resolved.copy(), self.const, True, 0, self.rounds)
        if not self.constraints:
            return DecodeResult(self._known(), self.const, False, self.n_inactive, self.rounds)
        C = np.vstack([np.pad(s, (0, self.n_inactive - s.size))[None, :] for s, _ in self.constraints])
        c = np.vstack([row[None, :] for _, row in self.constraints])
        if self.field.rank(C) < self.n_inactive:
            return DecodeResult(self._known(), self.const, False, self.n_inactive, self.rounds)
        w = self.field.solve(C, c)
        values = self.const ^ self.field.matmul(np.ascontiguousarray(self.sym), w)
        return DecodeResult(np.ones(self.K, dtype=bool), values, True, self.n_inactive, self.rounds)


def bp_decode(
    batches: Sequence[BatchEquation], code: LiftedCode, max_rounds: Optional[int] = None
) -> DecodeResult:
    """Joint BP over batches and precode checks; a failure is a result, not an error."""
    T = _payload_width(batches)
    solver = _EquationSolver(_equation_groups(batches, code, T), code.K, T, field_table_build(code.m), 0, max_rounds)
    return solver.run()


def default_inactive_cap(A: int) -> int:
    return int(math.floor(2 * math.sqrt(A)))


def inactivation_decode(
    batches: Sequence[BatchEquation], code: LiftedCode, max_inactive: Optional[int] = None
) -> DecodeResult:
    """ML erasure decoding by inactivation; ``max_inactive`` defaults to 2*sqrt(A)."""
    max_inactive = default_inactive_cap(code.A) if max_inactive is None else max_inactive
    if max_inactive < 0:
        raise InputError("max_inactive must be non-negative")
    T = _payload_width(batches)
    solver = _EquationSolver(_equation_groups(batches, code, T), code.K, T, field_table_build(code.m), max_inactive)
    return solver.run()


def ml_feasible(batches: Sequence[BatchEquation], code: LiftedCode) -> bool:
    """True iff all batch equations together with the precode checks determine every packet."""
    K = code.K
    field = field_table_build(code.m)
    blocks = []
    if code.n_checks:
        blocks.append(code.parity_check_matrix())
    for batch in batches:
        if batch.received == 0:
            continue
        rows = np.zeros((batch.received, K), dtype=np.int64)
        rows[:, batch.index_set] = field.matmul(batch.G, batch.H).T
        blocks.append(rows)
    if not blocks:
        return K == 0
    return field.rank(np.vstack(blocks)) == K
