"""GF(2^m) arithmetic on log/antilog tables and dense matrix routines over the field."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Union
import logging

import numba as nb
import numpy as np

from pbnc.errors import InconsistentSystemError, InputError
from pbnc.schemas.field import FieldSpec

logger = logging.getLogger(__name__)

# x^m + ... , one fixed primitive polynomial per extension degree
PRIMITIVE_POLYNOMIALS = {
    1: 0x3,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x89,
    8: 0x11D,
}

njit_kwargs = {
    'nogil': True,
    'cache': True,
}


@nb.njit(**njit_kwargs)
def _row_reduce(mat, n_cols, exp_table, log_table, group_order, reduce_above):
    """
    In-place elimination of the first ``n_cols`` columns of ``mat``; the remaining
    columns are carried along as right-hand sides.

    Returns
    -------
    (rank, pivot column per pivot row)
    """
    rows = mat.shape[0]
    width = mat.shape[1]
    pivots = np.full(min(rows, n_cols), -1, dtype=np.int64)
    rank = 0
    for col in range(n_cols):
        if rank == rows:
            break
        pivot = -1
        for r in range(rank, rows):
            if mat[r, col] != 0:
                pivot = r
                break
        if pivot < 0:
            continue
        if pivot != rank:
            for c in range(width):
                tmp = mat[rank, c]
                mat[rank, c] = mat[pivot, c]
                mat[pivot, c] = tmp
        inv_log = (group_order - log_table[mat[rank, col]]) % group_order
        for c in range(col, width):
            v = mat[rank, c]
            if v != 0:
                mat[rank, c] = exp_table[log_table[v] + inv_log]
        start = 0 if reduce_above else rank + 1
        for r in range(start, rows):
            if r == rank:
                continue
            f = mat[r, col]
            if f == 0:
                continue
            lf = log_table[f]
            for c in range(col, width):
                v = mat[rank, c]
                if v != 0:
                    mat[r, c] ^= exp_table[log_table[v] + lf]
        pivots[rank] = col
        rank += 1
    return rank, pivots


@nb.njit(**njit_kwargs)
def _matmul(a, b, exp_table, log_table):
    rows = a.shape[0]
    inner = a.shape[1]
    cols = b.shape[1]
    out = np.zeros((rows, cols), dtype=np.int64)
    for i in range(rows):
        for k in range(inner):
            av = a[i, k]
            if av == 0:
                continue
            la = log_table[av]
            for j in range(cols):
                bv = b[k, j]
                if bv != 0:
                    out[i, j] ^= exp_table[la + log_table[bv]]
    return out


@dataclass(frozen=True)
class RrefResult:
    reduced: np.ndarray
    rhs: np.ndarray
    pivots: np.ndarray
    solvable: bool

    @property
    def rank(self) -> int:
        return int(self.pivots.size)


class GaloisField:
    """Arithmetic context for GF(2^m); immutable once built."""

    def __init__(self, m: int):
        if not 1 <= m <= 8:
            raise InputError(f"Field extension degree must be in 1..8, got {m}")
        self.m = m
        self.q = 1 << m
        self.poly = PRIMITIVE_POLYNOMIALS[m]
        order = self.q - 1
        exp = np.zeros(2 * order, dtype=np.int64)
        log = np.zeros(self.q, dtype=np.int64)
        x = 1
        for i in range(order):
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.q:
                x ^= self.poly
        exp[order:] = exp[:order]
        self.exp = exp
        self.log = log

    @property
    def spec(self) -> FieldSpec:
        return FieldSpec(m=self.m)

    def __repr__(self):
        return f"GaloisField(m={self.m}, poly={self.poly:#x})"

    def add(self, a, b):
        return np.bitwise_xor(a, b)

    def mul(self, a, b):
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        prod = self.exp[self.log[a] + self.log[b]]
        out = np.where((a == 0) | (b == 0), 0, prod)
        return out if out.ndim else int(out)

    def inv(self, a):
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("Zero has no multiplicative inverse in GF(2^m)")
        out = self.exp[(self.q - 1 - self.log[a]) % (self.q - 1)]
        return out if out.ndim else int(out)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(a, dtype=np.int64)
        b = np.ascontiguousarray(b, dtype=np.int64)
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"Shape mismatch for field product: {a.shape} x {b.shape}")
        return _matmul(a, b, self.exp, self.log)

    def random_matrix(self, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
        """I.i.d. uniform entries over the field."""
        return rng.integers(0, self.q, size=(rows, cols), dtype=np.int64)

    def random_nonzero(self, size, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(1, self.q, size=size, dtype=np.int64)

    def rank(self, a: np.ndarray) -> int:
        a = np.array(a, dtype=np.int64, ndmin=2)
        if a.size == 0:
            return 0
        rank, _ = _row_reduce(a, a.shape[1], self.exp, self.log, self.q - 1, False)
        return int(rank)

    def rref_with_pivots(self, a: np.ndarray, rhs: np.ndarray) -> RrefResult:
        """Gauss-Jordan reduction of ``[a | rhs]`` with first-nonzero pivots."""
        a = np.array(a, dtype=np.int64, ndmin=2)
        rhs = np.array(rhs, dtype=np.int64, ndmin=2)
        if rhs.shape[0] != a.shape[0]:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, matrix has {a.shape[0]}")
        n_cols = a.shape[1]
        aug = np.ascontiguousarray(np.hstack([a, rhs]))
        rank, pivots = _row_reduce(aug, n_cols, self.exp, self.log, self.q - 1, True)
        solvable = not np.any(aug[rank:, n_cols:])
        return RrefResult(
            reduced=aug[:, :n_cols],
            rhs=aug[:, n_cols:],
            pivots=pivots[:rank].copy(),
            solvable=bool(solvable),
        )

    def solve(self, a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Unique solution of ``a @ v = rhs``; ``a`` must have full column rank."""
        result = self.rref_with_pivots(a, rhs)
        if not result.solvable:
            raise InconsistentSystemError("Linear system over GF(2^m) is inconsistent")
        n_cols = np.asarray(a).shape[1]
        if result.rank != n_cols:
            raise ValueError(f"System has rank {result.rank} but {n_cols} unknowns")
        solution = np.zeros((n_cols, result.rhs.shape[1]), dtype=np.int64)
        solution[result.pivots] = result.rhs[: result.rank]
        return solution


@lru_cache(maxsize=None)
def _cached_field(m: int) -> GaloisField:
    logger.debug(f"Building GF(2^{m}) tables with polynomial {PRIMITIVE_POLYNOMIALS.get(m, 0):#x}")
    return GaloisField(m)


def field_table_build(spec: Union[FieldSpec, int]) -> GaloisField:
    """Shared arithmetic context for the given field."""
    m = spec.m if isinstance(spec, FieldSpec) else int(spec)
    if not 1 <= m <= 8:
        raise InputError(f"Field extension degree must be in 1..8, got {m}")
    return _cached_field(m)


def zeta(r: int, m: int, q: int) -> float:
    """Probability that r uniformly random length-m vectors over GF(q) are independent."""
    if r < 0 or m < 0:
        raise ValueError("zeta needs non-negative arguments")
    if r == 0:
        return 1.0
    if r > m:
        return 0.0
    value = 1.0
    for k in range(r):
        value *= 1.0 - float(q) ** (k - m)
    return value


@lru_cache(maxsize=64)
def zeta_table(M: int, q: int) -> np.ndarray:
    """Table[r, m] = zeta(r, m, q) for 0 <= r, m <= M."""
    table = np.array([[zeta(r, m, q) for m in range(M + 1)] for r in range(M + 1)])
    table.flags.writeable = False
    return table
