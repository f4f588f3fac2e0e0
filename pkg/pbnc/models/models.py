from dataclasses import dataclass, field
from types import MappingProxyType
from typing import List, Mapping, Optional, Tuple
import enum
import math

import numpy as np

from pbnc.errors import InputError


class OmegaMode(str, enum.Enum):
    EXACT = "exact"
    BINOMIAL = "binomial"


class BcnForm(str, enum.Enum):
    DIRECT = "direct"
    BETA = "beta"


class DecoderKind(str, enum.Enum):
    BP = "bp"
    INACTIVATION = "inactivation"


class OutputFormat(str, enum.Enum):
    CSV = "csv"
    JSON = "json"


def _as_int_matrix(values) -> Optional[np.ndarray]:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim == 1 and arr.size == 0:
        return None
    if arr.ndim != 2:
        raise InputError(f"Expected a 2-D integer matrix, got shape {arr.shape}")
    return arr.copy()


@dataclass(frozen=True, eq=False)
class Protomatrix:
    """B = [B1; B2]; rows ``n_core`` onward of B2 form the extension part."""

    B1: np.ndarray
    B2: np.ndarray
    n_core: Optional[int] = None

    def __post_init__(self):
        B1 = _as_int_matrix(self.B1)
        B2 = _as_int_matrix(self.B2)
        if B1 is None and B2 is None:
            raise InputError("Protomatrix needs at least one row")
        n_v = (B1 if B1 is not None else B2).shape[1]
        B1 = np.zeros((0, n_v), dtype=np.int64) if B1 is None else B1
        B2 = np.zeros((0, n_v), dtype=np.int64) if B2 is None else B2
        if B1.shape[1] != B2.shape[1]:
            raise InputError(f"B1 has {B1.shape[1]} columns but B2 has {B2.shape[1]}")
        if (B1 < 0).any() or (B2 < 0).any():
            raise InputError("Protomatrix entries must be non-negative")
        n_core = B2.shape[0] if self.n_core is None else int(self.n_core)
        if not 0 <= n_core <= B2.shape[0]:
            raise InputError(f"n_core={n_core} outside 0..{B2.shape[0]}")
        B1.flags.writeable = False
        B2.flags.writeable = False
        object.__setattr__(self, "B1", B1)
        object.__setattr__(self, "B2", B2)
        object.__setattr__(self, "n_core", n_core)

    @property
    def n_v(self) -> int:
        return self.B1.shape[1]

    @property
    def n_c1(self) -> int:
        return self.B1.shape[0]

    @property
    def n_c2(self) -> int:
        return self.B2.shape[0]

    @property
    def n_c(self) -> int:
        return self.n_c1 + self.n_c2

    @property
    def n_extension(self) -> int:
        return self.n_c2 - self.n_core

    @property
    def B(self) -> np.ndarray:
        return np.vstack([self.B1, self.B2])

    def row_degree(self, i: int) -> int:
        """Degree d_{c_i} of row i of the stacked matrix."""
        return int(self.B[i].sum())

    @property
    def row_degrees(self) -> np.ndarray:
        return self.B.sum(axis=1)

    @property
    def max_entry(self) -> int:
        return int(self.B.max()) if self.B.size else 0

    def satisfies_bp_start(self, M: int) -> bool:
        if self.n_c2 == 0:
            return False
        return bool((self.B2.sum(axis=1) <= M).any())

    def truncated(self, n_rows: int) -> "Protomatrix":
        """Keep the first ``n_rows`` rows of B2."""
        return Protomatrix(self.B1, self.B2[:n_rows], n_core=min(self.n_core, n_rows))

    def with_rows(self, rows: np.ndarray) -> "Protomatrix":
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, self.n_v)
        return Protomatrix(self.B1, np.vstack([self.B2, rows]), n_core=self.n_core)

    def permuted(self, row_perm, col_perm) -> "Protomatrix":
        """Reorder VN columns everywhere and B-CN rows within B2; the core/extension split is kept by count."""
        row_perm = np.asarray(row_perm, dtype=np.int64)
        col_perm = np.asarray(col_perm, dtype=np.int64)
        if sorted(row_perm.tolist()) != list(range(self.n_c2)) or sorted(col_perm.tolist()) != list(range(self.n_v)):
            raise InputError("Permutations must reorder every row of B2 and every column exactly once")
        return Protomatrix(self.B1[:, col_perm], self.B2[row_perm][:, col_perm], n_core=self.n_core)

    def __repr__(self):
        return f"Protomatrix(n_v={self.n_v}, n_c1={self.n_c1}, n_c2={self.n_c2}, n_core={self.n_core})"


@dataclass(frozen=True, eq=False)
class RankDistribution:
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).ravel().copy()
        if h.size == 0:
            raise InputError("Rank distribution must have at least one entry")
        if (h < -1e-12).any() or (h > 1 + 1e-12).any():
            raise InputError("Rank probabilities must lie in [0, 1]")
        if abs(h.sum() - 1.0) > 1e-9:
            raise InputError(f"Rank probabilities sum to {h.sum():.12f}, not 1")
        h = np.clip(h, 0.0, 1.0)
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @property
    def M(self) -> int:
        return self.h.size - 1

    @property
    def capacity(self) -> float:
        return float(np.dot(np.arange(self.h.size), self.h))

    def tail(self) -> np.ndarray:
        """tail[k] = sum_{i >= k} h_i."""
        return np.cumsum(self.h[::-1])[::-1]

    @classmethod
    def point_mass(cls, rank: int, M: int) -> "RankDistribution":
        h = np.zeros(M + 1)
        h[rank] = 1.0
        return cls(h)


@dataclass(frozen=True, eq=False)
class DistFamily:
    """Rank distributions bucketed by capacity; bucket ``k`` has capacity key ``k * delta2``."""

    delta1: float
    delta2: float
    M: int
    q: int
    E: int
    buckets: Mapping[int, np.ndarray]
    eps: Mapping[int, np.ndarray]
    homogeneous: bool = False

    def __post_init__(self):
        object.__setattr__(self, "buckets", MappingProxyType(dict(self.buckets)))
        object.__setattr__(self, "eps", MappingProxyType(dict(self.eps)))

    def sorted_keys(self) -> List[int]:
        return sorted(self.buckets)

    def key_capacity(self, key: int) -> float:
        return key * self.delta2

    def rank_matrix(self, key: int) -> np.ndarray:
        return self.buckets[key]

    @property
    def size(self) -> int:
        return int(sum(b.shape[0] for b in self.buckets.values()))

    def __len__(self):
        return len(self.buckets)


@dataclass
class DEState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class DEOutcome:
    z: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class ThresholdResult:
    """``capacity`` is ``inf`` when no bucket (or erasure level) converges."""

    capacity: float
    bucket_key: Optional[int] = None
    eps: Optional[float] = None
    evaluations: int = 0

    @property
    def found(self) -> bool:
        return math.isfinite(self.capacity)


@dataclass(frozen=True)
class ThresholdRow:
    extension_rows: int
    capacity: float
    eps: Optional[float]
    rate: float
    integer_rate: Optional[float] = None

    @property
    def gap(self) -> float:
        return self.capacity - self.rate


@dataclass(frozen=True)
class TraceEntry:
    phase: str
    index: int
    candidate: int
    threshold: float
    accepted: bool

    def as_log_line(self) -> str:
        return (
            f"phase={self.phase} index={self.index} candidate={self.candidate} "
            f"threshold={self.threshold:.6f} accepted={self.accepted}"
        )


@dataclass(frozen=True, eq=False)
class LiftedCode:
    """Concrete code: labeled precode checks and punctured batch rows over K = Z1*Z2*n_v VNs."""

    protomatrix: Protomatrix
    delta: np.ndarray
    Z1: int
    Z2: int
    M: int
    m: int
    check_rows: Tuple[np.ndarray, ...]
    check_labels: Tuple[np.ndarray, ...]
    batch_rows: Tuple[np.ndarray, ...]
    batch_types: np.ndarray

    @property
    def Z(self) -> int:
        return self.Z1 * self.Z2

    @property
    def q(self) -> int:
        return 1 << self.m

    @property
    def K(self) -> int:
        return self.Z * self.protomatrix.n_v

    @property
    def A(self) -> int:
        return self.Z * (self.protomatrix.n_v - self.protomatrix.n_c1)

    @property
    def n_checks(self) -> int:
        return len(self.check_rows)

    @property
    def n_batches(self) -> int:
        return len(self.batch_rows)

    @property
    def core_batch_count(self) -> int:
        return int(np.count_nonzero(self.batch_types < self.protomatrix.n_core))

    def parity_check_matrix(self) -> np.ndarray:
        H = np.zeros((self.n_checks, self.K), dtype=np.int64)
        for r, (cols, labels) in enumerate(zip(self.check_rows, self.check_labels)):
            H[r, cols] = labels
        return H

    def with_labels(self, labels: List[np.ndarray]) -> "LiftedCode":
        return LiftedCode(
            protomatrix=self.protomatrix,
            delta=self.delta,
            Z1=self.Z1,
            Z2=self.Z2,
            M=self.M,
            m=self.m,
            check_rows=self.check_rows,
            check_labels=tuple(np.asarray(lbl, dtype=np.int64) for lbl in labels),
            batch_rows=self.batch_rows,
            batch_types=self.batch_types,
        )

    def first_batches(self, N: int) -> Tuple[np.ndarray, ...]:
        if N > self.n_batches:
            raise InputError(f"Code has {self.n_batches} batches, {N} requested")
        return self.batch_rows[:N]


@dataclass(frozen=True, eq=False)
class PacketBlock:
    """T x count matrix of field symbols, one packet per column."""

    payload: np.ndarray
    m: int = 8

    def __post_init__(self):
        payload = np.asarray(self.payload, dtype=np.int64)
        if payload.ndim != 2:
            raise InputError(f"Packet payload must be T x count, got shape {payload.shape}")
        if payload.size and (payload.min() < 0 or payload.max() >= (1 << self.m)):
            raise InputError(f"Packet symbols must lie in 0..{(1 << self.m) - 1}")
        object.__setattr__(self, "payload", payload)

    @property
    def T(self) -> int:
        return self.payload.shape[0]

    @property
    def count(self) -> int:
        return self.payload.shape[1]


@dataclass(frozen=True, eq=False)
class BatchPrecursor:
    index_set: np.ndarray
    G: np.ndarray
    X: np.ndarray


@dataclass(frozen=True, eq=False)
class BatchEquation:
    """Y = V[:, index_set] @ G @ H."""

    index_set: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Y: np.ndarray

    @property
    def received(self) -> int:
        return self.H.shape[1]


@dataclass(eq=False)
class DecodeResult:
    recovered: np.ndarray
    values: np.ndarray
    success: bool
    inactivated_count: int = 0
    rounds: int = 0

    @property
    def recovered_count(self) -> int:
        return int(self.recovered.sum())


@dataclass(frozen=True)
class FerPoint:
    N: int
    trials: int
    failures: int
    fer: float
    wilson_lo: float
    wilson_hi: float
    ml_bound: Optional[float] = None
    packet_erasure_rate: Optional[float] = field(default=None, compare=False)
