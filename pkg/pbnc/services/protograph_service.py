"""Protomatrix accounting, preset constructions and two-step lifting."""

from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

from pbnc.errors import InputError
from pbnc.models.models import LiftedCode, Protomatrix
from pbnc.services.field_service import field_table_build

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


def check_puncturing(delta: Sequence[float], n_c2: int) -> np.ndarray:
    """Validate a puncturing vector against the number of B-CN types."""
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size != n_c2:
        raise InputError(f"Puncturing vector has {delta.size} entries, expected {n_c2}")
    if ((delta < 0) | (delta >= 1)).any():
        raise InputError("Puncturing fractions must lie in [0, 1)")
    if n_c2 and n_c2 - delta.sum() <= 0:
        raise InputError("Puncturing removes every batch row")
    return delta


def surviving_rows(delta_i: float, Z: int) -> int:
    """ceil((1 - delta_i) * Z), robust to representation error in delta_i."""
    return int(math.ceil(round((1.0 - delta_i) * Z, 9)))


def design_rate(protomatrix: Protomatrix, delta: Sequence[float]) -> float:
    """(n_v - n_c1) / (n_c2 - sum(delta))."""
    delta = np.asarray(delta, dtype=float).ravel()
    denominator = protomatrix.n_c2 - float(delta.sum())
    if denominator <= 0:
        raise InputError(f"Design rate undefined: n_c2 - sum(delta) = {denominator}")
    return (protomatrix.n_v - protomatrix.n_c1) / denominator


def integer_count_rate(protomatrix: Protomatrix, delta: Sequence[float], Z1: int, Z2: int) -> float:
    """Rate of the lifted code counting surviving batch rows."""
    Z = Z1 * Z2
    batches = sum(surviving_rows(d, Z) for d in np.asarray(delta, dtype=float).ravel())
    if batches == 0:
        raise InputError("Lifted code has no batch rows")
    return Z * (protomatrix.n_v - protomatrix.n_c1) / batches


def rate_profile(protomatrix: Protomatrix, delta: Sequence[float]) -> List[float]:
    """Design rate of the core and of every extension prefix."""
    delta = np.asarray(delta, dtype=float).ravel()
    rates = []
    for s in range(protomatrix.n_extension + 1):
        rows = protomatrix.n_core + s
        rates.append(design_rate(protomatrix.truncated(rows), delta[:rows]))
    return rates


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _chunk_rows(n_v: int, L: int) -> np.ndarray:
    return np.kron(np.eye(n_v // L, dtype=np.int64), np.ones((1, L), dtype=np.int64))


def preset_l_chunked(B1: np.ndarray, L: int) -> Protomatrix:
    """LDPC-precoded chunked code: disjoint all-one chunks of L VNs."""
    B1 = np.asarray(B1, dtype=np.int64)
    n_v = B1.shape[1]
    if L < 1 or n_v % L:
        raise InputError(f"Chunk size L={L} does not divide n_v={n_v}")
    return Protomatrix(B1, _chunk_rows(n_v, L))


def preset_overlapped(n_v: int, L: int, n_o: int) -> Protomatrix:
    """Overlapped chunked code; each chunk repeats n_o packets of the next one, end-around."""
    if L < 2 or n_v % L:
        raise InputError(f"Chunk size L={L} does not divide n_v={n_v}")
    if not 0 < n_o < L:
        raise InputError(f"Overlap n_o={n_o} must satisfy 0 < n_o < L={L}")
    n_chunks = n_v // L
    if n_chunks < 2:
        raise InputError("Overlapped chunking needs at least two chunks")
    eye = np.eye(L, dtype=np.int64)
    R1 = eye[L - n_o:]
    R2 = eye[:n_o]
    B1 = np.zeros((n_chunks * n_o, n_v), dtype=np.int64)
    for k in range(n_chunks):
        rows = slice(k * n_o, (k + 1) * n_o)
        nxt = (k + 1) % n_chunks
        B1[rows, k * L:(k + 1) * L] += R1
        B1[rows, nxt * L:(nxt + 1) * L] += R2
    return Protomatrix(B1, _chunk_rows(n_v, L))


def preset_gamma(B1_info: np.ndarray, L: int) -> Protomatrix:
    """Gamma network code: systematic precode, batches over the parity part."""
    info = np.asarray(B1_info, dtype=np.int64)
    n_c1 = info.shape[0]
    if L < 1 or n_c1 % L:
        raise InputError(f"Chunk size L={L} does not divide n_c1={n_c1}")
    B1 = np.hstack([info, np.eye(n_c1, dtype=np.int64)])
    B2 = np.hstack([np.zeros((n_c1 // L, info.shape[1]), dtype=np.int64), _chunk_rows(n_c1, L)])
    return Protomatrix(B1, B2)


# ---------------------------------------------------------------------------
# Lifting
# ---------------------------------------------------------------------------

def _expand(edges: Dict[Edge, List[int]], n_rows: int, Z: int) -> List[List[int]]:
    """Replace each base edge (row, col) with shift s by the circulant row t -> col (t+s) mod Z."""
    rows: List[List[int]] = [[] for _ in range(n_rows * Z)]
    for (r, c), shifts in edges.items():
        for s in shifts:
            for t in range(Z):
                rows[r * Z + t].append(c * Z + (t + s) % Z)
    for row in rows:
        row.sort()
    return rows


def _cn_depths(root: int, vn_adj: List[List[int]], cn_adj: List[List[int]], n_cn: int) -> np.ndarray:
    depth = np.full(n_cn, -1, dtype=np.int64)
    frontier = [root]
    seen = {root}
    level = 0
    while frontier:
        reached = []
        for v in frontier:
            for c in vn_adj[v]:
                if depth[c] < 0:
                    depth[c] = level
                    reached.append(c)
        frontier = []
        for c in reached:
            for v in cn_adj[c]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        level += 1
    return depth


def _peg_shifts(base: np.ndarray, Z: int) -> Dict[Edge, List[int]]:
    """
    Choose circulant shifts for every unit edge of ``base`` greedily, one base edge at a time.

    Each shift connects VN copy 0 of the column type to the CN copy of the row type that is
    farthest away in the current graph (unreached counts as farthest), ties broken by smaller
    CN degree and then lower copy index.
    """
    n_rows, n_cols = base.shape
    n_cn, n_vn = n_rows * Z, n_cols * Z
    vn_adj: List[List[int]] = [[] for _ in range(n_vn)]
    cn_adj: List[List[int]] = [[] for _ in range(n_cn)]
    shifts: Dict[Edge, List[int]] = {}
    col_order = sorted(range(n_cols), key=lambda j: (int(base[:, j].sum()), j))
    for j in col_order:
        root = j * Z
        for i in range(n_rows):
            for _ in range(int(base[i, j])):
                depth = _cn_depths(root, vn_adj, cn_adj, n_cn)
                best = None
                for t in range(Z):
                    c = i * Z + t
                    if c in vn_adj[root]:
                        continue
                    d = depth[c]
                    key = (0 if d < 0 else 1, -d, len(cn_adj[c]), t)
                    if best is None or key < best[0]:
                        best = (key, t)
                if best is None:
                    raise InputError(f"Lifting factor {Z} too small for entry {int(base[i, j])}")
                s = (-best[1]) % Z
                shifts.setdefault((i, j), []).append(s)
                for t in range(Z):
                    c = i * Z + t
                    v = j * Z + (t + s) % Z
                    vn_adj[v].append(c)
                    cn_adj[c].append(v)
    return shifts


def _rows_to_base(rows: List[List[int]], n_cols: int) -> np.ndarray:
    base = np.zeros((len(rows), n_cols), dtype=np.int64)
    for r, cols in enumerate(rows):
        base[r, cols] = 1
    return base


def _check_lifting_factor(B: np.ndarray, Z1: int, Z2: int):
    if Z1 < 1 or Z2 < 1:
        raise InputError(f"Lifting factors must be positive, got Z1={Z1}, Z2={Z2}")
    if B.size and Z1 < int(B.max()):
        raise InputError(f"Z1={Z1} is smaller than the largest protograph entry {int(B.max())}")


def peg_lift_precode(
    B1: np.ndarray, Z1: int, Z2: int, m: int, rng: np.random.Generator
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """PEG two-step lift of the precode part with uniformly random nonzero edge labels."""
    B1 = np.asarray(B1, dtype=np.int64)
    _check_lifting_factor(B1, Z1, Z2)
    n_c1, n_v = B1.shape
    first = _expand(_peg_shifts(B1, Z1), n_c1, Z1)
    T_prime = _rows_to_base(first, n_v * Z1)
    second = _expand(_peg_shifts(T_prime, Z2), n_c1 * Z1, Z2)
    field = field_table_build(m)
    check_rows = [np.asarray(row, dtype=np.int64) for row in second]
    check_labels = [field.random_nonzero(row.size, rng) for row in check_rows]
    logger.debug(f"PEG lifted precode into {len(check_rows)} checks over {n_v * Z1 * Z2} VNs")
    return check_rows, check_labels


def random_lift_batches(
    B2: np.ndarray, delta: Sequence[float], Z1: int, Z2: int, rng: np.random.Generator,
    type_offset: int = 0,
) -> Tuple[List[np.ndarray], np.ndarray]:
    """Two-step random lift of the batch part followed by per-type row puncturing."""
    B2 = np.asarray(B2, dtype=np.int64)
    _check_lifting_factor(B2, Z1, Z2)
    n_c2, n_v = B2.shape
    delta = check_puncturing(delta, n_c2) if n_c2 else np.zeros(0)
    first_shifts: Dict[Edge, List[int]] = {}
    for i, j in zip(*np.nonzero(B2)):
        first_shifts[(int(i), int(j))] = [int(s) for s in rng.choice(Z1, size=int(B2[i, j]), replace=False)]
    first = _expand(first_shifts, n_c2, Z1)
    second_shifts: Dict[Edge, List[int]] = {}
    for r, cols in enumerate(first):
        for c in cols:
            second_shifts[(r, c)] = [int(rng.integers(Z2))]
    lifted = _expand(second_shifts, n_c2 * Z1, Z2)
    Z = Z1 * Z2
    rows: List[np.ndarray] = []
    types: List[int] = []
    for i in range(n_c2):
        keep = surviving_rows(delta[i], Z)
        chosen = np.sort(rng.choice(Z, size=keep, replace=False))
        for t in chosen:
            rows.append(np.asarray(lifted[i * Z + int(t)], dtype=np.int64))
            types.append(type_offset + i)
    return rows, np.asarray(types, dtype=np.int64)


def _vn_checks(check_rows: Sequence[np.ndarray], K: int) -> List[List[int]]:
    adj: List[List[int]] = [[] for _ in range(K)]
    for c, row in enumerate(check_rows):
        for v in row:
            adj[int(v)].append(c)
    return adj


def peel(check_rows: Sequence[np.ndarray], erased: np.ndarray) -> np.ndarray:
    """Iterative check peeling; returns the mask of VNs still erased."""
    erased = np.asarray(erased, dtype=bool).copy()
    adj = _vn_checks(check_rows, erased.size)
    counts = [int(erased[row].sum()) for row in check_rows]
    stack = [c for c, n in enumerate(counts) if n == 1]
    while stack:
        c = stack.pop()
        if counts[c] != 1:
            continue
        row = check_rows[c]
        v = int(row[erased[row]][0])
        erased[v] = False
        for c2 in adj[v]:
            counts[c2] -= 1
            if counts[c2] == 1:
                stack.append(c2)
    return erased


def bp_decodable(check_rows: Sequence[np.ndarray], batch_rows: Sequence[np.ndarray], K: int) -> bool:
    """True iff peeling the precode recovers every VN not covered by a batch row."""
    covered = np.zeros(K, dtype=bool)
    for row in batch_rows:
        covered[row] = True
    return not peel(check_rows, ~covered).any()


def tanner_girth(check_rows: Sequence[np.ndarray], K: int) -> float:
    """Length of the shortest cycle of the bipartite graph; inf if it has none."""
    n = K + len(check_rows)
    adj: List[List[int]] = [[] for _ in range(n)]
    for c, row in enumerate(check_rows):
        for v in row:
            adj[int(v)].append(K + c)
            adj[K + c].append(int(v))
    girth = math.inf
    for start in range(K):
        dist = [-1] * n
        parent = [-1] * n
        dist[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if 2 * dist[u] >= girth:
                break
            for v in adj[u]:
                if dist[v] == -1:
                    dist[v] = dist[u] + 1
                    parent[v] = u
                    queue.append(v)
                elif v != parent[u]:
                    girth = min(girth, dist[u] + dist[v] + 1)
        if girth == 4:
            return 4
    return girth


def assemble_lifted_code(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    Z1: int,
    Z2: int,
    M: int,
    m: int,
    check_rows: Sequence[np.ndarray],
    check_labels: Sequence[np.ndarray],
    batch_rows: Sequence[np.ndarray],
    batch_types: np.ndarray,
) -> LiftedCode:
    return LiftedCode(
        protomatrix=protomatrix,
        delta=np.asarray(delta, dtype=float),
        Z1=Z1,
        Z2=Z2,
        M=M,
        m=m,
        check_rows=tuple(np.asarray(r, dtype=np.int64) for r in check_rows),
        check_labels=tuple(np.asarray(lbl, dtype=np.int64) for lbl in check_labels),
        batch_rows=tuple(np.asarray(r, dtype=np.int64) for r in batch_rows),
        batch_types=np.asarray(batch_types, dtype=np.int64),
    )


def lift(
    protomatrix: Protomatrix, delta: Sequence[float], Z1: int, Z2: int, M: int, m: int,
    rng: np.random.Generator, n_rows: Optional[int] = None,
) -> LiftedCode:
    """Single-shot lift (no decodability retry) of the first ``n_rows`` B2 rows."""
    n_rows = protomatrix.n_c2 if n_rows is None else n_rows
    check_rows, check_labels = peg_lift_precode(protomatrix.B1, Z1, Z2, m, rng)
    batch_rows, batch_types = random_lift_batches(protomatrix.B2[:n_rows], np.asarray(delta)[:n_rows], Z1, Z2, rng)
    return assemble_lifted_code(
        protomatrix.truncated(n_rows), np.asarray(delta)[:n_rows], Z1, Z2, M, m,
        check_rows, check_labels, batch_rows, batch_types,
    )
