"""Rank distributions of line networks, capacity, dominance, capacity-bucketed families and the ML bound."""

from functools import lru_cache
from itertools import product
from typing import Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.stats import binom

from pbnc import config
from pbnc.errors import GridTooLargeError, InputError
from pbnc.models.models import DistFamily, RankDistribution
from pbnc.schemas.network import LineNetworkSpec
from pbnc.services.field_service import zeta_table

logger = logging.getLogger(__name__)


def single_hop_dist(eps: float, M: int) -> RankDistribution:
    """Binomial rank distribution of one erasure hop without recoding."""
    if not 0.0 <= eps <= 1.0:
        raise InputError(f"Erasure probability {eps} outside [0, 1]")
    return RankDistribution(binom.pmf(np.arange(M + 1), M, 1.0 - eps))


@lru_cache(maxsize=4096)
def _transition_matrix(eps: float, M: int, q: int) -> np.ndarray:
    Z = zeta_table(M, q)
    received = binom.pmf(np.arange(M + 1), M, 1.0 - eps)
    P = np.zeros((M + 1, M + 1))
    for r in range(M + 1):
        s = np.arange(r, M + 1)
        j = np.arange(r, M + 1)
        coupling = np.power(float(q), -np.outer(s - r, j - r).astype(float))
        terms = (Z[r, s][:, None] * Z[r, j][None, :] * received[j][None, :] * coupling) / Z[r, r]
        P[s, r] = terms.sum(axis=1)
    P.flags.writeable = False
    return P


def transition_matrix(eps: float, M: int, q: int) -> np.ndarray:
    """P[s, r] = Pr{rank r after the hop | rank s before it}; line_step(h) = h @ P."""
    return _transition_matrix(float(eps), int(M), int(q))


def line_step(h_prev: RankDistribution, eps: float, M: int, q: int) -> RankDistribution:
    """Push a rank distribution through one recoding hop with erasure probability ``eps``."""
    if h_prev.M != M:
        raise InputError(f"Rank distribution has M={h_prev.M}, expected {M}")
    h = h_prev.h @ transition_matrix(eps, M, q)
    return RankDistribution(h / h.sum())


@lru_cache(maxsize=8192)
def _line_network_h(eps: Tuple[float, ...], M: int, q: int) -> np.ndarray:
    if len(eps) == 1:
        return single_hop_dist(eps[0], M).h
    h = _line_network_h(eps[:-1], M, q) @ transition_matrix(eps[-1], M, q)
    return h / h.sum()


def line_network_dist(netspec: LineNetworkSpec) -> RankDistribution:
    """End-to-end rank distribution of a line network with RLNC at every relay."""
    return RankDistribution(_line_network_h(tuple(float(e) for e in netspec.eps), netspec.M, netspec.q))


def capacity(h: RankDistribution) -> float:
    return h.capacity


def dominates(h_a: RankDistribution, h_b: RankDistribution, tol: float = 1e-12) -> bool:
    """True iff h_a is tail-dominated by h_b (h_a is the worse channel)."""
    if h_a.M != h_b.M:
        raise InputError("Rank distributions of different batch sizes are not comparable")
    return bool((h_a.tail() <= h_b.tail() + tol).all())


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

def _grid(delta1: float) -> np.ndarray:
    steps = int(math.floor(round(1.0 / delta1, 9)))
    return np.round(np.arange(steps + 1) * delta1, 12)


def bucket_key(cap: float, delta2: float) -> int:
    """Nearest multiple of delta2; exact half-way points go to the lower bucket."""
    return int(math.ceil(round(cap / delta2 - 0.5, 9)))


def enumerate_family(
    template: LineNetworkSpec,
    delta1: Optional[float] = None,
    delta2: Optional[float] = None,
    homogeneous: bool = False,
) -> DistFamily:
    """Rank distributions of every eps grid point of the template's line network, bucketed by capacity."""
    delta1 = config.DELTA1 if delta1 is None else delta1
    delta2 = config.DELTA2_FACTOR * template.M if delta2 is None else delta2
    if delta1 <= 0 or delta2 <= 0:
        raise InputError("Grid step and bucket width must be positive")
    M, q, E = template.M, template.q, template.E
    grid = _grid(delta1)
    points = grid.size if homogeneous else grid.size ** E
    if points > config.FAMILY_GRID_LIMIT:
        raise GridTooLargeError(
            f"Family grid has {points} points (limit {config.FAMILY_GRID_LIMIT}); use a coarser delta1"
        )
    logger.info(f"Enumerating {points} rank distributions (E={E}, M={M}, q={q}, delta1={delta1})")
    first = binom.pmf(np.arange(M + 1)[None, :], M, 1.0 - grid[:, None])
    transitions = np.stack([transition_matrix(e, M, q) for e in grid])
    if homogeneous:
        H = first
        for _ in range(E - 1):
            H = np.einsum("gs,gsr->gr", H, transitions)
        eps = np.repeat(grid[:, None], E, axis=1)
    else:
        H = first
        for _ in range(E - 1):
            H = np.einsum("ps,gsr->pgr", H, transitions).reshape(-1, M + 1)
        eps = np.array(list(product(grid, repeat=E)))
    H = H / H.sum(axis=1, keepdims=True)
    return _bucket(H, eps, delta1, delta2, M, q, E, homogeneous)


def _bucket(H, eps, delta1, delta2, M, q, E, homogeneous) -> DistFamily:
    caps = H @ np.arange(M + 1)
    keys = np.ceil(np.round(caps / delta2 - 0.5, 9)).astype(np.int64)
    order = np.argsort(keys, kind="stable")
    buckets, eps_map = {}, {}
    for key in np.unique(keys):
        idx = order[keys[order] == key]
        buckets[int(key)] = H[idx]
        eps_map[int(key)] = eps[idx]
    logger.info(f"Family has {H.shape[0]} distributions in {len(buckets)} capacity buckets")
    return DistFamily(
        delta1=delta1, delta2=delta2, M=M, q=q, E=E,
        buckets=buckets, eps=eps_map, homogeneous=homogeneous,
    )


def family_from_distributions(
    distributions: Sequence[np.ndarray], eps: Sequence[Sequence[float]], M: int, q: int,
    delta1: float, delta2: float, E: int = 0, homogeneous: bool = False,
) -> DistFamily:
    """Bucket arbitrary (e.g. user-supplied) rank distributions by capacity."""
    H = np.asarray(distributions, dtype=float).reshape(-1, M + 1)
    for row in H:
        RankDistribution(row)
    eps_arr = np.asarray(eps, dtype=float).reshape(H.shape[0], -1)
    return _bucket(H, eps_arr, delta1, delta2, M, q, E, homogeneous)


def family_rows(family: DistFamily) -> Iterable[Tuple[np.ndarray, np.ndarray, float]]:
    """(eps vector, h vector, capacity) for every member, in bucket order."""
    ranks = np.arange(family.M + 1)
    for key in family.sorted_keys():
        for eps, h in zip(family.eps[key], family.buckets[key]):
            yield eps, h, float(h @ ranks)


# ---------------------------------------------------------------------------
# ML lower bound
# ---------------------------------------------------------------------------

def ml_bound_series(h: RankDistribution, A: int, N_values: Sequence[int]) -> List[float]:
    """Pr{sum of N i.i.d. ranks < A} for each N, from one truncated convolution pass."""
    if A < 0:
        raise InputError("Number of input packets must be non-negative")
    if any(N < 1 for N in N_values):
        raise InputError("Batch counts must be at least 1")
    if A == 0:
        return [0.0 for _ in N_values]
    wanted = sorted(set(int(N) for N in N_values))
    results = {}
    dist = np.zeros(A)
    dist[0] = 1.0
    done = 0
    for N in wanted:
        while done < N:
            dist = np.convolve(dist, h.h)[:A]
            done += 1
        results[N] = min(1.0, math.fsum(dist))
    return [results[int(N)] for N in N_values]


def ml_lower_bound(h: RankDistribution, N: int, A: int) -> float:
    """Probability that N batches carry fewer than A independent packets."""
    return ml_bound_series(h, A, [N])[0]
