"""Randomized search for core and extension protomatrices, and lifting with a decodability retry."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np

from pbnc import config, storage
from pbnc.errors import InputError, RetryCapExceededError
from pbnc.models.models import DistFamily, LiftedCode, Protomatrix, TraceEntry
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import DEConfig, OptConfig, OptimizerCheckpoint
from pbnc.services.density_evolution_service import threshold, threshold_homogeneous
from pbnc.services.protograph_service import (
    assemble_lifted_code,
    bp_decodable,
    check_puncturing,
    peg_lift_precode,
    random_lift_batches,
)

logger = logging.getLogger(__name__)
trace_logger = logging.getLogger("pbnc.optimizer.trace")

# candidates within this margin of the incumbent are not an improvement
TIE_TOLERANCE = 1e-9

Channel = Union[DistFamily, LineNetworkSpec]


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------

def rand_matrix(rows: int, cols: int, degrees: Sequence[int], cap: int, rng: np.random.Generator) -> np.ndarray:
    """Random rows x cols matrix with entries in 0..cap whose row i sums to degrees[i]."""
    degrees = [int(d) for d in degrees]
    if len(degrees) != rows:
        raise InputError(f"Degree vector has {len(degrees)} entries, expected {rows}")
    out = np.zeros((rows, cols), dtype=np.int64)
    for i, d in enumerate(degrees):
        if not 0 <= d <= cols * cap:
            raise InputError(f"Row degree {d} infeasible with {cols} columns and entry cap {cap}")
        for _ in range(d):
            open_cols = np.flatnonzero(out[i] < cap)
            out[i, rng.choice(open_cols)] += 1
    return out


def rand_row(n: int, cap: int, max_degree: int, rng: np.random.Generator) -> np.ndarray:
    """Random length-n row with entries in 0..cap and a degree between 1 and max_degree."""
    if n < 1 or cap < 1 or max_degree < 0:
        raise InputError("rand_row needs n >= 1, cap >= 1 and max_degree >= 0")
    top = min(max_degree, n * cap)
    if top == 0:
        return np.zeros(n, dtype=np.int64)
    degree = int(rng.integers(1, top + 1))
    return rand_matrix(1, n, [degree], cap, rng)[0]


def rand_punc_vec(delta_ref: Sequence[float], rng: np.random.Generator, step: float = 0.1) -> np.ndarray:
    """Random puncturing vector with the same total as ``delta_ref``, built from pairwise transfers."""
    delta = np.array(delta_ref, dtype=float)
    if ((delta < 0) | (delta >= 1)).any():
        raise InputError("Puncturing fractions must lie in [0, 1)")
    n = delta.size
    if n and delta.sum() >= n:
        raise InputError("Puncturing total cannot be spread over entries below 1")
    if n < 2:
        return delta
    ceiling = 1.0 - 1e-9
    for _ in range(n):
        a, b = rng.choice(n, size=2, replace=False)
        amount = rng.uniform(0.0, min(step, delta[a], max(ceiling - delta[b], 0.0)))
        delta[a] -= amount
        delta[b] += amount
    return np.clip(delta, 0.0, ceiling)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

@dataclass
class OptimizerResult:
    B2: np.ndarray
    delta: np.ndarray
    threshold: float
    trace: List[TraceEntry] = field(default_factory=list)


class ThresholdOracle:
    """Threshold of [B1; B2] under a fixed channel family or homogeneous line-network template."""

    def __init__(
        self, B1: np.ndarray, channel: Channel, de_config: Optional[DEConfig] = None, workers: int = 1,
        resolution: Optional[float] = None,
    ):
        self.B1 = np.asarray(B1, dtype=np.int64)
        self.channel = channel
        self.de_config = de_config or DEConfig()
        self.workers = workers
        self.resolution = resolution

    @property
    def M(self) -> int:
        return self.channel.M

    def __call__(self, B2: np.ndarray, delta: Sequence[float]) -> float:
        protomatrix = Protomatrix(self.B1, np.asarray(B2, dtype=np.int64))
        if isinstance(self.channel, DistFamily):
            return threshold(protomatrix, delta, self.channel, self.de_config, self.workers).capacity
        return threshold_homogeneous(protomatrix, delta, self.channel, self.de_config, self.resolution).capacity


def _record(trace: List[TraceEntry], entry: TraceEntry):
    trace.append(entry)
    trace_logger.info(entry.as_log_line())
    if entry.accepted:
        logger.info(f"Accepted {entry.phase} candidate {entry.candidate}: C*={entry.threshold:.4f}")
    else:
        logger.debug(entry.as_log_line())


def save_checkpoint(path: Union[str, Path], B2: np.ndarray, delta: np.ndarray, c_min: float, outer_index: int, rng: np.random.Generator):
    checkpoint = OptimizerCheckpoint(
        B2=np.asarray(B2).tolist(),
        delta=[float(d) for d in delta],
        threshold=c_min if math.isfinite(c_min) else None,
        outer_index=outer_index,
        rng_state=rng.bit_generator.state,
    )
    storage.save_model(path, checkpoint)


def load_checkpoint(path: Union[str, Path], rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, float, int]:
    """Restore the incumbent and put ``rng`` back into the saved state."""
    checkpoint = storage.load_model(path, OptimizerCheckpoint)
    rng.bit_generator.state = checkpoint.rng_state
    c_min = math.inf if checkpoint.threshold is None else checkpoint.threshold
    return (
        np.asarray(checkpoint.B2, dtype=np.int64),
        np.asarray(checkpoint.delta, dtype=float),
        c_min,
        checkpoint.outer_index,
    )


def optimize_core(
    B1: np.ndarray,
    opt: OptConfig,
    oracle: Callable[[np.ndarray, Sequence[float]], float],
    M: int,
    rng: Optional[np.random.Generator] = None,
    initial: Optional[Tuple[np.ndarray, Sequence[float]]] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    resume: bool = False,
) -> OptimizerResult:
    """
    Alternate row-degree-fixed, column-degree-fixed and puncturing phases, keeping any candidate
    whose threshold is strictly below the incumbent's.
    """
    rng = rng if rng is not None else np.random.default_rng(opt.seed)
    B1 = np.asarray(B1, dtype=np.int64)
    n_v = B1.shape[1]
    m_c = opt.n_core
    trace: List[TraceEntry] = []
    start = 0

    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        best_B2, best_delta, c_min, start = load_checkpoint(checkpoint_path, rng)
        logger.info(f"Resuming core search after outer iteration {start} with C*={c_min:.4f}")
    elif initial is not None:
        best_B2 = np.asarray(initial[0], dtype=np.int64)
        best_delta = check_puncturing(initial[1], best_B2.shape[0])
        c_min = oracle(best_B2, best_delta)
        logger.info(f"Starting core search from supplied incumbent with C*={c_min:.4f}")
    else:
        best_delta = check_puncturing(opt.delta_init, m_c)
        best_B2 = rand_matrix(m_c, n_v, opt.d_init, opt.b_max, rng)
        c_min = math.inf

    def consider(phase: str, index: int, candidate: int, B2: np.ndarray, delta: np.ndarray) -> bool:
        nonlocal best_B2, best_delta, c_min
        value = oracle(B2, delta)
        accepted = value < c_min - TIE_TOLERANCE
        _record(trace, TraceEntry(phase=phase, index=index, candidate=candidate, threshold=value, accepted=accepted))
        if accepted:
            best_B2, best_delta, c_min = B2, delta, value
        return accepted

    for outer in range(start, opt.i_star):
        row_degrees = best_B2.sum(axis=1)
        for k in range(opt.ir_star):
            consider("row", outer, k, rand_matrix(m_c, n_v, row_degrees, opt.b_max, rng), best_delta)

        col_degrees = best_B2.sum(axis=0)
        for k in range(opt.ic_star):
            candidate = rand_matrix(n_v, m_c, col_degrees, opt.b_max, rng).T.copy()
            if not (candidate.sum(axis=1) <= M).any():
                logger.debug(f"Column candidate {k} has no batch check that can start decoding")
                continue
            consider("col", outer, k, candidate, best_delta)

        for k in range(opt.ip_star):
            consider("punc", outer, k, best_B2, rand_punc_vec(best_delta, rng, opt.punc_step))

        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, best_B2, best_delta, c_min, outer + 1, rng)

    logger.info(f"Core search finished: C*={c_min:.4f}")
    return OptimizerResult(B2=best_B2, delta=np.asarray(best_delta), threshold=c_min, trace=trace)


def optimize_extension(
    B1: np.ndarray,
    B2_core: np.ndarray,
    delta: Sequence[float],
    opt: OptConfig,
    oracle: Callable[[np.ndarray, Sequence[float]], float],
    M: int,
    rng: Optional[np.random.Generator] = None,
) -> OptimizerResult:
    """Append extension rows one at a time, each the best of ``ir_star_ext`` random rows."""
    rng = rng if rng is not None else np.random.default_rng(opt.seed)
    B2_core = np.asarray(B2_core, dtype=np.int64)
    n_v = B2_core.shape[1]
    delta = np.asarray(delta, dtype=float)
    m_e = delta.size - B2_core.shape[0]
    if m_e < 0:
        raise InputError("Puncturing vector is shorter than the core")
    trace: List[TraceEntry] = []
    rows = np.zeros((0, n_v), dtype=np.int64)
    c_min = math.inf
    for s in range(1, m_e + 1):
        sub_delta = delta[: B2_core.shape[0] + s]
        best_row, c_min = None, math.inf
        for k in range(opt.ir_star_ext):
            row = rand_row(n_v, opt.b_max_prime, M, rng)
            value = oracle(np.vstack([B2_core, rows, row]), sub_delta)
            accepted = best_row is None or value < c_min - TIE_TOLERANCE
            _record(trace, TraceEntry(phase="ext", index=s, candidate=k, threshold=value, accepted=accepted))
            if accepted:
                best_row, c_min = row, value
        rows = np.vstack([rows, best_row])
        logger.info(f"Extension row {s}: {best_row.tolist()} C*={c_min:.4f}")
    return OptimizerResult(B2=rows, delta=delta[B2_core.shape[0]:], threshold=c_min, trace=trace)


# ---------------------------------------------------------------------------
# Lifting
# ---------------------------------------------------------------------------

def lift_with_retry(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    Z1: int,
    Z2: int,
    M: int,
    m: int,
    rng: np.random.Generator,
    retry_cap: Optional[int] = None,
) -> LiftedCode:
    """PEG-lift the precode once, re-lift the core until it is BP-decodable, then lift the extension."""
    retry_cap = config.LIFT_RETRY_CAP if retry_cap is None else retry_cap
    delta = check_puncturing(delta, protomatrix.n_c2)
    n_core = protomatrix.n_core
    K = protomatrix.n_v * Z1 * Z2
    check_rows, check_labels = peg_lift_precode(protomatrix.B1, Z1, Z2, m, rng)
    for attempt in range(1, retry_cap + 1):
        core_rows, core_types = random_lift_batches(protomatrix.B2[:n_core], delta[:n_core], Z1, Z2, rng)
        if bp_decodable(check_rows, core_rows, K):
            logger.info(f"Core lifting is BP-decodable after {attempt} attempt(s)")
            break
        logger.debug(f"Core lifting attempt {attempt} is not BP-decodable")
    else:
        raise RetryCapExceededError(f"No BP-decodable core lifting within {retry_cap} attempts")
    ext_rows, ext_types = random_lift_batches(
        protomatrix.B2[n_core:], delta[n_core:], Z1, Z2, rng, type_offset=n_core
    )
    return assemble_lifted_code(
        protomatrix, delta, Z1, Z2, M, m,
        check_rows, check_labels,
        list(core_rows) + list(ext_rows),
        np.concatenate([core_types, ext_types]),
    )
