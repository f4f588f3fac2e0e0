"""Monte-Carlo transfer matrices of recoding line networks and frame-error-rate measurement."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.stats import binomtest

from pbnc import config
from pbnc.errors import InconsistentSystemError, InputError
from pbnc.models.models import BatchEquation, BatchPrecursor, DecoderKind, FerPoint, LiftedCode, PacketBlock
from pbnc.schemas.network import LineNetworkSpec
from pbnc.services.codec_service import (
    bp_decode,
    build_precode_encoder,
    inactivation_decode,
    outer_encode,
    precode_encode,
)
from pbnc.services.field_service import field_table_build
from pbnc.services.network_service import line_network_dist, ml_bound_series

logger = logging.getLogger(__name__)


def realize_transfer(netspec: LineNetworkSpec, rng: np.random.Generator) -> np.ndarray:
    """M x M end-to-end transfer matrix: erasures on the first hop, then recoding and erasures per relay."""
    field = field_table_build(netspec.field)
    M = netspec.M
    H = np.diag((rng.random(M) >= netspec.eps[0]).astype(np.int64))
    for eps in netspec.eps[1:]:
        H = field.matmul(H, field.random_matrix(M, M, rng))
        H[:, rng.random(M) < eps] = 0
    return H


def empirical_rank_distribution(netspec: LineNetworkSpec, trials: int, rng: np.random.Generator) -> np.ndarray:
    field = field_table_build(netspec.field)
    counts = np.zeros(netspec.M + 1)
    for _ in range(trials):
        counts[field.rank(realize_transfer(netspec, rng))] += 1
    return counts / max(trials, 1)


def channel_transmit(
    precursors: Sequence[BatchPrecursor], netspec: LineNetworkSpec, rng: np.random.Generator
) -> List[BatchEquation]:
    """Pass every batch through an independent transfer matrix; all-zero received columns are dropped."""
    field = field_table_build(netspec.field)
    batches = []
    for pre in precursors:
        H = realize_transfer(netspec, rng)
        H = H[:, H.any(axis=0)]
        Y = field.matmul(pre.X, H) if H.shape[1] else np.zeros((pre.X.shape[0], 0), dtype=np.int64)
        batches.append(BatchEquation(index_set=pre.index_set, G=pre.G, H=H, Y=Y))
    return batches


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    if trials < 1:
        raise InputError("Wilson interval needs at least one trial")
    ci = binomtest(int(failures), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def ml_bound_curve(netspec: LineNetworkSpec, A: int, N_range: Sequence[int]) -> List[float]:
    return ml_bound_series(line_network_dist(netspec), A, N_range)


@dataclass(frozen=True, eq=False)
class TrialPlan:
    netspec: LineNetworkSpec
    code: LiftedCode
    N_range: Tuple[int, ...]
    trials: int
    decoder: DecoderKind = DecoderKind.BP
    seed: int = 0
    max_inactive: Optional[int] = None
    T: int = 1
    early_stop: bool = False
    with_ml_bound: bool = True

    def __post_init__(self):
        if self.trials < 0:
            raise InputError("Trial count must be non-negative")
        if any(N < 1 for N in self.N_range):
            raise InputError("Batch counts must be at least 1")
        if self.netspec.M != self.code.M:
            raise InputError(f"Network batch size {self.netspec.M} differs from the code's M={self.code.M}")
        if self.netspec.field.m != self.code.m:
            raise InputError("Network and code use different fields")


@dataclass
class _Tally:
    trials: int = 0
    failures: int = 0
    erased_inputs: int = 0

    def __add__(self, other: "_Tally") -> "_Tally":
        return _Tally(self.trials + other.trials, self.failures + other.failures, self.erased_inputs + other.erased_inputs)


def run_trial(plan: TrialPlan, encoder, N: int, trial: int) -> Tuple[bool, int]:
    """One frame: fresh inputs, generators and transfer matrices; returns (failed, unrecovered inputs)."""
    rng = np.random.default_rng([plan.seed, N, trial])
    field = field_table_build(plan.code.m)
    inputs = PacketBlock(field.random_matrix(plan.T, encoder.A_eff, rng), plan.code.m)
    V = precode_encode(encoder, inputs)
    precursors = outer_encode(encoder.code.first_batches(N), V, plan.code.M, rng)
    batches = channel_transmit(precursors, plan.netspec, rng)
    if plan.decoder == DecoderKind.BP:
        result = bp_decode(batches, encoder.code)
    else:
        result = inactivation_decode(batches, encoder.code, plan.max_inactive)
    if not np.array_equal(result.values[result.recovered], V.payload.T[result.recovered]):
        raise InconsistentSystemError(f"Decoder reported a wrong packet (N={N}, trial={trial})")
    missing = int((~result.recovered[encoder.free]).sum())
    return missing > 0, missing


def _encoder(plan: TrialPlan):
    return build_precode_encoder(plan.code, np.random.default_rng([plan.seed]))


def effective_input_count(plan: TrialPlan) -> int:
    """Input packets every trial of the plan actually encodes."""
    return _encoder(plan).A_eff


def _run_trials(plan: TrialPlan, N: int, trials: Sequence[int]) -> _Tally:
    encoder = _encoder(plan)
    tally = _Tally()
    for t in trials:
        failed, missing = run_trial(plan, encoder, N, t)
        tally = tally + _Tally(1, int(failed), missing)
    return tally


def _run_point(plan: TrialPlan, N: int, pool: Optional[ProcessPoolExecutor], workers: int) -> _Tally:
    limit = config.EARLY_STOP_FAILURES if plan.early_stop else None
    size = max(1, math.ceil(plan.trials / (4 * workers))) if pool else 1
    chunks = [range(k, min(k + size, plan.trials)) for k in range(0, plan.trials, size)]
    tally = _Tally()
    wave = workers if pool else 1
    for start in range(0, len(chunks), wave):
        batch = chunks[start:start + wave]
        if pool:
            results = pool.map(_run_trials, [plan] * len(batch), [N] * len(batch), batch)
        else:
            results = [_run_trials(plan, N, chunk) for chunk in batch]
        for part in results:
            tally = tally + part
        if limit is not None and tally.failures >= limit:
            logger.info(f"N={N}: stopping after {tally.trials} trials with {tally.failures} failures")
            break
    return tally


def run_fer(plan: TrialPlan, workers: int = 1) -> List[FerPoint]:
    """Frame error rate of the first N batches for every N of the plan."""
    if plan.trials == 0:
        return []
    A_eff = effective_input_count(plan)
    bounds = [None] * len(plan.N_range)
    if plan.with_ml_bound:
        bounds = ml_bound_curve(plan.netspec, A_eff, plan.N_range)
    points = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for N, bound in zip(plan.N_range, bounds):
            if N > plan.code.n_batches:
                raise InputError(f"Code has {plan.code.n_batches} batches, N={N} requested")
            tally = _run_point(plan, N, pool, workers)
            lo, hi = wilson_interval(tally.failures, tally.trials)
            erasure_rate = tally.erased_inputs / (tally.trials * A_eff) if A_eff else 0.0
            point = FerPoint(
                N=N, trials=tally.trials, failures=tally.failures, fer=tally.failures / tally.trials,
                wilson_lo=lo, wilson_hi=hi, ml_bound=bound, packet_erasure_rate=erasure_rate,
            )
            logger.info(f"N={N}: FER={point.fer:.4g} ({point.failures}/{point.trials})")
            logger.debug(f"N={N}: input packet erasure rate {erasure_rate:.4g}")
            points.append(point)
    finally:
        if pool:
            pool.shutdown()
    return points


@dataclass(frozen=True)
class OverheadReport:
    target_fer: float
    N: Optional[int]
    rate: Optional[float]
    N_ml: Optional[int]
    overhead: Optional[float]


def overhead_report(points: Sequence[FerPoint], A: int, target_fer: float = 0.1) -> OverheadReport:
    """Smallest N reaching the target FER, its rate A/N and the overhead against the ML bound."""
    reached = [p.N for p in points if p.fer <= target_fer]
    N = min(reached) if reached else None
    bound_reached = [p.N for p in points if p.ml_bound is not None and p.ml_bound <= target_fer]
    N_ml = min(bound_reached) if bound_reached else None
    overhead = N / N_ml - 1.0 if N is not None and N_ml else None
    return OverheadReport(
        target_fer=target_fer, N=N, rate=A / N if N else None, N_ml=N_ml, overhead=overhead,
    )
