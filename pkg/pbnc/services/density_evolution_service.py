"""
Protograph density evolution over edge types and threshold search over rank-distribution families.

The scalar update functions (``lcn_update``, ``bcn_update``, ``vcn_update``, ``app_update``) are the
reference semantics. ``DensityEvolution`` evaluates the same flooding schedule for a whole block of
rank distributions at once and is what the threshold searches use.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.special import bdtr, bdtrc
from scipy.stats import binom

from pbnc import config
from pbnc.errors import InputError
from pbnc.models.models import (
    BcnForm,
    DEOutcome,
    DEState,
    DistFamily,
    OmegaMode,
    Protomatrix,
    RankDistribution,
    ThresholdResult,
    ThresholdRow,
)
from pbnc.schemas.network import LineNetworkSpec
from pbnc.schemas.settings import DEConfig
from pbnc.services.field_service import zeta_table
from pbnc.services.network_service import line_network_dist
from pbnc.services.protograph_service import check_puncturing, design_rate, integer_count_rate

logger = logging.getLogger(__name__)

NO_THRESHOLD = ThresholdResult(capacity=math.inf)


# ---------------------------------------------------------------------------
# Scalar update rules
# ---------------------------------------------------------------------------

def lcn_update(protomatrix: Protomatrix, x: np.ndarray, i: int, j: int) -> float:
    """Erasure probability on an L-CN -> VN edge: erased unless every other input is known."""
    b = protomatrix.B[i].astype(float)
    exps = b.copy()
    exps[j] -= 1
    return float(1.0 - np.prod((1.0 - x[i]) ** np.clip(exps, 0, None)))


def _other_edges(protomatrix: Protomatrix, i: int, j: int) -> np.ndarray:
    counts = protomatrix.B[i].copy()
    counts[j] -= 1
    return np.clip(counts, 0, None)


def omega_exact_pmf(protomatrix: Protomatrix, i: int, j: int, x_row: np.ndarray) -> np.ndarray:
    """Distribution of the number of erased inputs among the d-1 other edges of B-CN i."""
    pmf = np.ones(1)
    for jj, n in enumerate(_other_edges(protomatrix, i, j)):
        if n:
            pmf = np.convolve(pmf, binom.pmf(np.arange(n + 1), n, x_row[jj]))
    return pmf


def omega_exact(protomatrix: Protomatrix, i: int, j: int, s: int, x_row: np.ndarray) -> float:
    pmf = omega_exact_pmf(protomatrix, i, j, x_row)
    return float(pmf[s]) if 0 <= s < pmf.size else 0.0


def mean_erasure(protomatrix: Protomatrix, i: int, j: int, x_row: np.ndarray) -> float:
    """Edge-weighted mean of the other inputs; 1 for a degree-one check."""
    d = protomatrix.row_degree(i)
    if d <= 1:
        return 1.0
    return float(np.clip((protomatrix.B[i] @ x_row - x_row[j]) / (d - 1), 0.0, 1.0))


def omega_binomial(protomatrix: Protomatrix, i: int, j: int, s: int, x_row: np.ndarray) -> float:
    d = protomatrix.row_degree(i)
    return float(binom.pmf(s, d - 1, mean_erasure(protomatrix, i, j, x_row)))


def reg_inc_beta(x: float, d: int, r: int) -> float:
    """sum_{s=max(0,d-r)}^{d-1} C(d-1,s) x^s (1-x)^(d-1-s)."""
    if not 0.0 <= x <= 1.0:
        raise InputError(f"reg_inc_beta needs x in [0, 1], got {x}")
    if r < 1 or d < 1:
        raise InputError("reg_inc_beta needs r >= 1 and d >= 1")
    lo = max(0, d - r)
    if lo == 0:
        return 1.0
    return float(bdtrc(lo - 1, d - 1, x))


def _rank_weights(h: np.ndarray, M: int, q: int) -> np.ndarray:
    """w[r-1] = sum_{k>=r} zeta_r^k q^-(k-r) h_k for r = 1..M."""
    return h @ _weight_matrix(M, q)


def bcn_update(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    h: RankDistribution,
    i: int,
    j: int,
    x: np.ndarray,
    de_config: Optional[DEConfig] = None,
    q: int = 256,
) -> float:
    """Erasure probability on a (possibly punctured) B-CN -> VN edge."""
    de_config = de_config or DEConfig()
    punct = float(np.asarray(delta, dtype=float)[i - protomatrix.n_c1])
    d = protomatrix.row_degree(i)
    M = h.M
    Z = zeta_table(M, q)
    if de_config.effective_form == BcnForm.BETA:
        xbar = mean_erasure(protomatrix, i, j, x[i])
        w = _rank_weights(h.h, M, q)
        recovered = sum(reg_inc_beta(1.0 - xbar, d, r) * w[r - 1] for r in range(1, M + 1))
    else:
        if de_config.omega_mode == OmegaMode.EXACT:
            pmf = omega_exact_pmf(protomatrix, i, j, x[i])
        else:
            pmf = binom.pmf(np.arange(d), d - 1, mean_erasure(protomatrix, i, j, x[i]))
        recovered = 0.0
        for r in range(1, M + 1):
            for s in range(min(d - 1, r - 1) + 1):
                recovered += h.h[r] * pmf[s] * Z[s + 1, r]
    inner = float(np.clip(1.0 - recovered, 0.0, 1.0))
    return punct + (1.0 - punct) * inner


def vcn_update(protomatrix: Protomatrix, y: np.ndarray, i: int, j: int) -> float:
    """VN -> CN message: erased iff every other incoming message is erased."""
    exps = protomatrix.B[:, j].astype(float)
    exps[i] -= 1
    return float(np.prod(y[:, j] ** np.clip(exps, 0, None)))


def app_update(protomatrix: Protomatrix, y: np.ndarray, j: int) -> float:
    return float(np.prod(y[:, j] ** protomatrix.B[:, j]))


# ---------------------------------------------------------------------------
# Vectorized engine
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _weight_matrix(M: int, q: int) -> np.ndarray:
    Z = zeta_table(M, q)
    k = np.arange(M + 1)[:, None]
    r = np.arange(1, M + 1)[None, :]
    gap = np.clip(k - r, 0, None).astype(float)
    W = np.where(k >= r, Z[r, k] * np.power(float(q), -gap), 0.0)
    W.flags.writeable = False
    return W


def _batch_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], a.shape[1] + b.shape[1] - 1))
    for t in range(b.shape[1]):
        out[:, t:t + a.shape[1]] += a * b[:, t:t + 1]
    return out


class DensityEvolution:
    """Flooding density evolution on one punctured protograph for blocks of rank distributions."""

    def __init__(
        self,
        protomatrix: Protomatrix,
        delta: Sequence[float],
        M: int,
        q: int,
        de_config: Optional[DEConfig] = None,
    ):
        self.protomatrix = protomatrix
        self.delta = check_puncturing(delta, protomatrix.n_c2)
        self.M = M
        self.q = q
        self.config = de_config or DEConfig()
        self.form = self.config.effective_form

        B = protomatrix.B
        self.n_c1 = protomatrix.n_c1
        self.n_c, self.n_v = B.shape
        self.B = B.astype(float)
        self.mask = B > 0
        self.degrees = B.sum(axis=1)

        eye_v = np.eye(self.n_v)
        self.l_exps = np.clip(self.B[: self.n_c1, None, :] - eye_v[None], 0, None)
        self.v_exps = np.clip(self.B[None, :, :] - np.eye(self.n_c)[:, :, None], 0, None)

        B2 = B[self.n_c1:]
        self.b2 = B2.astype(float)
        self.d2 = B2.sum(axis=1)
        self.punct = self.delta[:, None]
        self.W = _weight_matrix(M, q)
        r = np.arange(1, M + 1)
        self.cdf_k = np.minimum(r[None, :] - 1, np.maximum(self.d2[:, None] - 1, 0))[None, :, None, :]
        self.cdf_n = np.maximum(self.d2 - 1, 0)[None, :, None, None]
        s_max = int(max(self.d2.max(), 1)) if self.d2.size else 1
        Z = zeta_table(M, q)
        self.ZS = np.array([Z[s + 1] if s + 1 <= M else np.zeros(M + 1) for s in range(s_max)])

    # -- update maps ---------------------------------------------------------

    def _lcn(self, x: np.ndarray) -> np.ndarray:
        base = 1.0 - x[:, : self.n_c1, :]
        return 1.0 - np.prod(base[:, :, None, :] ** self.l_exps[None], axis=-1)

    def _xbar(self, xr: np.ndarray) -> np.ndarray:
        total = (xr * self.b2[None]).sum(axis=-1, keepdims=True)
        denom = np.maximum(self.d2 - 1, 1)[None, :, None]
        xbar = np.clip((total - xr) / denom, 0.0, 1.0)
        return np.where((self.d2 <= 1)[None, :, None], 1.0, xbar)

    def _omega_exact(self, xr: np.ndarray) -> np.ndarray:
        n_h = xr.shape[0]
        n2 = xr.shape[1]
        s_max = self.ZS.shape[0]
        out = np.zeros((n_h, n2, self.n_v, s_max))
        for i in range(n2):
            for j in range(self.n_v):
                if not self.b2[i, j]:
                    continue
                counts = self.b2[i].astype(int)
                counts[j] -= 1
                pmf = np.ones((n_h, 1))
                for jj, n in enumerate(counts):
                    if n > 0:
                        p = binom.pmf(np.arange(n + 1)[None, :], n, xr[:, i, jj][:, None])
                        pmf = _batch_convolve(pmf, p)
                width = min(pmf.shape[1], s_max)
                out[:, i, j, :width] = pmf[:, :width]
        return out

    def _bcn(self, x: np.ndarray, H: np.ndarray) -> np.ndarray:
        xr = x[:, self.n_c1:, :]
        if self.form == BcnForm.BETA:
            xbar = self._xbar(xr)
            w = H @ self.W
            cdf = bdtr(self.cdf_k, self.cdf_n, xbar[..., None])
            recovered = (cdf * w[:, None, None, :]).sum(axis=-1)
        else:
            if self.config.omega_mode == OmegaMode.EXACT:
                pmf = self._omega_exact(xr)
            else:
                s = np.arange(self.ZS.shape[0])
                pmf = binom.pmf(s[None, None, None, :], self.cdf_n, self._xbar(xr)[..., None])
            g = H @ self.ZS.T
            recovered = (pmf * g[:, None, None, :]).sum(axis=-1)
        inner = np.clip(1.0 - recovered, 0.0, 1.0)
        return self.punct[None] + (1.0 - self.punct[None]) * inner

    def check_update(self, x: np.ndarray, H: np.ndarray) -> np.ndarray:
        parts = []
        if self.n_c1:
            parts.append(self._lcn(x))
        if self.n_c > self.n_c1:
            parts.append(self._bcn(x, H))
        y = np.concatenate(parts, axis=1)
        return np.where(self.mask[None], y, 1.0)

    def variable_update(self, y: np.ndarray) -> np.ndarray:
        x = np.prod(y[:, None, :, :] ** self.v_exps[None], axis=2)
        return np.where(self.mask[None], x, 1.0)

    def posterior(self, y: np.ndarray) -> np.ndarray:
        return np.prod(y ** self.B[None], axis=1)

    # -- runs ----------------------------------------------------------------

    def iterate(self, h: RankDistribution) -> Iterator[DEState]:
        """Yield the state after each iteration for a single rank distribution."""
        H = h.h[None, :]
        x = np.ones((1, self.n_c, self.n_v))
        for _ in range(self.config.l_max):
            y = self.check_update(x, H)
            x = self.variable_update(y)
            yield DEState(x=x[0], y=y[0], z=self.posterior(y)[0])

    def _run_block(self, H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n_h = H.shape[0]
        x = np.ones((n_h, self.n_c, self.n_v))
        z = np.ones((n_h, self.n_v))
        iterations = np.zeros(n_h, dtype=np.int64)
        active = np.arange(n_h)
        for ell in range(1, self.config.l_max + 1):
            xa = x[active]
            y = self.check_update(xa, H[active])
            x_new = self.variable_update(y)
            za = self.posterior(y)
            change = np.abs(x_new - xa).max(axis=(1, 2))
            x[active] = x_new
            z[active] = za
            iterations[active] = ell
            done = change < self.config.stall_eps
            if self.config.stop_on_success:
                done |= za.max(axis=1) < self.config.z_target
            active = active[~done]
            if not active.size:
                break
        return z, iterations

    def run(self, H: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(z, converged, iterations) for every row of ``H`` (n_h x (M+1))."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.shape[1] != self.M + 1:
            raise InputError(f"Rank distributions have {H.shape[1] - 1} as batch size, expected {self.M}")
        zs, its = [], []
        for start in range(0, H.shape[0], self.config.chunk_size):
            z, it = self._run_block(H[start:start + self.config.chunk_size])
            zs.append(z)
            its.append(it)
        z = np.concatenate(zs) if zs else np.ones((0, self.n_v))
        iterations = np.concatenate(its) if its else np.zeros(0, dtype=np.int64)
        return z, z.max(axis=1, initial=0.0) < self.config.z_target, iterations

    def all_converge(self, H: np.ndarray, workers: int = 1) -> bool:
        """True iff DE converges for every rank distribution of ``H``; stops at the first failing block."""
        size = self.config.chunk_size
        blocks = [H[k:k + size] for k in range(0, H.shape[0], size)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return all(pool.map(lambda block: bool(self.run(block)[1].all()), blocks))
        for block in blocks:
            if not self.run(block)[1].all():
                return False
        return True


def run_de(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    h: RankDistribution,
    de_config: Optional[DEConfig] = None,
    q: int = 256,
) -> DEOutcome:
    engine = DensityEvolution(protomatrix, delta, h.M, q, de_config)
    z, converged, iterations = engine.run(h.h[None, :])
    return DEOutcome(z=z[0], converged=bool(converged[0]), iterations=int(iterations[0]))


def de_trace(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    h: RankDistribution,
    de_config: Optional[DEConfig] = None,
    q: int = 256,
) -> List[Tuple[int, float, float]]:
    """(iteration, max edge message, max posterior) until convergence, a stall or l_max."""
    de_config = de_config or DEConfig()
    engine = DensityEvolution(protomatrix, delta, h.M, q, de_config)
    rows = []
    previous = np.ones((protomatrix.n_c, protomatrix.n_v))
    mask = protomatrix.B > 0
    for ell, state in enumerate(engine.iterate(h), start=1):
        max_x = float(state.x[mask].max()) if mask.any() else 0.0
        max_z = float(state.z.max())
        rows.append((ell, max_x, max_z))
        if max_z < de_config.z_target or np.abs(state.x - previous).max() < de_config.stall_eps:
            break
        previous = state.x
    return rows


# ---------------------------------------------------------------------------
# Thresholds
# ---------------------------------------------------------------------------

def threshold(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    family: DistFamily,
    de_config: Optional[DEConfig] = None,
    workers: int = 1,
) -> ThresholdResult:
    """Smallest bucket capacity from which DE converges for every member of every higher bucket."""
    if protomatrix.n_c2 == 0 or not len(family):
        return NO_THRESHOLD
    engine = DensityEvolution(protomatrix, delta, family.M, family.q, de_config)
    keys = family.sorted_keys()
    verdicts: Dict[int, bool] = {}

    def converges(idx: int) -> bool:
        if idx not in verdicts:
            verdicts[idx] = engine.all_converge(family.rank_matrix(keys[idx]), workers)
            logger.debug(f"Bucket C={family.key_capacity(keys[idx]):.4f}: converged={verdicts[idx]}")
        return verdicts[idx]

    top = len(keys) - 1
    if not converges(top):
        return ThresholdResult(capacity=math.inf, evaluations=len(verdicts))
    lo, hi = -1, top
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if converges(mid):
            hi = mid
        else:
            lo = mid
    answer = hi
    for idx in range(top, hi - 1, -1):
        if not converges(idx):
            answer = idx + 1
            break
    key = keys[answer]
    return ThresholdResult(capacity=family.key_capacity(key), bucket_key=key, evaluations=len(verdicts))


def threshold_homogeneous(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    template: LineNetworkSpec,
    de_config: Optional[DEConfig] = None,
    resolution: Optional[float] = None,
) -> ThresholdResult:
    """Largest equal per-hop erasure probability for which DE converges, by bisection."""
    resolution = config.EPS_RESOLUTION if resolution is None else resolution
    if protomatrix.n_c2 == 0:
        return NO_THRESHOLD
    engine = DensityEvolution(protomatrix, delta, template.M, template.q, de_config)

    def dist(eps: float) -> RankDistribution:
        return line_network_dist(LineNetworkSpec(eps=[eps] * template.E, M=template.M, field=template.field))

    def converges(eps: float) -> bool:
        return bool(engine.run(dist(eps).h[None, :])[1][0])

    evaluations = 1
    if not converges(0.0):
        return ThresholdResult(capacity=math.inf, evaluations=evaluations)
    lo, hi = 0.0, 1.0
    evaluations += 1
    if converges(hi):
        lo = hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        evaluations += 1
        if converges(mid):
            lo = mid
        else:
            hi = mid
    return ThresholdResult(capacity=dist(lo).capacity, eps=lo, evaluations=evaluations)


def threshold_profile(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    family: Optional[DistFamily] = None,
    template: Optional[LineNetworkSpec] = None,
    de_config: Optional[DEConfig] = None,
    workers: int = 1,
    resolution: Optional[float] = None,
    lifting: Optional[Tuple[int, int]] = None,
) -> List[ThresholdRow]:
    """Threshold, design rate and gap of the core and of every extension prefix."""
    if (family is None) == (template is None):
        raise InputError("Give exactly one of a distribution family or a homogeneous line-network template")
    delta = check_puncturing(delta, protomatrix.n_c2)
    rows = []
    for s in range(protomatrix.n_extension + 1):
        n_rows = protomatrix.n_core + s
        sub = protomatrix.truncated(n_rows)
        sub_delta = delta[:n_rows]
        if family is not None:
            result = threshold(sub, sub_delta, family, de_config, workers)
        else:
            result = threshold_homogeneous(sub, sub_delta, template, de_config, resolution)
        rate = design_rate(sub, sub_delta) if sub.n_c2 else math.nan
        integer_rate = integer_count_rate(sub, sub_delta, *lifting) if lifting and sub.n_c2 else None
        row = ThresholdRow(extension_rows=s, capacity=result.capacity, eps=result.eps, rate=rate, integer_rate=integer_rate)
        eps_text = f" eps*={row.eps:.4f}" if row.eps is not None else ""
        logger.info(f"Extension rows {s}: C*={row.capacity:.4f}{eps_text} R={rate:.4f} gap={row.gap:.4f}")
        rows.append(row)
    return rows


def compare_omega_modes(
    protomatrix: Protomatrix,
    delta: Sequence[float],
    family: Optional[DistFamily] = None,
    template: Optional[LineNetworkSpec] = None,
    de_config: Optional[DEConfig] = None,
    workers: int = 1,
    resolution: Optional[float] = None,
    tolerance: float = 0.01,
) -> Dict[str, float]:
    """Thresholds under the exact and the binomial erased-input model; logs a warning when they differ."""
    if (family is None) == (template is None):
        raise InputError("Give exactly one of a distribution family or a homogeneous line-network template")
    de_config = de_config or DEConfig()
    results = {}
    for mode in OmegaMode:
        cfg = de_config.model_copy(update={"omega_mode": mode})
        if family is not None:
            results[mode.value] = threshold(protomatrix, delta, family, cfg, workers).capacity
        else:
            results[mode.value] = threshold_homogeneous(protomatrix, delta, template, cfg, resolution).capacity
    exact, binomial = results["exact"], results["binomial"]
    difference = 0.0 if exact == binomial else abs(exact - binomial)
    if difference > tolerance:
        logger.warning(f"Erased-input models disagree: exact={exact:.4f} binomial={binomial:.4f}")
    results["difference"] = difference
    return results


def omega_gap(row: np.ndarray, x_row: np.ndarray, j: int, M: int) -> float:
    """max over s = 0..M-1 of |exact - binomial| erased-input probability on edge j of one B-CN row."""
    row = np.asarray(row, dtype=np.int64)
    x_row = np.asarray(x_row, dtype=float)
    proto = Protomatrix(np.zeros((0, row.size), dtype=np.int64), row[None, :])
    s = np.arange(M)
    exact = np.zeros(M)
    pmf = omega_exact_pmf(proto, 0, j, x_row)[:M]
    exact[:pmf.size] = pmf
    approx = binom.pmf(s, proto.row_degree(0) - 1, mean_erasure(proto, 0, j, x_row))
    return float(np.abs(exact - approx).max())


@dataclass(frozen=True)
class OmegaReport:
    worst: float
    median: float
    gaps: np.ndarray
    row: np.ndarray
    x_row: np.ndarray
    edge: int


def omega_approximation_report(
    rng: np.random.Generator,
    draws: int = 100,
    n_v: int = 8,
    b_max: int = 3,
    M: int = 8,
) -> OmegaReport:
    """Gap between the exact and binomial erased-input models over random B-CN rows and inputs.

    Every row entry is uniform in 0..b_max, every input erasure probability uniform in [0, 1],
    and the output edge is the row's first nonzero column.
    """
    if draws < 1:
        raise InputError("omega_approximation_report needs at least one draw")
    gaps = np.empty(draws)
    worst_case = None
    for k in range(draws):
        row = rng.integers(0, b_max + 1, size=n_v)
        if not row.any():
            row[rng.integers(n_v)] = 1
        x_row = rng.random(n_v)
        j = int(np.flatnonzero(row)[0])
        gaps[k] = omega_gap(row, x_row, j, M)
        if worst_case is None or gaps[k] > gaps[worst_case[0]]:
            worst_case = (k, row, x_row, j)
    _, row, x_row, j = worst_case
    report = OmegaReport(
        worst=float(gaps.max()), median=float(np.median(gaps)), gaps=gaps, row=row, x_row=x_row, edge=j,
    )
    logger.info(
        f"Erased-input approximation over {draws} rows: worst={report.worst:.4f} median={report.median:.4f}"
    )
    return report
