from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pbnc import config
from pbnc.models.models import BcnForm, DecoderKind, OmegaMode, OutputFormat


class DEConfig(BaseModel):
    """Iteration limits and update-rule variants of density evolution."""

    model_config = ConfigDict(frozen=True)

    l_max: int = Field(default_factory=lambda: config.L_MAX, ge=1, description="Maximum iterations")
    z_target: float = Field(default_factory=lambda: config.Z_TARGET, gt=0, description="Success threshold on max posterior")
    stall_eps: float = Field(default_factory=lambda: config.STALL_EPS, ge=0, description="Stop when no message moves more than this")
    omega_mode: OmegaMode = Field(default_factory=lambda: OmegaMode(config.OMEGA_MODE))
    bcn_form: BcnForm = Field(default_factory=lambda: BcnForm(config.BCN_FORM))
    stop_on_success: bool = Field(True, description="End a run as soon as max posterior < z_target")
    chunk_size: int = Field(2048, ge=1, description="Rank distributions evaluated per vectorized block")

    @property
    def effective_form(self) -> BcnForm:
        # the beta identity only holds for the binomial model of the erased-input count
        return BcnForm.DIRECT if self.omega_mode == OmegaMode.EXACT else self.bcn_form


class OptConfig(BaseModel):
    """Loop sizes, entry caps and starting points of the randomized protograph search."""

    model_config = ConfigDict(frozen=True)

    i_star: int = Field(100, ge=1)
    ir_star: int = Field(1000, ge=1)
    ic_star: int = Field(1000, ge=1)
    ip_star: int = Field(1000, ge=1)
    ir_star_ext: int = Field(10000, ge=1)
    b_max: int = Field(3, ge=1, description="Entry cap of core candidates")
    b_max_prime: int = Field(3, ge=1, description="Entry cap of extension rows")
    d_init: List[int] = Field(..., min_length=1, description="Initial B-CN row degrees of the core")
    delta_init: List[float] = Field(..., min_length=1, description="Initial core puncturing vector")
    delta_ext: List[float] = Field(default_factory=list, description="Fixed puncturing of extension rows")
    punc_step: float = Field(0.1, gt=0, le=1, description="Largest mass moved by one puncturing perturbation")
    seed: int = Field(default_factory=lambda: config.SEED)

    @field_validator("delta_init", "delta_ext")
    @classmethod
    def puncturing_in_range(cls, value):
        if any(not 0.0 <= d < 1.0 for d in value):
            raise ValueError("puncturing fractions must lie in [0, 1)")
        return value

    @field_validator("d_init")
    @classmethod
    def degrees_non_negative(cls, value):
        if any(d < 0 for d in value):
            raise ValueError("row degrees must be non-negative")
        return value

    @model_validator(mode="after")
    def core_shapes_agree(self):
        if len(self.d_init) != len(self.delta_init):
            raise ValueError(f"d_init has {len(self.d_init)} rows but delta_init has {len(self.delta_init)}")
        return self

    @property
    def n_core(self) -> int:
        return len(self.d_init)

    @property
    def n_extension(self) -> int:
        return len(self.delta_ext)


class OptimizeFile(BaseModel):
    """Input of the ``optimize`` command: fixed precode, channel family and search settings."""

    B1: List[List[int]]
    M: int = Field(..., ge=1)
    m: int = Field(8, ge=1, le=8)
    hops: int = Field(..., ge=1)
    homogeneous: bool = False
    delta1: Optional[float] = Field(None, gt=0, le=1)
    delta2: Optional[float] = Field(None, gt=0)
    initial_B2: Optional[List[List[int]]] = Field(None, description="Incumbent core to start from")
    initial_delta: Optional[List[float]] = None
    optimizer: OptConfig
    de: DEConfig = Field(default_factory=DEConfig)


class TrialPlanFile(BaseModel):
    """Input of the ``simulate`` command."""

    code: str = Field(..., description="Path of a lifted code file")
    eps: List[float] = Field(..., min_length=1, description="Per-hop erasure probabilities")
    N_range: List[int] = Field(..., min_length=1)
    trials: int = Field(..., ge=0)
    decoder: DecoderKind = DecoderKind.BP
    seed: int = Field(default_factory=lambda: config.SEED)
    max_inactive: Optional[int] = Field(None, ge=0, description="Inactivation cap; default 2*sqrt(A)")
    unlimited_inactive: bool = False
    T: int = Field(1, ge=1, description="Symbols per packet")
    early_stop: bool = False
    with_ml_bound: bool = True

    @field_validator("eps")
    @classmethod
    def eps_in_unit_interval(cls, value):
        if any(not 0.0 <= e <= 1.0 for e in value):
            raise ValueError("erasure probabilities must lie in [0, 1]")
        return value

    @field_validator("N_range")
    @classmethod
    def batch_counts_positive(cls, value):
        if any(N < 1 for N in value):
            raise ValueError("batch counts must be at least 1")
        return value


class BatchRecord(BaseModel):
    index_set: List[int] = Field(..., min_length=1)
    G: List[List[int]]
    H: Optional[List[List[int]]] = Field(None, description="Transfer matrix; identity when absent")
    Y: List[List[int]]


class BatchFile(BaseModel):
    """Batches written by ``encode`` and read by ``decode``."""

    m: int = Field(8, ge=1, le=8)
    M: int = Field(..., ge=1)
    T: int = Field(..., ge=1)
    K: int = Field(..., ge=1)
    precode_seed: int = Field(0, description="Seed of the precode relabeling shared by encoder and decoder")
    batches: List[BatchRecord] = Field(default_factory=list)


class RunConfig(BaseModel):
    """Fully resolved settings of one command invocation, echoed next to its results."""

    command: str
    seed: int
    threads: int = Field(1, ge=1)
    delta1: Optional[float] = None
    delta2: Optional[float] = None
    format: OutputFormat = OutputFormat.CSV
    de: Optional[DEConfig] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)


class OptimizerCheckpoint(BaseModel):
    """Incumbent of the core search after a completed outer iteration."""

    B2: List[List[int]]
    delta: List[float]
    threshold: Optional[float] = Field(None, description="None while no candidate has a threshold")
    outer_index: int = Field(..., ge=0, description="Outer iterations completed")
    rng_state: Dict[str, Any]
