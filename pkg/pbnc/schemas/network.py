from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator

from pbnc.schemas.field import FieldSpec


class LineNetworkSpec(BaseModel):
    """E-hop line network with per-hop erasure probabilities and RLNC recoding at relays."""

    model_config = ConfigDict(frozen=True)

    eps: List[float] = Field(..., min_length=1, description="Erasure probability of each hop")
    M: int = Field(..., ge=1, description="Batch size")
    field: FieldSpec = Field(default_factory=FieldSpec, description="Finite field of the inner code")

    @field_validator("eps")
    @classmethod
    def eps_in_unit_interval(cls, value):
        if any(not 0.0 <= e <= 1.0 for e in value):
            raise ValueError("erasure probabilities must lie in [0, 1]")
        return value

    @property
    def E(self) -> int:
        return len(self.eps)

    @property
    def q(self) -> int:
        return self.field.q

    @classmethod
    def homogeneous(cls, eps: float, hops: int, M: int, m: int = 8) -> "LineNetworkSpec":
        return cls(eps=[eps] * hops, M=M, field=FieldSpec(m=m))


class FamilyHeader(BaseModel):
    M: int = Field(..., ge=1)
    q: int = Field(..., ge=2, le=256)
    E: int = Field(..., ge=0, description="Hops of the generating line network; 0 for user-supplied families")
    delta1: float = Field(..., gt=0)
    delta2: float = Field(..., gt=0)
    homogeneous: bool = False
