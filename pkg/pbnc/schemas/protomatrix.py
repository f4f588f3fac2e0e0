from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class ProtomatrixBase(BaseModel):
    m: int = Field(8, ge=1, le=8, description="Field extension degree, q = 2^m")
    M: int = Field(..., ge=1, description="Batch size")
    n_v: int = Field(..., ge=1)
    n_c1: int = Field(..., ge=0)
    n_c2: int = Field(..., ge=0)
    B1: List[List[int]] = Field(default_factory=list)
    B2: List[List[int]] = Field(default_factory=list)
    delta: List[float] = Field(default_factory=list, description="Puncturing fraction of each B2 row")
    n_core: Optional[int] = Field(None, ge=0, description="Rows of B2 that form the core; the rest is extension")

    @field_validator("delta")
    @classmethod
    def puncturing_in_range(cls, value):
        if any(not 0.0 <= d < 1.0 for d in value):
            raise ValueError("puncturing fractions must lie in [0, 1)")
        return value

    @model_validator(mode="after")
    def shapes_agree(self):
        if len(self.B1) != self.n_c1:
            raise ValueError(f"B1 has {len(self.B1)} rows, header says n_c1={self.n_c1}")
        if len(self.B2) != self.n_c2:
            raise ValueError(f"B2 has {len(self.B2)} rows, header says n_c2={self.n_c2}")
        for name, rows in (("B1", self.B1), ("B2", self.B2)):
            for k, row in enumerate(rows):
                if len(row) != self.n_v:
                    raise ValueError(f"{name} row {k} has {len(row)} entries, expected n_v={self.n_v}")
                if any(b < 0 for b in row):
                    raise ValueError(f"{name} row {k} has a negative entry")
        if len(self.delta) != self.n_c2:
            raise ValueError(f"delta has {len(self.delta)} entries, expected n_c2={self.n_c2}")
        if self.n_core is not None and self.n_core > self.n_c2:
            raise ValueError(f"n_core={self.n_core} exceeds n_c2={self.n_c2}")
        return self


class ProtomatrixFile(ProtomatrixBase):
    """Protomatrix data file, optionally carrying the lifting factors and channel it was designed for."""

    name: Optional[str] = None
    description: Optional[str] = None
    Z1: Optional[int] = Field(None, ge=1)
    Z2: Optional[int] = Field(None, ge=1)
    hops: Optional[int] = Field(None, ge=1, description="Hops of the design line network")
    homogeneous: bool = False
    delta1: Optional[float] = Field(None, gt=0, le=1)
    delta2: Optional[float] = Field(None, gt=0)


class LiftedCodeFile(ProtomatrixBase):
    """Lifted code: labeled precode checks as (row, col, label) triples plus punctured batch rows."""

    Z1: int = Field(..., ge=1)
    Z2: int = Field(..., ge=1)
    T1: List[Tuple[int, int, int]] = Field(default_factory=list)
    T2: List[List[int]] = Field(default_factory=list)
    T2_types: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def lifted_shapes_agree(self):
        K = self.n_v * self.Z1 * self.Z2
        q = 1 << self.m
        if len(self.T2) != len(self.T2_types):
            raise ValueError(f"T2 has {len(self.T2)} rows but {len(self.T2_types)} row types")
        for row, col, label in self.T1:
            if not 0 <= col < K:
                raise ValueError(f"T1 column {col} outside 0..{K - 1}")
            if not 0 < label < q:
                raise ValueError(f"T1 label {label} is not a nonzero element of GF({q})")
            if row < 0:
                raise ValueError("T1 row indices must be non-negative")
        for k, row in enumerate(self.T2):
            if not row:
                raise ValueError(f"T2 row {k} is empty")
            if any(not 0 <= c < K for c in row):
                raise ValueError(f"T2 row {k} references a VN outside 0..{K - 1}")
        if any(not 0 <= t < self.n_c2 for t in self.T2_types):
            raise ValueError(f"T2 row types must lie in 0..{self.n_c2 - 1}")
        return self
