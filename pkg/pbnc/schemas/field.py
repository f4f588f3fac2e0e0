from pydantic import BaseModel, ConfigDict, Field


class FieldSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int = Field(8, ge=1, le=8, description="Extension degree of GF(2^m)")

    @property
    def q(self) -> int:
        return 1 << self.m
