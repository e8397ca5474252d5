import os
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from fpla import check_prime

DEGREE_CAP_ENV = "DESTAB_DEGREE_CAP"
CACHE_DIR_ENV = "DESTAB_CACHE_DIR"
S_MAX_CAP = 3

_DEFAULT_DEGREE_CAPS = {3: 80, 5: 60}
_RANK_CAPS = {3: 3, 5: 2}


def degree_cap(p: int) -> int:
    """Largest internal degree a run may request; DESTAB_DEGREE_CAP overrides"""
    override = os.environ.get(DEGREE_CAP_ENV)
    if override:
        return int(override)
    return _DEFAULT_DEGREE_CAPS.get(p, 40)


def cache_dir() -> Optional[str]:
    """Directory where free resolutions persist between runs; in memory only when DESTAB_CACHE_DIR is unset"""
    return os.environ.get(CACHE_DIR_ENV) or None


def rank_cap(p: int) -> int:
    """Largest rank s for which H*(BV_s) polynomials are expanded"""
    return _RANK_CAPS.get(p, 1)


class CommandType(str, Enum):
    """Enum for CLI commands"""
    COMPUTE = "compute"
    ORACLE = "oracle"
    VERIFY = "verify"
    INVARIANTS = "invariants"


class SuiteType(str, Enum):
    """Enum for verification suites"""
    INVARIANTS = "invariants"
    STEENROD = "steenrod"
    RFUNCTOR = "rfunctor"
    COMPLEX = "complex"
    SES = "ses"
    LINEARITY = "linearity"
    ORACLE = "oracle"
    ALL = "all"


class EmitType(str, Enum):
    """Enum for the tables printed by the invariants command"""
    DICKSON = "dickson"
    MUI = "mui"
    COPRODUCT = "coproduct"


class RsSign(str, Enum):
    """Which eigenspace of R~_s N to enumerate"""
    PLUS = "plus"
    MINUS = "minus"
    FULL = "full"


class RunConfig(BaseModel):
    """Model for a single CLI run"""
    command: CommandType = Field(..., description="Subcommand to run")
    prime: int = Field(3, description="Odd prime p")
    module: Optional[str] = Field(None, description="Module file path or built-in spec such as sphere(-1)")
    s_max: int = Field(2, ge=0, description="Highest homological degree reported")
    deg_min: Optional[int] = Field(None, description="Lowest internal degree reported")
    deg_max: int = Field(20, description="Highest internal degree reported")
    rank: int = Field(1, ge=1, description="Rank s for the invariants command")
    emit: EmitType = Field(EmitType.DICKSON, description="Table printed by the invariants command")
    show_matrices: bool = Field(False, description="Dump differential matrices next to the table")
    action_samples: int = Field(0, ge=0, description="Number of sampled A-action comparisons")
    suite: SuiteType = Field(SuiteType.ALL, description="Verification suite")
    out: Optional[str] = Field(None, description="Output path; stdout when omitted")
    failures_path: Optional[str] = Field(None, description="JSON-lines failure file")
    cache_dir: Optional[str] = Field(None, description="Directory for cached free resolutions")

    @field_validator('prime')
    @classmethod
    def validate_prime(cls, v):
        """Validate that the prime is odd"""
        return check_prime(v)

    @field_validator('s_max')
    @classmethod
    def validate_s_max(cls, v):
        """Validate s_max against the configured cap"""
        if v > S_MAX_CAP:
            raise ValueError(f"s_max must be at most {S_MAX_CAP}")
        return v

    @model_validator(mode='after')
    def validate_window(self):
        """Validate the degree window against the degree cap"""
        cap = degree_cap(self.prime)
        if self.deg_max > cap:
            raise ValueError(f"deg_max {self.deg_max} exceeds the degree cap {cap} at p={self.prime}")
        if self.deg_min is not None and self.deg_min > self.deg_max:
            raise ValueError("deg_min must not exceed deg_max")
        if self.command in (CommandType.COMPUTE, CommandType.ORACLE) and not self.module:
            raise ValueError(f"{self.command.value} needs a module")
        return self
