from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import load_config_file


MAX_LEVEL = 10
MAX_LAG = 5


class CovariateKind(str, Enum):
    CONSTANT = "Constant"
    IMB = "Imb"
    IMB_CUM = "ImbCum"
    LAST_SIGN = "LastSign"
    SIGN_SPREAD_PRODUCT = "SignSpreadProduct"
    LAG_IMB = "LagImb"
    LAG_IMB_CUM = "LagImbCum"


_LEVEL_KINDS = {
    CovariateKind.IMB, CovariateKind.IMB_CUM,
    CovariateKind.LAG_IMB, CovariateKind.LAG_IMB_CUM,
}
_LAG_KINDS = {CovariateKind.LAG_IMB, CovariateKind.LAG_IMB_CUM}


class CovariateDescriptor(BaseModel):
    """
    One covariate of a model.

    `n` is the book level (1..10) of imbalance kinds, `m` the number of
    market orders back (1..5) of lagged kinds. The cumulative imbalance at
    level 1 equals the plain one, so ImbCum(1) is stored as Imb(1) and
    LagImbCum(1, m) as LagImb(1, m).
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: CovariateKind
    n: Optional[int] = Field(None, ge=1, le=MAX_LEVEL)
    m: Optional[int] = Field(None, ge=1, le=MAX_LAG)

    @model_validator(mode="before")
    @classmethod
    def _normalize(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = CovariateKind(data.get("kind"))
        if data.get("n") == 1:
            if kind is CovariateKind.IMB_CUM:
                kind = CovariateKind.IMB
            elif kind is CovariateKind.LAG_IMB_CUM:
                kind = CovariateKind.LAG_IMB
        data["kind"] = kind
        return data

    @model_validator(mode="after")
    def _check_fields(self) -> "CovariateDescriptor":
        if self.kind in _LEVEL_KINDS and self.n is None:
            raise ValueError(f"{self.kind.value} requires a level n.")
        if self.kind not in _LEVEL_KINDS and self.n is not None:
            raise ValueError(f"{self.kind.value} takes no level.")
        if self.kind in _LAG_KINDS and self.m is None:
            raise ValueError(f"{self.kind.value} requires a lag m.")
        if self.kind not in _LAG_KINDS and self.m is not None:
            raise ValueError(f"{self.kind.value} takes no lag.")
        return self

    @property
    def lag(self) -> int:
        return self.m if self.m is not None else 0

    @property
    def is_cumulative(self) -> bool:
        return self.kind in (CovariateKind.IMB_CUM, CovariateKind.LAG_IMB_CUM)

    @property
    def label(self) -> str:
        """Short human label, e.g. "i_2", "ibar_3(t^1)", "eps*s"."""
        if self.kind is CovariateKind.CONSTANT:
            return "1"
        if self.kind is CovariateKind.LAST_SIGN:
            return "eps"
        if self.kind is CovariateKind.SIGN_SPREAD_PRODUCT:
            return "eps*s"
        base = f"ibar_{self.n}" if self.is_cumulative else f"i_{self.n}"
        if self.kind in _LAG_KINDS:
            return f"{base}(t^{self.m})"
        return base


def Constant() -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.CONSTANT)


def Imb(n: int) -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.IMB, n=n)


def ImbCum(n: int) -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.IMB_CUM, n=n)


def LastSign() -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.LAST_SIGN)


def SignSpreadProduct() -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.SIGN_SPREAD_PRODUCT)


def LagImb(n: int, m: int) -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.LAG_IMB, n=n, m=m)


def LagImbCum(n: int, m: int) -> CovariateDescriptor:
    return CovariateDescriptor(kind=CovariateKind.LAG_IMB_CUM, n=n, m=m)


class ModelSpec(BaseModel):
    """
    An ordered covariate list defining one ratio model.

    Attributes:
        name (str): Catalog key, e.g. "imb2_e_es_la1".
        covariates (tuple): Descriptors, the constant first.
        recalibration_days (int): Calibration span l, also the length of
            the prediction window that follows it.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    covariates: Tuple[CovariateDescriptor, ...]
    recalibration_days: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_covariates(self) -> "ModelSpec":
        if len(self.covariates) == 0 or \
                self.covariates[0].kind is not CovariateKind.CONSTANT:
            raise ValueError(f"Model {self.name}: first covariate must be "
                             "the constant.")
        if len(set(self.covariates)) != len(self.covariates):
            raise ValueError(f"Model {self.name}: duplicate covariates.")
        return self

    @property
    def dimension(self) -> int:
        return len(self.covariates)

    @property
    def max_lag(self) -> int:
        return max(c.lag for c in self.covariates)

    @property
    def max_level(self) -> int:
        return max([c.n for c in self.covariates if c.n is not None],
                   default=0)

    @property
    def uses_last_sign(self) -> bool:
        return any(c.kind is CovariateKind.LAST_SIGN for c in self.covariates)

    @property
    def uses_spread(self) -> bool:
        return any(c.kind is CovariateKind.SIGN_SPREAD_PRODUCT
                   for c in self.covariates)

    @property
    def required_history(self) -> int:
        """Market orders of the session that must precede a sample."""
        return max(self.max_lag, 1 if self.uses_last_sign else 0)

    @property
    def labels(self) -> List[str]:
        return [c.label for c in self.covariates]

    @property
    def is_lday(self) -> bool:
        return self.recalibration_days > 1

    def with_recalibration(self, days: int, name: Optional[str] = None) \
            -> "ModelSpec":
        return ModelSpec(
            name=name if name is not None else self.name,
            covariates=self.covariates,
            recalibration_days=days,
        )


def load_model_spec(path: Union[str, Path]) -> ModelSpec:
    """Read a ModelSpec from a JSON, YAML or TOML file."""
    return ModelSpec.model_validate(load_config_file(path))


def dump_model_spec(spec: ModelSpec, path: Union[str, Path]):
    Path(path).write_text(spec.model_dump_json(indent=2))


def describe_descriptor(c: CovariateDescriptor) -> str:
    return c.label


def max_lag(spec: ModelSpec) -> int:
    return spec.max_lag


def required_history(spec: ModelSpec) -> int:
    return spec.required_history
