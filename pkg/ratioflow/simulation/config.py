from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)

from ..config import load_config_file
from ..errors import ConfigInvalid, InputFormatError, ModelNotFoundError
from ..features.catalog import get_model
from ..features.descriptors import ModelSpec


class _Frozen(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


'''BASELINES'''


class ConstantRate(_Frozen):
    """lambda0(t) = rate, in events per second."""
    kind: Literal["constant"] = "constant"
    rate: float = Field(1.0, gt=0)


class UShape(_Frozen):
    """
    Intraday U-shaped profile times a lognormal daily factor of mean 1.

    The profile is quadratic on each half of the session, from `morning` at
    the open down to `noon` at mid-session and back up to `close`.
    """
    kind: Literal["u_shape"] = "u_shape"
    rate: float = Field(1.0, gt=0)
    morning: float = Field(2.0, gt=0)
    noon: float = Field(1.0, gt=0)
    close: float = Field(2.5, gt=0)
    daily_vol: float = Field(0.2, ge=0)


class LogOU(_Frozen):
    """log lambda0 follows an Ornstein-Uhlenbeck process on the grid."""
    kind: Literal["log_ou"] = "log_ou"
    mean: float = 0.0
    reversion: float = Field(0.01, gt=0)
    vol: float = Field(0.05, ge=0)


Baseline = Annotated[Union[ConstantRate, UShape, LogOU],
                     Field(discriminator="kind")]


'''COVARIATE DYNAMICS'''


class OUParams(_Frozen):
    mean: float = 0.0
    reversion: float = Field(0.5, gt=0)
    vol: float = Field(0.5, ge=0)


class OUPaths(_Frozen):
    """
    Imbalance covariates as OU paths clamped to [-1, 1], piecewise constant
    on the grid. The spread follows its own OU path and is compared to the
    spread threshold for the sign/spread covariate.

    `per_covariate` overrides the defaults by covariate label ("i_2",
    "ibar_3").
    """
    kind: Literal["ou_paths"] = "ou_paths"
    imbalance: OUParams = OUParams()
    spread: OUParams = OUParams(mean=2.0, reversion=0.5, vol=1.0)
    per_covariate: Dict[str, OUParams] = Field(default_factory=dict)
    initial_depth: int = Field(1_000_000, ge=1)


class BookDriven(_Frozen):
    """
    Limit inserts and cancels arriving as Poisson flows maintain a book
    whose imbalances are the covariates.

    Attributes:
        limit_rate (float): Inserts per second, both sides together.
        cancel_rate (float): Cancels per second, both sides together.
        inside_fraction (float): Probability an insert improves the quote
            when the spread allows it.
        max_quantity (int): Insert and cancel sizes are uniform on
            1..max_quantity.
        market_quantity (int): Market order sizes are uniform on
            1..market_quantity, capped at the best level.
        levels (int): Levels per side kept populated by replenishment.
        initial_depth (int): Quantity per level at the open.
        start_price (int): Best ask at the open, in ticks.
    """
    kind: Literal["book_driven"] = "book_driven"
    limit_rate: float = Field(20.0, gt=0)
    cancel_rate: float = Field(15.0, ge=0)
    inside_fraction: float = Field(0.2, ge=0, le=1)
    max_quantity: int = Field(10, ge=1)
    market_quantity: int = Field(5, ge=1)
    levels: int = Field(10, ge=1)
    initial_depth: int = Field(5, ge=1)
    start_price: int = Field(10_000, ge=100)


CovariateDynamics = Annotated[Union[OUPaths, BookDriven],
                              Field(discriminator="kind")]


class RegimeShift(_Frozen):
    """Parameters switching at `session` and staying for the rest."""
    session: int = Field(ge=1)
    vartheta_ma: List[float]
    vartheta_mb: List[float]


class SimConfig(_Frozen):
    """
    Law of a synthetic order flow with known parameters.

    Attributes:
        model (str): Catalog name of the model whose covariates drive the
            market-order intensities.
        vartheta_ma (list): True vartheta^MA, length d.
        vartheta_mb (list): True vartheta^MB, length d.
        baseline: Common baseline intensity lambda0(t).
        covariate_dynamics: How covariates evolve.
        sessions (int): T.
        session_length (float): Seconds per session.
        grid_step (float): Resolution, in seconds, of piecewise constant
            paths and of the thinning envelope.
        spread_threshold (float): Frozen spread mean of the sign/spread
            covariate.
        regime_shift (RegimeShift, optional): Structural change.
        seed (int): 64-bit seed, the only source of randomness.
    """
    model: str = "imb1_e_es"
    vartheta_ma: List[float]
    vartheta_mb: List[float]
    baseline: Baseline = UShape()
    covariate_dynamics: CovariateDynamics = OUPaths()
    sessions: int = Field(20, ge=1)
    session_length: float = Field(3600.0, gt=0)
    grid_step: float = Field(1.0, gt=0)
    spread_threshold: float = 1.5
    regime_shift: Optional[RegimeShift] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "SimConfig":
        try:
            d = get_model(self.model).dimension
        except ModelNotFoundError as exc:
            raise ValueError(str(exc)) from exc
        vectors = [("vartheta_ma", self.vartheta_ma),
                   ("vartheta_mb", self.vartheta_mb)]
        if self.regime_shift is not None:
            vectors += [("regime_shift.vartheta_ma",
                         self.regime_shift.vartheta_ma),
                        ("regime_shift.vartheta_mb",
                         self.regime_shift.vartheta_mb)]
            if self.regime_shift.session >= self.sessions:
                raise ValueError("Regime shift falls after the last session.")
        for name, values in vectors:
            if len(values) != d:
                raise ValueError(
                    f"{name} has {len(values)} entries, model {self.model} "
                    f"has dimension {d}."
                )
        if self.grid_step > self.session_length:
            raise ValueError("grid_step exceeds the session length.")
        return self

    @property
    def spec(self) -> ModelSpec:
        return get_model(self.model)

    def varthetas(self, session: int) -> Tuple[np.ndarray, np.ndarray]:
        """(vartheta^MA, vartheta^MB) in force during a session."""
        shift = self.regime_shift
        if shift is not None and session >= shift.session:
            return np.array(shift.vartheta_ma), np.array(shift.vartheta_mb)
        return np.array(self.vartheta_ma), np.array(self.vartheta_mb)

    def theta_star(self, session: int = 0) -> np.ndarray:
        ma, mb = self.varthetas(session)
        return ma - mb

    @classmethod
    def parse(cls, data: dict) -> "SimConfig":
        """
        Validate a mapping.

        Raises:
            ConfigInvalid: On any validation failure.
        """
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigInvalid(str(exc)) from exc


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    """
    Read a SimConfig from a JSON, YAML or TOML file.

    Raises:
        ConfigInvalid: If the file cannot be read or does not validate.
    """
    try:
        data = load_config_file(path)
    except InputFormatError as exc:
        raise ConfigInvalid(str(exc)) from exc
    return SimConfig.parse(data)
