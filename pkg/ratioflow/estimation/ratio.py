from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.special import expit

from ..book.events import Side
from ..errors import DimensionMismatchError


@dataclass(frozen=True)
class Theta:
    """
    Ratio parameters theta_j = vartheta^MA_j - vartheta^MB_j on the box
    [-R, R]^d, aligned to a ModelSpec.
    """
    values: np.ndarray
    box_radius: float = 50.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DimensionMismatchError(
                f"Theta must be a vector, got shape {values.shape}."
            )
        if self.box_radius <= 0:
            raise ValueError("box_radius must be positive.")
        if np.any(np.abs(values) > self.box_radius):
            raise ValueError(
                f"Theta {values} leaves the box of radius {self.box_radius}."
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def project(cls, values: np.ndarray, box_radius: float) -> "Theta":
        return cls(np.clip(values, -box_radius, box_radius), box_radius)

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])

    def on_boundary(self, rtol: float = 1e-12) -> np.ndarray:
        return np.abs(self.values) >= self.box_radius * (1.0 - rtol)


def as_vector(theta: Union[Theta, np.ndarray]) -> np.ndarray:
    if isinstance(theta, Theta):
        return theta.values
    return np.asarray(theta, dtype=np.float64)


def linear_predictor(theta: Union[Theta, np.ndarray], X: np.ndarray) \
        -> np.ndarray:
    """
    theta . x for a single feature vector or each row of a matrix.

    Raises:
        DimensionMismatchError: If the trailing dimension differs from d.
    """
    theta = as_vector(theta)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != theta.shape[0]:
        raise DimensionMismatchError(
            f"Features of dimension {X.shape[-1]} against theta of "
            f"dimension {theta.shape[0]}."
        )
    return X @ theta


def ratio_pair(z: Union[float, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    """
    (r^MA, r^MB) at linear predictor z.

    The smaller probability is evaluated directly and the larger one as its
    complement, so the pair sums to 1 within one ulp and stays finite for
    any |z|.
    """
    z = np.asarray(z, dtype=np.float64)
    small = expit(-np.abs(z))
    large = 1.0 - small
    r_ma = np.where(z > 0, large, small)
    r_mb = np.where(z > 0, small, large)
    return r_ma, r_mb


def ratio_ma(theta: Union[Theta, np.ndarray], X: np.ndarray) -> np.ndarray:
    """Probability that each market order is ask-side (MA)."""
    return ratio_pair(linear_predictor(theta, X))[0]


def ratio(theta: Union[Theta, np.ndarray], x: np.ndarray,
          side: Union[Side, str]) -> float:
    """
    Intensity ratio r^side(t, theta) of one feature vector.

    r^MA = 1 / (1 + exp(-theta . x)), r^MB = 1 / (1 + exp(theta . x)).

    Args:
        theta: Parameters of length d.
        x (np.ndarray): Features of length d.
        side (Side | str): Side.ASK / "MA" or Side.BID / "MB".

    Returns:
        float: The probability that the market order is of that side.
    """
    if not isinstance(side, Side):
        side = Side.from_label(side)
    r_ma, r_mb = ratio_pair(linear_predictor(theta, x))
    return float(r_ma if side is Side.ASK else r_mb)
