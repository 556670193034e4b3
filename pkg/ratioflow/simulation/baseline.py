from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np

from .config import ConstantRate, LogOU, UShape
from .paths import ou_grid


class BaselinePath(ABC):
    """
    lambda0 over one session: point evaluation and an upper bound on every
    grid cell, the thinning envelope.
    """

    def __init__(self, session_length: float, grid_step: float):
        self.session_length = session_length
        self.grid_step = grid_step
        self.n_cells = int(np.ceil(session_length / grid_step))

    def cell_bounds(self, cell: int) -> Tuple[float, float]:
        lower = cell * self.grid_step
        return lower, min(lower + self.grid_step, self.session_length)

    def cell_of(self, t: np.ndarray) -> np.ndarray:
        return np.minimum((np.asarray(t) // self.grid_step).astype(np.int64),
                          self.n_cells - 1)

    @abstractmethod
    def rate(self, t: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def cell_max(self) -> np.ndarray:
        """Upper bound of lambda0 on each grid cell, shape (n_cells,)."""
        pass


class ConstantBaseline(BaselinePath):

    def __init__(self, law: ConstantRate, session_length: float,
                 grid_step: float):
        super().__init__(session_length, grid_step)
        self.value = law.rate

    def rate(self, t):
        return np.full(np.shape(t), self.value, dtype=np.float64)

    def cell_max(self):
        return np.full(self.n_cells, self.value)


class UShapeBaseline(BaselinePath):

    def __init__(self, law: UShape, session_length: float, grid_step: float,
                 rng: np.random.Generator):
        super().__init__(session_length, grid_step)
        self.law = law
        sigma = law.daily_vol
        self.factor = float(np.exp(sigma * rng.standard_normal()
                                   - 0.5 * sigma ** 2))

    def rate(self, t):
        u = np.asarray(t, dtype=np.float64) / self.session_length
        law = self.law
        edge = np.where(u < 0.5, law.morning, law.close)
        profile = law.noon + (edge - law.noon) * (1.0 - 2.0 * u) ** 2
        return law.rate * self.factor * profile

    def cell_max(self):
        # Monotone on each half: the maximum sits at a cell end or at noon.
        lower = np.arange(self.n_cells) * self.grid_step
        upper = np.minimum(lower + self.grid_step, self.session_length)
        out = np.maximum(self.rate(lower), self.rate(upper))
        mid = 0.5 * self.session_length
        spans_noon = (lower <= mid) & (mid <= upper)
        out[spans_noon] = np.maximum(out[spans_noon], self.rate(mid))
        return out


class LogOUBaseline(BaselinePath):

    def __init__(self, law: LogOU, session_length: float, grid_step: float,
                 rng: np.random.Generator):
        super().__init__(session_length, grid_step)
        log_rate = ou_grid(law.mean, law.reversion, law.vol, grid_step,
                           self.n_cells, rng)
        self.values = np.exp(log_rate)

    def rate(self, t):
        return self.values[self.cell_of(t)]

    def cell_max(self):
        return self.values


def make_baseline(law, session_length: float, grid_step: float,
                  rng: np.random.Generator) -> BaselinePath:
    if isinstance(law, ConstantRate):
        return ConstantBaseline(law, session_length, grid_step)
    if isinstance(law, UShape):
        return UShapeBaseline(law, session_length, grid_step, rng)
    if isinstance(law, LogOU):
        return LogOUBaseline(law, session_length, grid_step, rng)
    raise TypeError(f"Unknown baseline {type(law).__name__}.")
