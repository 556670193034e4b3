from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, NamedTuple, Optional, Union

import numpy as np
from scipy.special import log_expit

from ..errors import EmptyDatasetError
from ..features.dataset import Dataset
from .ratio import Theta, as_vector, linear_predictor, ratio_pair


class LikelihoodTerms(NamedTuple):
    """H_T and, when requested, its gradient and Hessian at one theta."""
    value: float
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None


def _partial_terms(theta: np.ndarray, X: np.ndarray, is_ma: np.ndarray,
                   order: int) -> LikelihoodTerms:
    z = linear_predictor(theta, X)
    signed = np.where(is_ma == 1, z, -z)
    value = float(np.sum(log_expit(signed)))
    if order == 0:
        return LikelihoodTerms(value)
    r_ma, r_mb = ratio_pair(z)
    grad = X.T @ (is_ma - r_ma)
    if order == 1:
        return LikelihoodTerms(value, grad)
    weights = r_ma * r_mb
    hess = -(X * weights[:, None]).T @ X
    return LikelihoodTerms(value, grad, hess)


def _add(a: LikelihoodTerms, b: LikelihoodTerms) -> LikelihoodTerms:
    return LikelihoodTerms(
        a.value + b.value,
        None if a.gradient is None else a.gradient + b.gradient,
        None if a.hessian is None else a.hessian + b.hessian,
    )


def tree_reduce(parts: List[LikelihoodTerms],
                combine: Callable = _add) -> LikelihoodTerms:
    """
    Pairwise reduction in a fixed order: ((p0 + p1) + (p2 + p3)) + ...

    The result only depends on the number of parts, not on the order in
    which workers finished.
    """
    assert len(parts) > 0, "Nothing to reduce."
    while len(parts) > 1:
        paired = [combine(parts[i], parts[i + 1])
                  for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2 == 1:
            paired.append(parts[-1])
        parts = paired
    return parts[0]


def evaluate(
    theta: Union[Theta, np.ndarray],
    data: Dataset,
    order: int = 2,
    partitions: int = 1,
    threads: int = 1,
) -> LikelihoodTerms:
    """
    Quasi-log likelihood and derivatives by partitioned reduction.

    Args:
        theta: Parameters of length d.
        data (Dataset): Samples.
        order (int, optional): 0 for the value only, 1 adds the gradient,
            2 adds the Hessian. Defaults to 2.
        partitions (int, optional): Number of contiguous row blocks.
        threads (int, optional): Worker threads over the blocks.

    Raises:
        EmptyDatasetError: If the dataset has no samples.
        DimensionMismatchError: If theta and the features disagree.
    """
    if len(data) == 0:
        raise EmptyDatasetError(f"No samples for model {data.spec.name}.")
    theta = as_vector(theta)
    is_ma = data.is_ma.astype(np.float64)
    bounds = np.array_split(np.arange(len(data)), min(partitions, len(data)))
    blocks = [(data.X[idx], is_ma[idx]) for idx in bounds]

    def run(block):
        return _partial_terms(theta, block[0], block[1], order)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return tree_reduce(parts)


def quasi_log_likelihood(theta: Union[Theta, np.ndarray], data: Dataset,
                         partitions: int = 1, threads: int = 1) -> float:
    """
    H_T(theta) = sum over market orders of log r^side(t-, theta). Always
    non-positive.
    """
    return evaluate(theta, data, 0, partitions, threads).value


def gradient(theta: Union[Theta, np.ndarray], data: Dataset,
             partitions: int = 1, threads: int = 1) -> np.ndarray:
    """sum (1{MA} - r^MA) x."""
    return evaluate(theta, data, 1, partitions, threads).gradient


def hessian(theta: Union[Theta, np.ndarray], data: Dataset,
            partitions: int = 1, threads: int = 1) -> np.ndarray:
    """-sum r^MA r^MB x x^T, negative semidefinite."""
    return evaluate(theta, data, 2, partitions, threads).hessian
