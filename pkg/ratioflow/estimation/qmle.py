from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import orjson
from scipy.stats import norm

from ..config import EstimatorOptions
from ..errors import (
    DidNotConvergeError,
    DimensionMismatchError,
    EmptyDatasetError,
    InsufficientSamplesError,
    SingularGammaError,
    SingularHessianError,
)
from ..features.dataset import Dataset
from ..log import logger
from .likelihood import LikelihoodTerms, evaluate
from .ratio import Theta, linear_predictor, ratio_pair


# Smallest eigenvalue of Gamma below which it is reported as degenerate.
DEGENERATE_EIGENVALUE = 1e-10


@dataclass(frozen=True)
class GammaEstimate:
    """Empirical information matrix and its conditioning."""
    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def degenerate(self) -> bool:
        return self.min_eigenvalue <= DEGENERATE_EIGENVALUE


@dataclass
class FitResult:
    """
    Outcome of one quasi-maximum likelihood fit.

    Attributes:
        model (str): ModelSpec name.
        labels (list): Covariate labels, aligned with theta.
        theta_hat (Theta): The estimate.
        objective (float): H_T at theta_hat, without the ridge term.
        gradient_norm (float): Max-norm of the projected gradient.
        iterations (int): Newton iterations performed.
        gamma_hat (np.ndarray): Empirical information matrix.
        std_errors (np.ndarray | None): None when gamma_hat is singular.
        converged (bool): Projected gradient within tolerance.
        boundary_hit (bool): Some |theta_j| reached the box radius.
        T (int): Number of calibration sessions.
        n_samples (int): Number of market orders used.
        n_ma (int): Number of ask-side market orders used.
        ridge (float): Ridge weight that was applied.
        spread_mean (float): Spread threshold frozen at calibration.
        warnings (list): Non-fatal conditions met along the way.
    """
    model: str
    labels: List[str]
    theta_hat: Theta
    objective: float
    gradient_norm: float
    iterations: int
    gamma_hat: np.ndarray
    std_errors: Optional[np.ndarray]
    converged: bool
    boundary_hit: bool
    T: int
    n_samples: int
    n_ma: int
    ridge: float = 0.0
    spread_mean: float = float("nan")
    warnings: List[str] = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return self.theta_hat.values

    @property
    def d(self) -> int:
        return self.theta_hat.dimension

    @property
    def usable(self) -> bool:
        """Converged, or stopped on the box boundary."""
        return self.converged or self.boundary_hit

    @property
    def z_stats(self) -> Optional[np.ndarray]:
        if self.std_errors is None:
            return None
        return self.theta / self.std_errors

    @property
    def p_values(self) -> Optional[np.ndarray]:
        """Two-sided normal p-values of theta_j = 0."""
        z = self.z_stats
        if z is None:
            return None
        return 2.0 * norm.sf(np.abs(z))

    def raise_for_status(self) -> "FitResult":
        if not self.usable:
            raise DidNotConvergeError(
                f"{self.model}: no convergence after {self.iterations} "
                f"iterations, gradient norm {self.gradient_norm:.3e}.",
                result=self,
            )
        return self

    def to_dict(self) -> Dict[str, Any]:
        def listed(a):
            return None if a is None else [float(v) for v in a]

        return {
            "model": self.model,
            "labels": list(self.labels),
            "theta": listed(self.theta),
            "std_errors": listed(self.std_errors),
            "z_stats": listed(self.z_stats),
            "p_values": listed(self.p_values),
            "objective": float(self.objective),
            "gradient_norm": float(self.gradient_norm),
            "iterations": int(self.iterations),
            "gamma_hat": [listed(row) for row in self.gamma_hat],
            "T": int(self.T),
            "d": self.d,
            "n_samples": int(self.n_samples),
            "n_ma": int(self.n_ma),
            "converged": bool(self.converged),
            "boundary_hit": bool(self.boundary_hit),
            "box_radius": float(self.theta_hat.box_radius),
            "ridge": float(self.ridge),
            "spread_mean": None if np.isnan(self.spread_mean)
            else float(self.spread_mean),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        std = data.get("std_errors")
        spread = data.get("spread_mean")
        return cls(
            model=data["model"],
            labels=list(data.get("labels", [])),
            theta_hat=Theta(np.array(data["theta"], dtype=np.float64),
                            data.get("box_radius", 50.0)),
            objective=data["objective"],
            gradient_norm=data.get("gradient_norm", 0.0),
            iterations=data.get("iterations", 0),
            gamma_hat=np.array(data.get("gamma_hat", []), dtype=np.float64),
            std_errors=None if std is None else np.array(std),
            converged=data["converged"],
            boundary_hit=data["boundary_hit"],
            T=data["T"],
            n_samples=data.get("n_samples", 0),
            n_ma=data.get("n_ma", 0),
            ridge=data.get("ridge", 0.0),
            spread_mean=float("nan") if spread is None else spread,
            warnings=list(data.get("warnings", [])),
        )

    def to_json(self) -> bytes:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2)


def load_fit(path: Union[str, Path]) -> FitResult:
    data = orjson.loads(Path(path).read_bytes())
    return FitResult.from_dict(data.get("fit", data))


def estimate_gamma(theta_hat: Union[Theta, np.ndarray], data: Dataset) \
        -> GammaEstimate:
    """
    Gamma_hat = (1/T) sum r^MA r^MB x x^T at theta_hat, i.e. -hessian / T.

    Degeneracy is flagged on the result, not raised.
    """
    z = linear_predictor(theta_hat, data.X)
    r_ma, r_mb = ratio_pair(z)
    weights = r_ma * r_mb
    matrix = (data.X * weights[:, None]).T @ data.X / data.n_sessions
    matrix = 0.5 * (matrix + matrix.T)
    min_eig = float(np.linalg.eigvalsh(matrix)[0]) if matrix.size else 0.0
    return GammaEstimate(matrix=matrix, min_eigenvalue=min_eig)


def standard_errors(gamma_hat: Union[GammaEstimate, np.ndarray], T: int) \
        -> np.ndarray:
    """
    sqrt(diag(Gamma_hat^-1) / T).

    Raises:
        SingularGammaError: If Gamma_hat is not safely invertible.
    """
    matrix = gamma_hat.matrix if isinstance(gamma_hat, GammaEstimate) \
        else np.asarray(gamma_hat, dtype=np.float64)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}.")
    eig = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    if eig[0] <= DEGENERATE_EIGENVALUE:
        raise SingularGammaError(
            f"Gamma has smallest eigenvalue {eig[0]:.3e}."
        )
    return np.sqrt(np.diag(np.linalg.inv(matrix)) / T)


def _null_directions(X: np.ndarray) -> List[List[float]]:
    _, s, vt = np.linalg.svd(X, full_matrices=True)
    tol = s.max(initial=0.0) * max(X.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    return [[float(v) for v in row] for row in vt[rank:]]


def _check_dataset(data: Dataset, d: int):
    if len(data) == 0:
        raise EmptyDatasetError(f"No samples for model {data.spec.name}.")
    if data.dimension != d:
        raise DimensionMismatchError(
            f"Dataset of dimension {data.dimension}, model "
            f"{data.spec.name} has {d}."
        )
    if len(data) < d + 1:
        raise InsufficientSamplesError(
            f"{data.spec.name}: {len(data)} samples for {d} parameters."
        )


def _penalized(terms: LikelihoodTerms, theta: np.ndarray, ridge: float) \
        -> LikelihoodTerms:
    if ridge == 0.0:
        return terms
    return LikelihoodTerms(
        terms.value - 0.5 * ridge * float(theta @ theta),
        None if terms.gradient is None else terms.gradient - ridge * theta,
        None if terms.hessian is None
        else terms.hessian - ridge * np.eye(theta.shape[0]),
    )


def _projected_gradient(theta: np.ndarray, grad: np.ndarray, R: float) \
        -> np.ndarray:
    """Gradient with the coordinates pushing out of the box zeroed."""
    out = grad.copy()
    at_upper = (theta >= R) & (grad > 0)
    at_lower = (theta <= -R) & (grad < 0)
    out[at_upper | at_lower] = 0.0
    return out


def _newton_direction(hess: np.ndarray, grad: np.ndarray,
                      free: np.ndarray) -> np.ndarray:
    step = np.zeros_like(grad)
    if not free.any():
        return step
    h = -hess[np.ix_(free, free)]
    g = grad[free]
    try:
        step[free] = np.linalg.solve(h, g)
    except np.linalg.LinAlgError:
        step[free] = np.linalg.pinv(h) @ g
    return step


# Relative slack on the signed margins when checking a recession direction.
RECESSION_TOLERANCE = 1e-6


def _recession_direction(data: Dataset, *candidates: np.ndarray) \
        -> Optional[np.ndarray]:
    """
    First candidate direction along which no signed margin decreases.

    When every market order satisfies s_i x_i . v >= 0 with s_i = +1 for MA
    and -1 for MB, and some strictly, H_T is non-decreasing along v and has
    no interior maximizer. Newton iterates on such data drift along v.
    """
    signed = np.where(data.is_ma[:, None] == 1, data.X, -data.X)
    slack = RECESSION_TOLERANCE * np.abs(signed).sum(axis=1)
    for candidate in candidates:
        scale = float(np.max(np.abs(candidate), initial=0.0))
        if scale == 0.0:
            continue
        v = candidate / scale
        margins = signed @ v
        if np.all(margins >= -slack) and np.any(margins > slack):
            return v
    return None


def _to_box_face(theta: np.ndarray, direction: np.ndarray, R: float) \
        -> np.ndarray:
    """Move from theta along direction until the first coordinate hits R."""
    moving = direction != 0.0
    reach = (R - np.sign(direction[moving]) * theta[moving]) \
        / np.abs(direction[moving])
    t = max(float(np.min(reach)), 0.0)
    face = np.clip(theta + t * direction, -R, R)
    hit = np.flatnonzero(moving)[np.argmin(reach)]
    face[hit] = np.sign(direction[hit]) * R
    return face


def fit_qmle(
    data: Dataset,
    options: Optional[EstimatorOptions] = None,
    start: Optional[np.ndarray] = None,
) -> FitResult:
    """
    Maximize H_T over [-R, R]^d by projected Newton with step halving.

    Coordinates sitting on the box with the gradient pointing outward are
    held fixed for the step. A step is halved until the objective does not
    decrease; the fit stops once the projected gradient max-norm is within
    tolerance. On separated or one-sided data the iterates drift along a
    recession direction without ever reaching the box, so once that
    direction is confirmed the estimate is moved to the box face and the
    remaining coordinates are refitted there.

    Args:
        data (Dataset): Calibration samples.
        options (EstimatorOptions, optional): Tolerance, iteration caps, box
            radius, ridge and reduction layout. Defaults to EstimatorOptions().
        start (np.ndarray, optional): Starting point, clipped to the box.
            Defaults to zero.

    Returns:
        FitResult: With converged=False when the caps were hit; call
            `raise_for_status` to turn that into DidNotConvergeError.

    Raises:
        EmptyDatasetError: If there are no samples.
        InsufficientSamplesError: If there are fewer than d + 1 samples.
        SingularHessianError: If the features are rank deficient and no
            ridge is set.
    """
    options = options if options is not None else EstimatorOptions()
    spec = data.spec
    d = spec.dimension
    _check_dataset(data, d)
    R = options.box_radius
    warnings: List[str] = []

    if options.ridge == 0.0 and np.linalg.matrix_rank(data.X) < d:
        directions = _null_directions(data.X)
        raise SingularHessianError(
            f"{spec.name}: features are rank deficient along "
            f"{len(directions)} direction(s).",
            directions=directions,
        )
    n_ma = data.n_ma
    if n_ma == 0 or n_ma == len(data):
        warnings.append("one_sided_data")
        logger.warning(
            f"{spec.name}: all {len(data)} samples on one side, the "
            "maximum lies on the box boundary."
        )

    def terms_at(theta: np.ndarray, order: int) -> LikelihoodTerms:
        raw = evaluate(theta, data, order, options.partitions,
                       options.threads)
        return _penalized(raw, theta, options.ridge)

    def newton(theta: np.ndarray, current: LikelihoodTerms, budget: int):
        pgrad = _projected_gradient(theta, current.gradient, R)
        converged = float(np.max(np.abs(pgrad))) <= options.tolerance
        done = 0
        last_step = np.zeros_like(theta)
        while not converged and done < budget:
            done += 1
            free = ~(((theta >= R) & (current.gradient > 0))
                     | ((theta <= -R) & (current.gradient < 0)))
            direction = _newton_direction(current.hessian, current.gradient,
                                          free)

            t = 1.0
            accepted = False
            for _ in range(options.max_halvings + 1):
                candidate = np.clip(theta + t * direction, -R, R)
                value = terms_at(candidate, 0).value
                if value >= current.value:
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                logger.debug(
                    f"{spec.name}: no ascent after {options.max_halvings} "
                    f"halvings at iteration {iterations + done}."
                )
                break
            last_step = candidate - theta
            theta = candidate
            current = terms_at(theta, 2)
            pgrad = _projected_gradient(theta, current.gradient, R)
            grad_norm = float(np.max(np.abs(pgrad)))
            logger.debug(
                f"{spec.name}: iteration {iterations + done}, "
                f"H={current.value:.10g}, |grad|={grad_norm:.3e}, "
                f"step={t:g}."
            )
            converged = grad_norm <= options.tolerance
        return theta, current, pgrad, converged, done, last_step

    theta = np.zeros(d) if start is None \
        else np.clip(np.asarray(start, dtype=np.float64), -R, R)
    iterations = 0
    theta, current, pgrad, converged, done, last_step = newton(
        theta, terms_at(theta, 2), options.max_iter)
    iterations += done

    # Separated data: H_T keeps increasing along a recession direction, so
    # the supremum over the box sits on one of its faces.
    recession = None if options.ridge > 0.0 \
        else _recession_direction(data, last_step, theta)
    if recession is not None:
        candidate = _to_box_face(theta, recession, R)
        jumped = terms_at(candidate, 2)
        if jumped.value >= current.value:
            logger.info(
                f"{spec.name}: data are separated along "
                f"{np.round(recession, 6).tolist()}, moving to the box face.",
                extra={"model": spec.name},
            )
            theta, current, pgrad, converged, done, _ = newton(
                candidate, jumped, max(options.max_iter - iterations, 0))
            iterations += done

    theta_hat = Theta.project(theta, R)
    boundary_hit = bool(theta_hat.on_boundary().any())
    if boundary_hit:
        warnings.append("boundary_hit")
        logger.warning(
            f"{spec.name}: estimate on the box boundary (|theta| = {R}), "
            "the data are (quasi-)separated."
        )
    if not converged:
        warnings.append("did_not_converge")
        logger.warning(
            f"{spec.name}: stopped after {iterations} iterations with "
            f"projected gradient {np.max(np.abs(pgrad)):.3e}."
        )

    gamma = estimate_gamma(theta_hat, data)
    std_errors: Optional[np.ndarray] = None
    if gamma.degenerate:
        warnings.append("degenerate_gamma")
        logger.warning(
            f"{spec.name}: Gamma is degenerate (smallest eigenvalue "
            f"{gamma.min_eigenvalue:.3e}), standard errors omitted."
        )
    else:
        try:
            std_errors = standard_errors(gamma, data.n_sessions)
        except SingularGammaError as exc:
            warnings.append("singular_gamma")
            logger.warning(f"{spec.name}: {exc}")

    objective = current.value if options.ridge == 0.0 \
        else evaluate(theta_hat, data, 0, options.partitions,
                      options.threads).value
    result = FitResult(
        model=spec.name,
        labels=spec.labels,
        theta_hat=theta_hat,
        objective=objective,
        gradient_norm=float(np.max(np.abs(pgrad))),
        iterations=iterations,
        gamma_hat=gamma.matrix,
        std_errors=std_errors,
        converged=converged,
        boundary_hit=boundary_hit,
        T=data.n_sessions,
        n_samples=len(data),
        n_ma=n_ma,
        ridge=options.ridge,
        spread_mean=data.spread_mean,
        warnings=warnings,
    )
    logger.info(
        f"{spec.name}: H={objective:.6f} in {iterations} iterations over "
        f"{len(data)} samples, T={data.n_sessions}.",
        extra={"model": spec.name, "iterations": iterations,
               "converged": converged},
    )
    return result
