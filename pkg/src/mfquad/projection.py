"""Quadratic loss summaries from antithetic gradient evaluations.

Evaluating a loss and its gradient at reflected node pairs of the sign
sequence yields, per pair, an unbiased-by-construction average gradient and
a diagonal curvature estimate from the gradient difference along the step.
Averaged over one aligned full period of the sequence, the curvature
estimate is exactly the Hessian diagonal for any quadratic loss; a single
pair sees it contaminated by off-diagonal terms, bounded coordinate-wise by
``sum_j |A_ij| sigma_j / sigma_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import cross_polytope_signs

__all__ = ["QuadraticSummary", "EvaluationError", "quadratic_approx", "full_period"]


class EvaluationError(RuntimeError):
    """Loss evaluation produced a non-finite value; carries the node."""

    def __init__(self, message: str, node: np.ndarray):
        super().__init__(message)
        self.node = np.asarray(node, dtype=np.float64)


@dataclass(frozen=True)
class QuadraticSummary:
    """Loss value, gradient, and Hessian diagonal at an expansion point."""

    loss: float
    grad: np.ndarray
    hess: np.ndarray

    def __post_init__(self):
        grad = np.asarray(self.grad, dtype=np.float64).ravel()
        hess = np.asarray(self.hess, dtype=np.float64).ravel()
        if grad.shape != hess.shape:
            raise ValueError("grad and hess must have equal length")
        if not (np.isfinite(self.loss) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise ValueError("summary entries must be finite")
        object.__setattr__(self, "loss", float(self.loss))
        object.__setattr__(self, "grad", grad)
        object.__setattr__(self, "hess", hess)


def full_period(d: int) -> int:
    """Pairs in one full period of the sign sequence: ``2**ceil(log2 d)``.

    Averaging this many consecutive aligned pairs integrates every mixed
    second moment exactly, so curvature contamination cancels completely.
    """
    if d < 1:
        raise ValueError(f"dimension must be positive, got {d}")
    return 1 << (d - 1).bit_length()


def _evaluate(model, theta: np.ndarray, case) -> tuple[float, np.ndarray]:
    loss, grad = model.evaluate(theta, case)
    loss = float(loss)
    grad = np.asarray(grad, dtype=np.float64)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise EvaluationError(
            f"non-finite loss evaluation (loss={loss!r}) at node {theta!r}", theta
        )
    return loss, grad


def quadratic_approx(
    model,
    case,
    mu: np.ndarray,
    sigma: np.ndarray,
    k_start: int,
    n_pairs: int,
) -> QuadraticSummary:
    """Project one case's loss onto a diagonal quadratic around ``mu``.

    Evaluates ``(loss, grad)`` at the reflected nodes ``mu +- sigma * s_k``
    for ``n_pairs`` consecutive sign vectors starting at ``k_start``.  The
    averaged gradients give the linear term; the gradient differences along
    the signed step give the curvature diagonal; the loss constant is the
    node average minus the curvature's own contribution, so that for any
    quadratic with matching diagonal the returned triple reproduces the
    loss value, gradient, and curvature at ``mu`` exactly.

    Coordinates with ``sigma == 0`` are never displaced and get curvature 0.
    """
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if mu.shape != sigma.shape:
        raise ValueError(f"mu has {mu.size} entries, sigma has {sigma.size}")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be positive, got {n_pairs}")
    if k_start < 0:
        raise ValueError(f"k_start must be nonnegative, got {k_start}")
    d = mu.shape[0]

    loss_sum = 0.0
    grad_sum = np.zeros(d)
    curv_sum = np.zeros(d)
    for k in range(k_start, k_start + n_pairs):
        s = cross_polytope_signs(d, k)
        step = sigma * s
        loss_p, grad_p = _evaluate(model, mu + step, case)
        loss_m, grad_m = _evaluate(model, mu - step, case)
        loss_sum += loss_p + loss_m
        grad_sum += grad_p + grad_m
        curv_sum += (grad_p - grad_m) * s

    n_evals = 2.0 * n_pairs
    grad = grad_sum / n_evals
    hess = np.divide(
        curv_sum, n_evals * sigma, out=np.zeros(d), where=sigma > 0
    )
    loss = loss_sum / n_evals - 0.5 * float(hess @ sigma**2)
    return QuadraticSummary(loss, grad, hess)
