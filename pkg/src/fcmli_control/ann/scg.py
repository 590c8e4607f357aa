"""Full-batch optimizers over a flat parameter vector

Both optimizers only ever accept steps that do not increase the loss.
"""

from __future__ import annotations

import typing as ty
from collections.abc import Callable

import numpy as np
from numpy.typing import NDArray

LossAndGrad = Callable[[NDArray], tuple[float, NDArray]]

OptimizerName = ty.Literal["scg", "momentum"]


class StepResult(ty.NamedTuple):
    """Outcome of one optimizer iteration"""

    accepted: bool
    loss: float
    converged: bool = False


class ScaledConjugateGradient:
    """Scaled conjugate gradient with a trust-region style scaling ``lambda``

    Curvature along the search direction comes from a finite difference of
    gradients, so no line search is needed. A step is accepted when the
    comparison parameter is non-negative, which means the loss did not
    increase.

    Parameters
    ----------
    fun : LossAndGrad
        Returns the loss and its gradient at a parameter vector
    x0 : NDArray
        Starting parameters
    sigma0 : float
        Finite-difference scale for the curvature estimate
    lambda0 : float
        Initial scaling
    """

    name: OptimizerName = "scg"

    def __init__(
        self,
        fun: LossAndGrad,
        x0: NDArray,
        *,
        sigma0: float = 1e-4,
        lambda0: float = 1e-6,
        gtol: float = 1e-12,
    ) -> None:
        self._fun = fun
        self.x = np.array(x0, dtype=np.float64)
        self.loss, g = fun(self.x)
        self._r = -g
        self._p = self._r.copy()
        self._sigma0 = sigma0
        self._lambda = lambda0
        self._lambda_bar = 0.0
        self._delta = 0.0
        self._success = True
        self._gtol = gtol
        self._k = 0

    def step(self) -> StepResult:
        """One iteration (two gradient evaluations)"""
        p, r = self._p, self._r
        p2 = float(p @ p)
        if p2 == 0 or float(r @ r) <= self._gtol**2:
            return StepResult(accepted=False, loss=self.loss, converged=True)

        if self._success:
            sigma = self._sigma0 / np.sqrt(p2)
            _, g_sigma = self._fun(self.x + sigma * p)
            self._delta = float(p @ (g_sigma + r)) / sigma

        delta = self._delta + (self._lambda - self._lambda_bar) * p2
        if delta <= 0:
            self._lambda_bar = 2 * (self._lambda - delta / p2)
            delta = -delta + self._lambda * p2
            self._lambda = self._lambda_bar
        self._delta = delta

        mu = float(p @ r)
        if mu <= 0:
            # not a descent direction; restart along the steepest descent
            self._p = r.copy()
            self._success = True
            return StepResult(accepted=False, loss=self.loss)

        alpha = mu / delta
        x_new = self.x + alpha * p
        loss_new, g_new = self._fun(x_new)
        if np.isfinite(loss_new):
            comparison = 2 * delta * (self.loss - loss_new) / mu**2
        else:
            comparison = -1.0

        accepted = comparison >= 0
        if accepted:
            self.x = x_new
            self.loss = float(loss_new)
            r_new = -g_new
            self._lambda_bar = 0.0
            self._success = True
            self._k += 1
            if self._k % self.x.size == 0:
                p_new = r_new.copy()
            else:
                beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
                p_new = r_new + beta * p
            self._r = r_new
            if comparison >= 0.75:  # noqa: PLR2004
                self._lambda *= 0.25
        else:
            self._lambda_bar = self._lambda
            self._success = False

        if comparison < 0.25:  # noqa: PLR2004
            self._lambda += delta * (1 - comparison) / p2

        if accepted:
            self._p = p_new
        return StepResult(accepted=accepted, loss=self.loss)


class MomentumDescent:
    """Gradient descent with momentum and an adaptive rate

    A step that raises the loss is rejected, the velocity is cleared and the
    rate halved; accepted steps grow the rate by 5%.
    """

    name: OptimizerName = "momentum"

    def __init__(
        self,
        fun: LossAndGrad,
        x0: NDArray,
        *,
        learning_rate: float = 0.1,
        momentum: float = 0.9,
    ) -> None:
        self._fun = fun
        self.x = np.array(x0, dtype=np.float64)
        self.loss, self._g = fun(self.x)
        self._v = np.zeros_like(self.x)
        self._lr = learning_rate
        self._momentum = momentum

    def step(self) -> StepResult:
        """One iteration (one gradient evaluation)"""
        if not np.any(self._g):
            return StepResult(accepted=False, loss=self.loss, converged=True)
        v = self._momentum * self._v - self._lr * self._g
        loss_new, g_new = self._fun(self.x + v)
        if np.isfinite(loss_new) and loss_new <= self.loss:
            self.x = self.x + v
            self.loss, self._g, self._v = float(loss_new), g_new, v
            self._lr *= 1.05
            return StepResult(accepted=True, loss=self.loss)
        self._v = np.zeros_like(self.x)
        self._lr *= 0.5
        return StepResult(accepted=False, loss=self.loss)


def make_optimizer(
    name: OptimizerName, fun: LossAndGrad, x0: NDArray
) -> ScaledConjugateGradient | MomentumDescent:
    """Optimizer by name"""
    if name == "scg":
        return ScaledConjugateGradient(fun, x0)
    if name == "momentum":
        return MomentumDescent(fun, x0)
    msg = f"unknown optimizer {name!r}"
    raise ValueError(msg)
