"""Binary logistic regression fitted by iteratively reweighted least squares.

Models log{P(y=1)/P(y=0)} as intercept + w.x.  A small ridge penalty on the
weights (never the intercept) keeps the Newton system well-posed when the
classes are quasi-separable, which is plausible at a few hundred rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, SingularSystem

log = logging.getLogger(__name__)

_CLAMP = 1e-12
_LAMBDA_CEILING = 1e-2


@dataclass
class LogisticModel:
    intercept: float
    weights: np.ndarray
    ridge_lambda: float
    converged: bool
    iterations: int
    max_abs_gradient: float


def _sigmoid(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def penalized_loglik(beta, X1, y, lam_vec):
    """Log-likelihood minus (lam/2)|w|^2; beta[0] is the unpenalized intercept."""
    eta = X1 @ beta
    # log(1 + e^eta) computed stably
    ll = y @ eta - np.sum(np.logaddexp(0.0, eta))
    return ll - 0.5 * np.sum(lam_vec * beta * beta)


def penalized_gradient(beta, X1, y, lam_vec):
    p = _sigmoid(X1 @ beta)
    return X1.T @ (y - p) - lam_vec * beta


def fit_logistic(
    data,
    *,
    ridge_lambda: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticModel:
    """Newton/IRLS until every penalized score-gradient component is < tol.

    A singular Newton system triggers an automatic restart with the ridge
    escalated x10, up to 1e-2; past that SingularSystem is raised.  Hitting
    max_iter returns the model with converged=False rather than raising.
    """
    X = np.asarray(data.X, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite entries in design matrix")
    if y.min() == y.max():
        raise ValueError("both classes must be present")

    n, p = X.shape
    X1 = np.hstack([np.ones((n, 1)), X])
    lam = ridge_lambda
    while True:
        try:
            beta, iters, gmax = _newton(X1, y, lam, tol, max_iter)
            break
        except np.linalg.LinAlgError:
            if lam * 10 > _LAMBDA_CEILING:
                raise SingularSystem(
                    f"Newton system singular even at ridge {lam:g}"
                ) from None
            lam *= 10
            log.warning("singular IRLS system; escalating ridge to %g", lam)

    converged = bool(gmax < tol)
    if not converged:
        log.warning(
            "IRLS stopped at max_iter=%d with max|gradient|=%.3e", max_iter, gmax
        )
    return LogisticModel(
        intercept=float(beta[0]),
        weights=beta[1:].copy(),
        ridge_lambda=lam,
        converged=converged,
        iterations=iters,
        max_abs_gradient=float(gmax),
    )


def _newton(X1, y, lam, tol, max_iter):
    p_dim = X1.shape[1]
    lam_vec = np.full(p_dim, lam)
    lam_vec[0] = 0.0  # intercept unpenalized
    beta = np.zeros(p_dim)
    ll = penalized_loglik(beta, X1, y, lam_vec)
    for it in range(1, max_iter + 1):
        grad = penalized_gradient(beta, X1, y, lam_vec)
        gmax = np.max(np.abs(grad))
        if gmax < tol:
            return beta, it - 1, gmax
        prob = _sigmoid(X1 @ beta)
        w = prob * (1.0 - prob)
        hess = (X1 * w[:, None]).T @ X1 + np.diag(lam_vec)
        step = np.linalg.solve(hess, grad)
        # step-halving keeps quasi-separable fits from overshooting
        scale = 1.0
        for _ in range(50):
            candidate = beta + scale * step
            ll_new = penalized_loglik(candidate, X1, y, lam_vec)
            if ll_new >= ll - 1e-12:
                beta, ll = candidate, ll_new
                break
            scale *= 0.5
        else:
            # no ascent possible; report current gradient honestly
            return beta, it, gmax
    grad = penalized_gradient(beta, X1, y, lam_vec)
    return beta, max_iter, np.max(np.abs(grad))


def predict_logistic(model: LogisticModel, fv) -> float | np.ndarray:
    """P(y=1 | fv), clamped to [1e-12, 1-1e-12]; accepts a vector or a matrix."""
    fv = np.asarray(fv, dtype=float)
    width = model.weights.shape[0]
    if fv.shape[-1] != width:
        raise DimensionMismatch(f"expected width {width}, got {fv.shape[-1]}")
    eta = model.intercept + fv @ model.weights
    prob = _sigmoid(np.atleast_1d(eta))
    prob = np.clip(prob, _CLAMP, 1.0 - _CLAMP)
    return float(prob[0]) if fv.ndim == 1 else prob
