"""Large-n analytic quantities: summary limits, information, dimension reduction, MLES."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .core import ContractViolation, DomainError


class MLESConvergenceError(RuntimeError):
    """No optimizer start converged; ``best`` holds the best iterate found."""

    def __init__(self, msg, best, value):
        super().__init__(msg)
        self.best = best
        self.value = value


@dataclass(frozen=True, eq=False)
class SummaryLimit:
    """Summary limit ``s``, asymptotic covariance ``A`` and Jacobian ``Ds`` at ``theta``."""

    theta: np.ndarray
    s: np.ndarray
    A: np.ndarray
    Ds: np.ndarray

    @property
    def d(self) -> int:
        return self.s.size

    @property
    def p(self) -> int:
        return self.Ds.shape[1]


def gaussian_limit(alphas, theta) -> SummaryLimit:
    """Limit of ``exp(q_alpha / 2)`` summaries of N(mu, sigma^2) data.

    The sample-quantile covariance ``sigma^2 a_j (1 - a_k) / (phi(z_j) phi(z_k))``
    (j <= k) is pushed through the delta method for ``q -> exp(q / 2)``.
    """
    alphas = np.asarray(alphas, dtype=float).reshape(-1)
    mu, sigma = np.asarray(theta, dtype=float)
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    z = norm.ppf(alphas)
    s = np.exp(0.5 * (mu + sigma * z))
    ds = np.column_stack([0.5 * s, 0.5 * z * s])
    lo = np.minimum.outer(alphas, alphas)
    hi = np.maximum.outer(alphas, alphas)
    dens = norm.pdf(z)
    A = np.outer(s, s) / 4.0 * sigma ** 2 * lo * (1.0 - hi) / np.outer(dens, dens)
    return SummaryLimit(np.array([mu, sigma]), s, A, ds)


def fisher_info_summary(limit: SummaryLimit) -> np.ndarray:
    """``Ds^T A^{-1} Ds``, symmetrised."""
    try:
        chol = np.linalg.cholesky(limit.A)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("summary covariance A is not positive definite") from err
    w = np.linalg.solve(chol, limit.Ds)
    info = w.T @ w
    return 0.5 * (info + info.T)


def reduction_matrix(limit: SummaryLimit) -> np.ndarray:
    """``C = Ds^T A^{-1}`` (p x d), which keeps the information of the full summary."""
    if limit.d < limit.p:
        raise ContractViolation(f"reduction needs d >= p, got d={limit.d}, p={limit.p}")
    return np.linalg.solve(limit.A, limit.Ds).T


def reduce_summary(C, s) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != C.shape[1]:
        raise ContractViolation(f"summary has dimension {s.shape[-1]}, C expects {C.shape[1]}")
    return s @ C.T


def reduced_limit(limit: SummaryLimit, C) -> SummaryLimit:
    """Limit of the linearly transformed summary ``C S_n``."""
    C = np.asarray(C, dtype=float)
    return SummaryLimit(limit.theta, C @ limit.s, C @ limit.A @ C.T, C @ limit.Ds)


def synthetic_loglik(limit: SummaryLimit, s_obs, n: int, logdet: bool = True) -> float:
    """Gaussian log-density ``N(s_obs; s, A / n)`` up to the constant."""
    cov = limit.A / n
    chol = np.linalg.cholesky(cov)
    r = np.linalg.solve(chol, np.asarray(s_obs, dtype=float) - limit.s)
    out = -0.5 * float(r @ r)
    if logdet:
        out -= float(np.sum(np.log(np.diag(chol))))
    return out


def mles(limit_fn: Callable[[np.ndarray], SummaryLimit], s_obs, n: int, theta_init,
         lower, upper, rng: np.random.Generator | None = None, restarts: int = 5,
         valid: Callable[[np.ndarray], bool] | None = None, logdet: bool = True,
         maxiter: int = 500, tol: float = 1e-8) -> np.ndarray:
    """Maximise the Gaussian synthetic likelihood of ``s_obs`` over a box.

    Nelder-Mead is started from ``theta_init`` and from ``restarts`` points
    drawn uniformly in the box (requires ``rng``); the best optimum wins.
    Points outside the box or outside ``valid`` score ``-inf``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    theta_init = np.asarray(theta_init, dtype=float)
    if not np.all((theta_init >= lower) & (theta_init <= upper)):
        raise ContractViolation("theta_init lies outside the prior box")

    def objective(theta):
        if not np.all((theta >= lower) & (theta <= upper)):
            return np.inf
        if valid is not None and not valid(theta):
            return np.inf
        try:
            return -synthetic_loglik(limit_fn(theta), s_obs, n, logdet)
        except (DomainError, np.linalg.LinAlgError):
            return np.inf

    starts = [theta_init]
    if restarts and rng is None:
        raise ContractViolation("random restarts need an rng")
    while len(starts) < restarts + 1:
        cand = lower + (upper - lower) * rng.random(lower.size)
        if np.isfinite(objective(cand)):
            starts.append(cand)

    results = [minimize(objective, x0, method="Nelder-Mead", bounds=list(zip(lower, upper)),
                        options={"maxiter": maxiter, "xatol": tol, "fatol": tol})
               for x0 in starts]
    best = min(results, key=lambda r: r.fun)
    if not any(r.success and np.allclose(r.x, best.x, atol=1e-6) for r in results):
        raise MLESConvergenceError("Nelder-Mead did not converge within its budget",
                                   np.asarray(best.x), best.fun)
    return np.asarray(best.x)


def mle_gaussian(data) -> np.ndarray:
    """Full-data MLE ``(mean, sd)`` with the 1/n divisor."""
    y = np.asarray(data, dtype=float).reshape(-1)
    if y.size < 2:
        raise ContractViolation("MLE needs at least 2 observations")
    return np.array([y.mean(), y.std()])


def asymptotic_variance(limit: SummaryLimit, Dh, n: int, rate: float | None = None) -> float:
    """``Dh^T I^{-1} Dh / a_n^2`` with ``a_n = sqrt(n)`` unless ``rate`` is given."""
    info = fisher_info_summary(limit)
    Dh = np.asarray(Dh, dtype=float)
    a2 = float(n) if rate is None else rate ** 2
    return float(Dh @ np.linalg.solve(info, Dh)) / a2
