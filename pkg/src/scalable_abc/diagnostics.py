"""Monte Carlo diagnostics of importance-sampling ABC output."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ContractViolation, PosteriorSample


def _h_values(sample: PosteriorSample, h: Callable | None) -> np.ndarray:
    vals = sample.theta if h is None else np.asarray(h(sample.theta), dtype=float)
    return vals.reshape(sample.n_accepted, -1)


def posterior_mean(sample: PosteriorSample, h: Callable | None = None) -> np.ndarray:
    """Self-normalised weighted mean of ``h(theta)`` (identity by default)."""
    w = sample.weights
    total = w.sum()
    if not total > 0:
        raise ContractViolation("accepted particles have zero total weight")
    return (w / total) @ _h_values(sample, h)


def ess(sample: PosteriorSample) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``, clipped to ``[1, n_acc]``."""
    w = sample.weights
    if np.all(w == w[0]):
        return float(sample.n_accepted)
    val = w.sum() ** 2 / np.dot(w, w)
    return float(min(max(val, 1.0), sample.n_accepted))


def is_variance_hat(sample: PosteriorSample, h: Callable | None = None,
                    h_hat=None) -> np.ndarray:
    """Plug-in IS variance ``N_acc * sum wbar_i^2 (h_i - h_hat)^2`` per coordinate."""
    if sample.n_accepted < 2:
        raise ContractViolation("IS variance needs at least 2 accepted particles")
    vals = _h_values(sample, h)
    if h_hat is None:
        h_hat = posterior_mean(sample, h)
    wbar = sample.weights / sample.weights.sum()
    return sample.n_accepted * (wbar ** 2) @ (vals - h_hat) ** 2


def mc_variance_hat(sigma_is, p_acc: float, N: int) -> np.ndarray:
    """Asymptotic Monte Carlo variance ``sigma_is / (p_acc * N)``."""
    if not p_acc > 0:
        raise ContractViolation("acceptance probability must be positive")
    return np.asarray(sigma_is, dtype=float) / p_acc / N


def efficiency_ratio(av_mles: float, av_hat: float, mcv_hat: float) -> float:
    if not (av_mles > 0 and av_hat > 0 and mcv_hat >= 0):
        raise ContractViolation("efficiency ratio needs positive variances")
    return av_mles / (av_hat + mcv_hat)


@dataclass
class EstimatorReport:
    h_hat: np.ndarray
    ess: float
    n_acc: int
    p_acc_hat: float
    sigma_is_hat: np.ndarray
    mcv_hat: np.ndarray


def estimator_report(sample: PosteriorSample, h: Callable | None = None) -> EstimatorReport:
    h_hat = posterior_mean(sample, h)
    p_acc = sample.acceptance_rate
    if sample.n_accepted >= 2:
        sig = is_variance_hat(sample, h, h_hat)
    else:
        sig = np.full(h_hat.shape, np.nan)
    return EstimatorReport(h_hat, ess(sample), sample.n_accepted, p_acc, sig,
                           mc_variance_hat(sig, p_acc, sample.n_proposed))


def mse_table(estimates, truth, n: int) -> dict:
    """Per-coordinate MSE of replicate estimates against the simulation truth.

    Returns a dict with ``mse`` and ``mse_times_n`` arrays.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if est.shape[0] < 2:
        raise ContractViolation("MSE needs at least 2 replicates")
    mse = np.mean((est - np.asarray(truth, dtype=float)) ** 2, axis=0)
    return {"mse": mse, "mse_times_n": mse * n}


def mse_ratio(mse_a, mse_b) -> np.ndarray:
    return np.asarray(mse_a, dtype=float) / np.asarray(mse_b, dtype=float)
