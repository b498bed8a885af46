"""Simulator contract and the two shipped models.

Both models simulate whole batches of parameter rows at once; the ABC
samplers never loop over particles in Python.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import ContractViolation, DomainError

TINY = np.finfo(float).tiny
LOG_TINY = float(np.log(TINY))


@dataclass(frozen=True, eq=False)
class BoxPrior:
    """Uniform prior on the box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ContractViolation("prior bounds must be nonempty and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ContractViolation("prior box needs finite bounds with lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def p(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def cov(self) -> np.ndarray:
        return np.diag((self.upper - self.lower) ** 2 / 12.0)

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=-1)

    def density(self, theta) -> np.ndarray:
        return np.where(self.contains(theta), 1.0 / self.volume, 0.0)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((m, self.p))


class Model(ABC):
    """A simulator: prior, data generator and summary map at data size ``n``."""

    name = "model"

    def __init__(self, n: int, prior: BoxPrior):
        if n < 2:
            raise ContractViolation(f"data size must be >= 2, got {n}")
        self.n = int(n)
        self.prior = prior

    @property
    def p(self) -> int:
        return self.prior.p

    @property
    @abstractmethod
    def d(self) -> int:
        ...

    @property
    def rate(self) -> float:
        """CLT rate ``a_n`` of the summaries."""
        return float(np.sqrt(self.n))

    def valid(self, theta) -> np.ndarray:
        """Mask of parameter rows inside the model's domain."""
        return np.ones(np.atleast_2d(theta).shape[0], dtype=bool)

    @abstractmethod
    def simulate_data(self, theta, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def summary(self, data) -> np.ndarray:
        ...

    @abstractmethod
    def simulate_summaries(self, theta, rng: np.random.Generator) -> np.ndarray:
        """Summaries for each row of ``theta`` (shape ``(m, d)``)."""

    def simulate_summary(self, theta, rng: np.random.Generator) -> np.ndarray:
        return self.simulate_summaries(np.asarray(theta, dtype=float)[None, :], rng)[0]

    def limit(self, theta):
        """Large-n limit (s, A, Ds) at ``theta``, or None when unavailable."""
        return None

    def _check(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if theta.shape[1] != self.p:
            raise ContractViolation(f"expected {self.p} parameters, got {theta.shape[1]}")
        if not np.all(self.valid(theta)):
            raise DomainError(f"{self.name}: parameter outside the model domain")
        return theta


def prior_sample(model: Model, rng: np.random.Generator) -> np.ndarray:
    return model.prior.sample(1, rng)[0]


def prior_density(model: Model, theta) -> float | np.ndarray:
    out = model.prior.density(theta)
    return float(out) if np.ndim(out) == 0 else out


def sample_quantile(data, alpha: float) -> float:
    """Linear interpolation between order statistics at ``h = (n-1)*alpha + 1``."""
    x = np.sort(np.asarray(data, dtype=float).reshape(-1))
    if x.size == 0:
        raise ContractViolation("sample_quantile of empty data")
    if not 0 < alpha < 1:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    h = (x.size - 1) * alpha
    lo = int(np.floor(h))
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def lag1_autocorrelation(data) -> float:
    y = np.asarray(data, dtype=float).reshape(-1)
    if y.size < 2:
        raise ContractViolation("lag-1 autocorrelation needs at least 2 points")
    c = y - y.mean()
    den = np.dot(c, c)
    if den == 0:
        raise ContractViolation("lag-1 autocorrelation undefined for zero variance")
    return float(np.dot(c[1:], c[:-1]) / den)


def equally_spaced_alphas(d: int) -> np.ndarray:
    """``j / (d + 1)`` for ``j = 1..d``."""
    return np.arange(1, d + 1) / (d + 1.0)


class GaussianQuantileModel(Model):
    """iid N(mu, sigma^2) data summarised by ``exp(q_alpha / 2)``.

    ``sigma`` is the standard deviation. Summaries are simulated from the
    exact joint law of the needed order statistics (normalised gamma
    partial sums pushed through the normal quantile function), so the cost
    per simulation is O(d) rather than O(n).
    """

    name = "gaussian"

    def __init__(self, alphas, n: int, prior: BoxPrior | None = None):
        alphas = np.asarray(alphas, dtype=float).reshape(-1)
        if alphas.size == 0 or np.any(alphas <= 0) or np.any(alphas >= 1) \
                or np.any(np.diff(alphas) <= 0):
            raise ContractViolation("alphas must be strictly increasing in (0, 1)")
        if prior is None:
            prior = BoxPrior([-10.0, -10.0], [10.0, 10.0])
        if prior.p != 2:
            raise ContractViolation("Gaussian model has two parameters (mu, sigma)")
        super().__init__(n, prior)
        self.alphas = alphas
        h = (self.n - 1) * alphas
        lo = np.floor(h).astype(int)
        hi = np.minimum(lo + 1, self.n - 1)
        self._frac = h - lo
        ranks = np.unique(np.concatenate([lo, hi]))
        self._ilo = np.searchsorted(ranks, lo)
        self._ihi = np.searchsorted(ranks, hi)
        # gamma shapes of the spacings between consecutive needed order statistics
        self._shapes = np.diff(np.concatenate([[-1], ranks, [self.n]])).astype(float)

    @property
    def d(self) -> int:
        return self.alphas.size

    def valid(self, theta) -> np.ndarray:
        return np.atleast_2d(theta)[:, 1] > 0

    def simulate_data(self, theta, rng):
        mu, sigma = self._check(theta)[0]
        return rng.normal(mu, sigma, self.n)

    def summary(self, data) -> np.ndarray:
        return np.exp(0.5 * np.quantile(np.asarray(data, dtype=float), self.alphas))

    def simulate_summaries(self, theta, rng):
        theta = self._check(theta)
        m = theta.shape[0]
        g = rng.standard_gamma(self._shapes, size=(m, self._shapes.size))
        s = np.cumsum(g, axis=1)
        z = ndtri(s[:, :-1] / s[:, -1:])
        x = theta[:, :1] + theta[:, 1:] * z
        q = x[:, self._ilo] + self._frac * (x[:, self._ihi] - x[:, self._ilo])
        return np.exp(0.5 * q)

    def limit(self, theta):
        from .analytics import gaussian_limit
        return gaussian_limit(self.alphas, theta)


class SVModel(Model):
    """Stochastic volatility with AR(1) log-variance, theta = (phi, sigma_eta, log sigma_bar).

    Summaries of ``y* = log y^2``: empirical variance (1/n), lag-1
    autocorrelation and mean. The latent chain starts from its stationary
    law.
    """

    name = "sv"
    block = 512

    def __init__(self, n: int, prior: BoxPrior | None = None):
        if prior is None:
            prior = BoxPrior([0.0, 0.1, -10.0], [1.0, 3.0, -1.0])
        if prior.p != 3:
            raise ContractViolation("SV model has three parameters")
        super().__init__(n, prior)

    @property
    def d(self) -> int:
        return 3

    def valid(self, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        return (np.abs(theta[:, 0]) < 1) & (theta[:, 1] > 0)

    def _log_squares(self, theta, rng):
        phi, s_eta, log_sbar = theta[:, 0], theta[:, 1], theta[:, 2]
        m = theta.shape[0]
        x = rng.standard_normal(m) * s_eta / np.sqrt(1.0 - phi ** 2)
        eta = rng.standard_normal((self.n, m))
        xi = rng.standard_normal((self.n, m))
        eta *= s_eta
        for t in range(self.n):
            x = phi * x + eta[t]
            eta[t] = x
        # log y^2 assembled in log space so extreme volatility cannot overflow
        xi *= xi
        np.maximum(xi, TINY, out=xi)
        np.log(xi, out=xi)
        xi += eta
        xi += 2.0 * log_sbar
        return np.maximum(xi, LOG_TINY, out=xi)

    def simulate_data(self, theta, rng):
        theta = self._check(theta)
        phi, s_eta, log_sbar = theta[0]
        x = rng.standard_normal(1) * s_eta / np.sqrt(1.0 - phi ** 2)
        eta = rng.standard_normal((self.n, 1))[:, 0] * s_eta
        xi = rng.standard_normal((self.n, 1))[:, 0]
        xs = np.empty(self.n)
        x = x[0]
        for t in range(self.n):
            x = phi * x + eta[t]
            xs[t] = x
        y = np.exp(0.5 * xs)
        y *= xi
        y *= np.exp(log_sbar)
        return y

    def summary(self, data) -> np.ndarray:
        with np.errstate(over="ignore"):
            ystar = np.log(np.maximum(np.asarray(data, dtype=float) ** 2, TINY))
        return np.array([ystar.var(), lag1_autocorrelation(ystar), ystar.mean()])

    def simulate_summaries(self, theta, rng):
        theta = self._check(theta)
        out = np.empty((theta.shape[0], 3))
        for start in range(0, theta.shape[0], self.block):
            ys = self._log_squares(theta[start:start + self.block], rng)
            mean = ys.mean(axis=0)
            ys -= mean
            ss = np.einsum("tj,tj->j", ys, ys)
            out[start:start + self.block, 0] = ss / self.n
            out[start:start + self.block, 1] = np.einsum("tj,tj->j", ys[1:], ys[:-1]) / ss
            out[start:start + self.block, 2] = mean
        return out
