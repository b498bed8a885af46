"""Rejection, importance-sampling and iterative importance-sampling ABC.

Simulations are produced in fixed-size blocks; block ``b`` of a run draws
only from ``stream.spawn(b)``, so a run is bit-identical whatever the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .core import (ContractViolation, EmptyAcceptanceError, Kernel, PosteriorSample,
                   RngStream, as_stream, kernel_from_distance, lambda_norm)
from .models import BoxPrior, Model

BLOCK_SIZE = 4096
FINAL_STAGE = 1 << 20


class InsufficientParticlesError(ContractViolation):
    """Too few weighted particles to estimate proposal moments."""


# ---------------------------------------------------------------------------
# proposals


@dataclass(frozen=True, eq=False)
class ProposalSpec:
    """Mixture ``beta * prior + (1 - beta) * t_df(center, scale)``.

    ``scale`` is the t scale matrix, not its covariance; use
    :meth:`from_moments` to build a proposal from a mean and variance.
    ``beta = 1`` is the prior itself and ``beta = 0`` the bare t density
    (no weight bound).
    """

    beta: float = 1.0
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    df: float = 5.0
    regularized: bool = False

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ContractViolation(f"mixture weight must lie in [0, 1], got {self.beta}")
        if self.beta < 1.0:
            if self.center is None or self.scale is None:
                raise ContractViolation("a t component needs a center and a scale")
            if not self.df > 0:
                raise ContractViolation("t degrees of freedom must be > 0")
        if self.center is not None:
            center = np.asarray(self.center, dtype=float).reshape(-1)
            scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
            if scale.shape != (center.size, center.size):
                raise ContractViolation("scale must be p x p")
            try:
                chol = np.linalg.cholesky(scale)
            except np.linalg.LinAlgError as err:
                raise ContractViolation("scale matrix is not positive definite") from err
            object.__setattr__(self, "center", center)
            object.__setattr__(self, "scale", scale)
            object.__setattr__(self, "_chol", chol)

    @classmethod
    def prior(cls) -> "ProposalSpec":
        return cls(beta=1.0)

    @classmethod
    def from_moments(cls, beta, mean, cov, df=5.0, regularized=False) -> "ProposalSpec":
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        scale = cov * (df - 2.0) / df if df > 2 else cov
        return cls(beta, mean, scale, df, regularized)

    @property
    def variance(self) -> np.ndarray:
        return self.scale * self.df / (self.df - 2.0) if self.df > 2 else self.scale

    def t_logpdf(self, theta) -> np.ndarray:
        theta = np.atleast_2d(theta)
        p = self.center.size
        z = np.linalg.solve(self._chol, (theta - self.center).T)
        maha = np.einsum("ij,ij->j", z, z)
        logdet = np.sum(np.log(np.diag(self._chol)))
        nu = self.df
        return (gammaln(0.5 * (nu + p)) - gammaln(0.5 * nu) - 0.5 * p * np.log(nu * np.pi)
                - logdet - 0.5 * (nu + p) * np.log1p(maha / nu))

    def sample_t(self, m: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((m, self.center.size)) @ self._chol.T
        w = rng.chisquare(self.df, m) / self.df
        return self.center + z / np.sqrt(w)[:, None]

    def sample(self, prior: BoxPrior, m: int, rng: np.random.Generator) -> np.ndarray:
        from_prior = rng.random(m) < self.beta
        k = int(from_prior.sum())
        theta = np.empty((m, prior.p))
        theta[from_prior] = prior.sample(k, rng)
        if k < m:
            theta[~from_prior] = self.sample_t(m - k, rng)
        return theta

    def density(self, theta, prior: BoxPrior) -> np.ndarray:
        out = self.beta * prior.density(theta)
        if self.beta < 1.0:
            out = out + (1.0 - self.beta) * np.exp(self.t_logpdf(theta))
        return out

    def weights(self, theta, prior: BoxPrior) -> np.ndarray:
        """``prior / proposal`` density ratio, 0 outside the prior box.

        Written as ``1 / (beta + (1 - beta) t / prior)`` so that the bound
        ``w <= 1 / beta`` also holds in floating point.
        """
        theta = np.atleast_2d(theta)
        inside = prior.contains(theta)
        w = np.zeros(theta.shape[0])
        if self.beta == 1.0:
            w[inside] = 1.0
            return w
        ratio = np.exp(self.t_logpdf(theta[inside]) + math.log(prior.volume))
        with np.errstate(divide="ignore"):
            w[inside] = 1.0 / (self.beta + (1.0 - self.beta) * ratio)
        return w


# ---------------------------------------------------------------------------
# bandwidths


@dataclass(frozen=True)
class BandwidthRule:
    """Either a fixed bandwidth (``mode='fixed'``) or a target acceptance rate."""

    mode: str
    value: float

    def __post_init__(self):
        if self.mode == "fixed":
            if not self.value > 0:
                raise ContractViolation("fixed bandwidth must be > 0")
        elif self.mode == "rate":
            if not 0 < self.value < 1:
                raise ContractViolation("acceptance rate must lie in (0, 1)")
        else:
            raise ContractViolation(f"unknown bandwidth mode {self.mode!r}")

    @classmethod
    def fixed(cls, eps: float) -> "BandwidthRule":
        return cls("fixed", float(eps))

    @classmethod
    def rate(cls, p: float) -> "BandwidthRule":
        return cls("rate", float(p))

    def label(self) -> str:
        return f"{'eps' if self.mode == 'fixed' else 'rate'}={self.value:.17g}"


def select_bandwidth(distances, p: float) -> float:
    """The ``ceil(p * N)``-th smallest distance."""
    dist = np.asarray(distances, dtype=float).reshape(-1)
    if dist.size == 0:
        raise ContractViolation("cannot select a bandwidth from no distances")
    if not 0 < p < 1:
        raise ContractViolation(f"acceptance rate must lie in (0, 1), got {p}")
    k = max(1, math.ceil(round(p * dist.size, 9)))
    return float(np.partition(dist, k - 1)[k - 1])


# ---------------------------------------------------------------------------
# simulation and acceptance


@dataclass(eq=False)
class Simulations:
    """All proposals of one run with their weights, summaries and acceptance uniforms.

    Rows whose parameter falls outside the prior box or the model domain
    carry weight 0 and NaN summaries; they are never simulated.
    """

    theta: np.ndarray
    weights: np.ndarray
    summaries: np.ndarray
    uniforms: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.summaries[:, 0])


def _simulate_block(model, proposal, m, stream):
    g = stream.generator()
    theta = proposal.sample(model.prior, m, g)
    w = proposal.weights(theta, model.prior)
    ok = (w > 0) & model.valid(theta)
    summaries = np.full((m, model.d), np.nan)
    if ok.any():
        summaries[ok] = model.simulate_summaries(theta[ok], g)
    return theta, w, summaries, g.random(m)


def simulate_proposals(model: Model, proposal: ProposalSpec, N: int, seed,
                       workers: int = 1) -> Simulations:
    """Draw ``N`` parameters from ``proposal`` and simulate one summary each."""
    if N < 1:
        raise ContractViolation(f"simulation budget must be >= 1, got {N}")
    stream = as_stream(seed)
    sizes = [min(BLOCK_SIZE, N - b) for b in range(0, N, BLOCK_SIZE)]
    jobs = [(model, proposal, m, stream.spawn(b)) for b, m in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _simulate_block(*a), jobs))
    else:
        parts = [_simulate_block(*a) for a in jobs]
    theta, w, s, u = (np.concatenate(x) for x in zip(*parts))
    return Simulations(theta, w, s, u, stream.seed)


def summary_distances(kernel: Kernel, summaries, s_obs) -> np.ndarray:
    """Lambda-norm distances to ``s_obs``; ``inf`` for unsimulated rows."""
    dist = lambda_norm(kernel, np.asarray(summaries, dtype=float) - np.asarray(s_obs, dtype=float))
    return np.where(np.isnan(dist), np.inf, dist)


def accept(theta, weights, distances, uniforms, kernel: Kernel, rule: BandwidthRule,
           seed: int = 0) -> PosteriorSample:
    """Apply the ABC accept step to precomputed simulations.

    A particle is kept when ``u < K_eps(distance)``; for the uniform kernel
    this is exactly ``distance <= eps``. In rate mode ``eps`` is the
    quantile over all ``N`` proposals (unsimulated ones count as infinitely
    far), capped at the largest finite distance.
    """
    distances = np.asarray(distances, dtype=float)
    finite = np.isfinite(distances)
    if rule.mode == "rate":
        if not finite.any():
            raise EmptyAcceptanceError("no simulation produced a finite distance")
        eps = select_bandwidth(distances, rule.value)
        if not math.isfinite(eps):
            eps = float(distances[finite].max())
    else:
        eps = rule.value
    if kernel.family == "uniform":
        keep = finite & (distances <= eps)
    else:
        scaled = np.where(finite, distances, 0.0) / eps
        keep = finite & (uniforms < kernel_from_distance(kernel, scaled))
    if not keep.any():
        raise EmptyAcceptanceError(f"no particle accepted at bandwidth {eps:.6g}")
    info = {"n_valid": int(finite.sum()), "rule": rule}
    return PosteriorSample(theta[keep], weights[keep], distances[keep],
                           n_proposed=len(distances), bandwidth=eps, seed=seed,
                           kernel=kernel, info=info)


def is_abc(model: Model, kernel: Kernel, s_obs, proposal: ProposalSpec,
           rule: BandwidthRule, N: int, seed, workers: int = 1) -> PosteriorSample:
    """Importance-sampling ABC: propose from ``proposal``, weight by prior/proposal."""
    sims = simulate_proposals(model, proposal, N, seed, workers)
    dist = summary_distances(kernel, sims.summaries, s_obs)
    sample = accept(sims.theta, sims.weights, dist, sims.uniforms, kernel, rule, sims.seed)
    if not np.all(np.isfinite(sample.weights)):
        raise ContractViolation("non-finite importance weight")
    return sample


def rejection_abc(model: Model, kernel: Kernel, s_obs, rule: BandwidthRule, N: int,
                  seed, workers: int = 1) -> PosteriorSample:
    """Rejection ABC: importance-sampling ABC with the prior as proposal (all weights 1)."""
    return is_abc(model, kernel, s_obs, ProposalSpec.prior(), rule, N, seed, workers)


def pilot_scaled_kernel(model: Model, kernel: Kernel, N: int, seed) -> Kernel:
    """Kernel whose Lambda is the inverse squared MAD of prior-predictive summaries."""
    sims = simulate_proposals(model, ProposalSpec.prior(), N, seed)
    s = sims.summaries[sims.valid]
    mad = 1.4826 * np.median(np.abs(s - np.median(s, axis=0)), axis=0)
    if np.any(mad <= 0):
        raise ContractViolation("pilot summaries have a degenerate coordinate")
    return kernel.with_lambda(1.0 / mad ** 2)


# ---------------------------------------------------------------------------
# iterative importance sampling


def weighted_moments(sample: PosteriorSample) -> tuple[np.ndarray, np.ndarray]:
    w = sample.weights / sample.weights.sum()
    mean = w @ sample.theta
    c = sample.theta - mean
    return mean, (c * w[:, None]).T @ c


def update_proposal(sample: PosteriorSample, df: float = 5.0, inflation: float = 2.0,
                    beta: float = 0.05) -> ProposalSpec:
    """Recentre on the weighted sample with variance ``inflation`` times its covariance."""
    p = sample.theta.shape[1]
    if sample.n_accepted < p + 1:
        raise InsufficientParticlesError(
            f"need at least {p + 1} particles to update the proposal, got {sample.n_accepted}")
    if not sample.weights.sum() > 0:
        raise InsufficientParticlesError("accepted particles have zero total weight")
    mean, cov = weighted_moments(sample)
    cov = 0.5 * (cov + cov.T)
    regularized = False
    if np.linalg.eigvalsh(cov)[0] <= 1e-12 * max(np.trace(cov), 1e-300):
        tr = np.trace(cov)
        cov = cov + 1e-8 * (tr / p if tr > 0 else 1.0) * np.eye(p)
        regularized = True
    return ProposalSpec.from_moments(beta, mean, inflation * cov, df, regularized)


@dataclass
class IISConfig:
    N: int = 10_000
    N0: int = 1_000
    p_schedule: tuple = (0.05, 0.04, 0.03, 0.02, 0.01)
    tail_rate: float = 0.01
    beta: float = 0.05
    df: float = 5.0
    inflation: float = 2.0
    eps_stop: float = 0.01
    prop_stop: float = 0.1
    gv_band: tuple = (0.8, 1.25)
    max_iters: int = 8

    def __post_init__(self):
        if not 0 < self.N0 < self.N:
            raise ContractViolation("need 0 < N0 < N")
        if self.max_iters < 0 or self.max_iters * self.N0 >= self.N:
            raise ContractViolation("max_iters * N0 must leave budget for the final run")
        rates = list(self.p_schedule) + [self.tail_rate]
        if not all(0 < r < 1 for r in rates):
            raise ContractViolation("acceptance rates must lie in (0, 1)")
        if not 0 < self.beta <= 1 or self.eps_stop <= 0 or self.prop_stop <= 0:
            raise ContractViolation("beta and stopping thresholds must be positive")

    def rate(self, k: int) -> float:
        return self.p_schedule[k] if k < len(self.p_schedule) else self.tail_rate


@dataclass
class IterationRecord:
    k: int
    rate: float
    eps: float
    n_sim: int
    n_acc: int
    center: np.ndarray
    variance: np.ndarray
    retried: bool = False


@dataclass
class IISTrace:
    iterations: list = field(default_factory=list)
    final: IterationRecord | None = None
    stop_reason: str = ""
    proposal: ProposalSpec | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    @property
    def n_adapt_simulations(self) -> int:
        return sum(r.n_sim for r in self.iterations)

    @property
    def n_simulations(self) -> int:
        return self.n_adapt_simulations + (self.final.n_sim if self.final else 0)

    @property
    def eps(self) -> list[float]:
        return [r.eps for r in self.iterations]


def proposals_close(q_old: ProposalSpec, q_new: ProposalSpec, tol: float, band) -> bool:
    """Centre Mahalanobis distance below ``tol`` and determinant ratio inside ``band``."""
    v_old, v_new = q_old.variance, q_new.variance
    diff = q_new.center - q_old.center
    maha = math.sqrt(float(diff @ np.linalg.solve(v_old, diff)))
    gv = np.linalg.det(v_new) / np.linalg.det(v_old)
    return maha < tol and band[0] <= gv <= band[1]


def initial_proposal(prior: BoxPrior, cfg: IISConfig) -> ProposalSpec:
    """Member of the t family with the prior's mean and variance."""
    return ProposalSpec.from_moments(cfg.beta, prior.mean, prior.cov, cfg.df)


def iis_adapt(model: Model, kernel: Kernel, s_obs, cfg: IISConfig, seed,
              workers: int = 1) -> IISTrace:
    """Adaptive phase: returns a trace whose ``proposal`` is the last proposal built."""
    stream = as_stream(seed)
    trace = IISTrace()
    q_prev = q = initial_proposal(model.prior, cfg)
    eps_prev = math.inf
    trace.stop_reason = "max_iters"
    for k in range(cfg.max_iters):
        rate, used, retried = cfg.rate(k), 0, False
        try:
            used += cfg.N0
            sample = is_abc(model, kernel, s_obs, q, BandwidthRule.rate(rate), cfg.N0,
                            stream.spawn(k, 0), workers)
            q_next = update_proposal(sample, cfg.df, cfg.inflation, cfg.beta)
        except (EmptyAcceptanceError, InsufficientParticlesError):
            if trace.n_adapt_simulations + used + cfg.N0 >= cfg.N:
                raise
            # one retry: previous proposal, doubled acceptance rate
            rate, retried = min(2 * rate, 0.5), True
            used += cfg.N0
            sample = is_abc(model, kernel, s_obs, q_prev, BandwidthRule.rate(rate), cfg.N0,
                            stream.spawn(k, 1), workers)
            q_next = update_proposal(sample, cfg.df, cfg.inflation, cfg.beta)
        eps = sample.bandwidth
        trace.iterations.append(IterationRecord(k, rate, eps, used, sample.n_accepted,
                                                q_next.center, q_next.variance, retried))
        stop = None
        if eps_prev - eps < cfg.eps_stop * eps_prev:
            stop = "bandwidth"
        elif proposals_close(q, q_next, cfg.prop_stop, cfg.gv_band):
            stop = "proposal"
        q_prev, q, eps_prev = q, q_next, eps
        if stop:
            trace.stop_reason = stop
            break
        if trace.n_adapt_simulations + cfg.N0 >= cfg.N:
            trace.stop_reason = "budget"
            break
    trace.proposal = q
    return trace


def iis_final(model: Model, kernel: Kernel, s_obs, cfg: IISConfig, trace: IISTrace, seed,
              final_mixture: bool = True, workers: int = 1) -> PosteriorSample:
    """Final importance-sampling run with the remaining budget ``N - sum(N0)``."""
    stream = as_stream(seed)
    budget = cfg.N - trace.n_adapt_simulations
    if budget < 1:
        raise ContractViolation("no simulation budget left for the final run")
    proposal = trace.proposal if final_mixture else replace(trace.proposal, beta=0.0)
    rate = cfg.rate(trace.n_iterations)
    sample = is_abc(model, kernel, s_obs, proposal, BandwidthRule.rate(rate), budget,
                    stream.spawn(FINAL_STAGE), workers)
    return sample


def iis_abc(model: Model, kernel: Kernel, s_obs, cfg: IISConfig, seed,
            final_mixture: bool = True, workers: int = 1) -> tuple[PosteriorSample, IISTrace]:
    """Iterative importance-sampling ABC with prior/t-mixture proposals.

    ``final_mixture=False`` runs the last stage from the t component alone.
    Exactly ``cfg.N`` simulations are consumed.
    """
    trace = iis_adapt(model, kernel, s_obs, cfg, seed, workers)
    sample = iis_final(model, kernel, s_obs, cfg, trace, seed, final_mixture, workers)
    mean, cov = weighted_moments(sample)
    trace.final = IterationRecord(trace.n_iterations, cfg.rate(trace.n_iterations),
                                  sample.bandwidth, sample.n_proposed, sample.n_accepted,
                                  mean, cov)
    return sample, trace
