"""Replicated experiment harnesses: Gaussian quantiles, stochastic volatility, acceptance decay.

Every replicate derives its randomness from ``RngStream(seed, (experiment, r, ...))``,
so tables do not depend on execution order or on the number of workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytics import (MLESConvergenceError, fisher_info_summary, mle_gaussian, mles,
                        reduction_matrix)
from .core import ContractViolation, EmptyAcceptanceError, Kernel, RngStream
from .diagnostics import ess, mse_table, posterior_mean
from .models import BoxPrior, GaussianQuantileModel, SVModel, equally_spaced_alphas
from .samplers import (BandwidthRule, IISConfig, ProposalSpec, accept, iis_adapt, iis_final,
                       is_abc, pilot_scaled_kernel, rejection_abc, simulate_proposals,
                       summary_distances, update_proposal)

log = logging.getLogger(__name__)

GAUSSIAN_ID, SV_ID, DECAY_ID = 1, 2, 3
PILOT = 1 << 20


class ExperimentError(RuntimeError):
    pass


class ResultTable(list):
    """List of row dicts with small lookup helpers."""

    def select(self, **match) -> "ResultTable":
        return ResultTable(r for r in self if all(r.get(k) == v for k, v in match.items()))

    def value(self, column: str, **match):
        rows = self.select(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {match}")
        return rows[0][column]


def _inner_workers(cfg) -> int:
    # sampler threads only when there are fewer replicates than workers
    return cfg.workers if cfg.replicates < cfg.workers else 1


def _map(fn, args, workers):
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(min(workers, len(args))) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


# ---------------------------------------------------------------------------
# Gaussian model with quantile summaries


@dataclass
class GaussianExperimentConfig:
    n: int = 10_000
    d_list: tuple = (2, 4, 9, 19)
    rates: tuple = tuple(float(r) for r in np.geomspace(1e-3, 0.5, 6))
    eps_values: tuple = ()
    replicates: int = 100
    N: int = 1_000_000
    seed: int = 0
    theta0: tuple = (1.0, math.sqrt(2.0))
    prior_lower: tuple = (-10.0, -10.0)
    prior_upper: tuple = (10.0, 10.0)
    proposal: str = "local"
    proposal_inflation: float = 100.0
    beta: float = 0.05
    df: float = 5.0
    mles_restarts: int = 5
    workers: int = 1

    @classmethod
    def full(cls, **kw) -> "GaussianExperimentConfig":
        kw.setdefault("n", 100_000)
        kw.setdefault("replicates", 200)
        return cls(**kw)

    def validate(self):
        if self.replicates < 2:
            raise ContractViolation("need at least 2 replicates")
        if self.n < 2 or self.N < 1:
            raise ContractViolation("n and N must be positive")
        if not self.d_list or min(self.d_list) < 2:
            raise ContractViolation("summary dimensions must be >= 2")
        if not (self.rates or self.eps_values):
            raise ContractViolation("empty bandwidth grid")
        if self.proposal not in ("local", "prior"):
            raise ContractViolation(f"unknown proposal {self.proposal!r}")
        for r in self.rates:
            BandwidthRule.rate(r)
        for e in self.eps_values:
            BandwidthRule.fixed(e)

    def rules(self) -> list[BandwidthRule]:
        return ([BandwidthRule.rate(r) for r in self.rates]
                + [BandwidthRule.fixed(e) for e in self.eps_values])

    def prior(self) -> BoxPrior:
        return BoxPrior(self.prior_lower, self.prior_upper)


def _union_alphas(d_list):
    return np.unique(np.round(np.concatenate([equally_spaced_alphas(d) for d in d_list]), 12))


def gaussian_proposal(cfg: GaussianExperimentConfig, theta_hat, n: int) -> ProposalSpec:
    """Defensive mixture around the full-data MLE, or the prior itself."""
    if cfg.proposal == "prior":
        return ProposalSpec.prior()
    model = GaussianQuantileModel(equally_spaced_alphas(min(cfg.d_list)), n, cfg.prior())
    cov = np.linalg.inv(fisher_info_summary(model.limit(theta_hat))) / n
    return ProposalSpec.from_moments(cfg.beta, theta_hat, cfg.proposal_inflation * cov, cfg.df)


def gaussian_replicate(args) -> dict:
    """Estimates of one replicate keyed by ``(method, d, summary_variant, rule_label)``."""
    cfg, r = args
    stream = RngStream(cfg.seed, (GAUSSIAN_ID, r))
    theta0 = np.asarray(cfg.theta0, dtype=float)
    prior = cfg.prior()
    kernel = Kernel("uniform")
    data = stream.spawn(0).generator().normal(theta0[0], theta0[1], cfg.n)
    theta_mle = mle_gaussian(data)
    out = {("mle", "", "full_data", ""): (theta_mle, np.nan)}

    alphas = _union_alphas(cfg.d_list)
    union = GaussianQuantileModel(alphas, cfg.n, prior)
    proposal = gaussian_proposal(cfg, theta_mle, cfg.n)
    sims = simulate_proposals(union, proposal, cfg.N, stream.spawn(1), _inner_workers(cfg))
    mles_rng = stream.spawn(2).generator()
    init = np.clip(theta_mle, prior.lower, prior.upper)

    for d in cfg.d_list:
        model = GaussianQuantileModel(equally_spaced_alphas(d), cfg.n, prior)
        cols = np.searchsorted(alphas, np.round(model.alphas, 12))
        s_obs = model.summary(data)
        try:
            est = mles(model.limit, s_obs, cfg.n, init, prior.lower, prior.upper, rng=mles_rng,
                       restarts=cfg.mles_restarts, valid=lambda t: t[1] > 0)
        except MLESConvergenceError as err:
            log.warning("MLES did not converge (d=%d, replicate %d); using best iterate", d, r)
            est = err.best
        out[("mles", d, "original", "")] = (est, np.nan)

        C = reduction_matrix(model.limit(theta0))
        summ = sims.summaries[:, cols]
        variants = {
            "original": summary_distances(kernel, summ, s_obs),
            "reduced": summary_distances(kernel, summ @ C.T, C @ s_obs),
        }
        for variant, dist in variants.items():
            for rule in cfg.rules():
                try:
                    sample = accept(sims.theta, sims.weights, dist, sims.uniforms, kernel, rule,
                                    sims.seed)
                except EmptyAcceptanceError as err:
                    raise ExperimentError(
                        f"d={d}, {variant}, {rule.label()}, replicate {r}: {err}") from err
                out[("abc", d, variant, rule.label())] = (posterior_mean(sample), sample.bandwidth)
    return out


def run_gaussian_experiment(cfg: GaussianExperimentConfig) -> ResultTable:
    """MSE and MSE*n of ABC (original and C-reduced summaries), MLES and MLE.

    Also emits ``mles_asymptotic`` rows carrying the analytic MLES variance.
    """
    cfg.validate()
    reps = _map(gaussian_replicate, [(cfg, r) for r in range(cfg.replicates)], cfg.workers)
    theta0 = np.asarray(cfg.theta0, dtype=float)
    table = ResultTable()
    coords = ("mu", "sigma")

    def emit(method, d, variant, rule, mse, mse_n, eps_mean=np.nan):
        for j, c in enumerate(coords):
            table.append({"method": method, "d": d, "summary_variant": variant,
                          "eps_or_rate": rule, "coord": c, "mse": float(mse[j]),
                          "mse_times_n": float(mse_n[j]), "replicates": cfg.replicates,
                          "seed": cfg.seed, "eps_mean": eps_mean})

    for key in reps[0]:
        est = np.array([rep[key][0] for rep in reps])
        eps = float(np.mean([rep[key][1] for rep in reps]))
        m = mse_table(est, theta0, cfg.n)
        emit(*key, m["mse"], m["mse_times_n"], eps)
    for d in cfg.d_list:
        model = GaussianQuantileModel(equally_spaced_alphas(d), cfg.n, cfg.prior())
        av = np.diag(np.linalg.inv(fisher_info_summary(model.limit(theta0))))
        emit("mles_asymptotic", d, "original", "", av / cfg.n, av)
    return table


# ---------------------------------------------------------------------------
# stochastic volatility


SV_METHODS = ("R-ABC", "IIS-mix", "IIS-t")


@dataclass
class SVExperimentConfig:
    n_list: tuple = (100, 500, 2000)
    replicates: int = 50
    N: int = 10_000
    N0: int = 1_000
    p_schedule: tuple = (0.05, 0.04, 0.03, 0.02, 0.01)
    tail_rate: float = 0.01
    rabc_rate: float = 0.05
    beta: float = 0.05
    df: float = 5.0
    max_iters: int = 8
    theta0: tuple = (0.9, 0.675, -4.1)
    prior_lower: tuple = (0.0, 0.1, -10.0)
    prior_upper: tuple = (1.0, 3.0, -1.0)
    standardize: bool = True
    pilot_N: int = 10_000
    seed: int = 0
    variants: tuple = SV_METHODS
    workers: int = 1

    @classmethod
    def full(cls, **kw) -> "SVExperimentConfig":
        kw.setdefault("n_list", (100, 500, 2000, 10_000))
        kw.setdefault("replicates", 100)
        return cls(**kw)

    def validate(self):
        if self.replicates < 2:
            raise ContractViolation("need at least 2 replicates")
        if not self.n_list or min(self.n_list) < 2:
            raise ContractViolation("data sizes must be >= 2")
        if "R-ABC" not in self.variants or not set(self.variants) <= set(SV_METHODS):
            raise ContractViolation(f"variants must include R-ABC and be among {SV_METHODS}")
        BandwidthRule.rate(self.rabc_rate)
        self.iis_config()

    def iis_config(self) -> IISConfig:
        return IISConfig(N=self.N, N0=self.N0, p_schedule=tuple(self.p_schedule),
                         tail_rate=self.tail_rate, beta=self.beta, df=self.df,
                         max_iters=self.max_iters)

    def prior(self) -> BoxPrior:
        return BoxPrior(self.prior_lower, self.prior_upper)


def sv_kernel(cfg: SVExperimentConfig, i_n: int) -> Kernel:
    kernel = Kernel("uniform")
    if not cfg.standardize:
        return kernel
    model = SVModel(cfg.n_list[i_n], cfg.prior())
    return pilot_scaled_kernel(model, kernel, cfg.pilot_N, RngStream(cfg.seed, (SV_ID, PILOT, i_n)))


def sv_replicate(args) -> dict:
    cfg, r, i_n, kernel = args
    n = cfg.n_list[i_n]
    stream = RngStream(cfg.seed, (SV_ID, r, i_n))
    model = SVModel(n, cfg.prior())
    theta0 = np.asarray(cfg.theta0, dtype=float)
    s_obs = model.summary(model.simulate_data(theta0, stream.spawn(0).generator()))
    out = {}
    try:
        rabc = rejection_abc(model, kernel, s_obs, BandwidthRule.rate(cfg.rabc_rate), cfg.N,
                             stream.spawn(1))
        out["R-ABC"] = (posterior_mean(rabc), rabc.bandwidth, rabc.n_proposed)
        iis_variants = [v for v in cfg.variants if v != "R-ABC"]
        if iis_variants:
            icfg = cfg.iis_config()
            trace = iis_adapt(model, kernel, s_obs, icfg, stream.spawn(2))
            for v in iis_variants:
                sample = iis_final(model, kernel, s_obs, icfg, trace, stream.spawn(2),
                                   final_mixture=(v == "IIS-mix"))
                out[v] = (posterior_mean(sample), sample.bandwidth,
                          trace.n_adapt_simulations + sample.n_proposed)
    except (EmptyAcceptanceError, ContractViolation) as err:
        raise ExperimentError(f"SV n={n}, replicate {r}: {err}") from err
    return out


def run_sv_experiment(cfg: SVExperimentConfig) -> ResultTable:
    """MSE*n per method, data size and coordinate, plus MSE ratios against R-ABC."""
    cfg.validate()
    theta0 = np.asarray(cfg.theta0, dtype=float)
    coords = ("phi", "sigma_eta", "log_sigma_bar")
    table = ResultTable()
    for i_n, n in enumerate(cfg.n_list):
        kernel = sv_kernel(cfg, i_n)
        reps = _map(sv_replicate, [(cfg, r, i_n, kernel) for r in range(cfg.replicates)],
                    cfg.workers)
        mse = {}
        for method in cfg.variants:
            est = np.array([rep[method][0] for rep in reps])
            budget = {rep[method][2] for rep in reps}
            if budget != {cfg.N}:
                raise ExperimentError(f"{method} used {budget} simulations, expected {cfg.N}")
            mse[method] = (mse_table(est, theta0, n),
                           float(np.mean([rep[method][1] for rep in reps])))
        base = mse["R-ABC"][0]["mse"]
        for method in cfg.variants:
            m, eps = mse[method]
            for j, c in enumerate(coords):
                table.append({"method": method, "n": n, "coord": c, "mse": float(m["mse"][j]),
                              "mse_times_n": float(m["mse_times_n"][j]),
                              "ratio_vs_rabc": float(m["mse"][j] / base[j]),
                              "replicates": cfg.replicates, "seed": cfg.seed,
                              "eps_mean": eps})
    return table


# ---------------------------------------------------------------------------
# acceptance-probability decay


@dataclass
class DecayConfig:
    n_list: tuple = (100, 1_000, 10_000)
    d: int = 2
    eps_scale: float = 3.0
    N: int = 10_000_000
    N_iis: int = 100_000
    theta0: tuple = (1.0, math.sqrt(2.0))
    prior_lower: tuple = (-10.0, -10.0)
    prior_upper: tuple = (10.0, 10.0)
    iis: IISConfig = field(default_factory=IISConfig)
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.N < 1 or self.N_iis < 1:
            raise ContractViolation("empty decay table: N must be >= 1")
        if len(self.n_list) < 2:
            raise ContractViolation("need at least two data sizes for a slope")
        if not self.eps_scale > 0:
            raise ContractViolation("eps_scale must be > 0")


@dataclass
class DecayResult:
    table: ResultTable
    prior_slope: float
    iis_ratio: float


def loglog_slope(n_list, p_acc) -> float:
    return float(np.polyfit(np.log(n_list), np.log(p_acc), 1)[0])


def run_acceptance_decay(cfg: DecayConfig) -> DecayResult:
    """Acceptance probability at ``eps = eps_scale / sqrt(n)`` for prior and IIS proposals.

    The IIS proposal is the adapted mixture refitted once on an IS-ABC sample
    at the target bandwidth, so its scale tracks the ABC posterior at ``eps_n``.
    """
    cfg.validate()
    prior = BoxPrior(cfg.prior_lower, cfg.prior_upper)
    theta0 = np.asarray(cfg.theta0, dtype=float)
    kernel = Kernel("uniform")
    table = ResultTable()
    for i_n, n in enumerate(cfg.n_list):
        model = GaussianQuantileModel(equally_spaced_alphas(cfg.d), n, prior)
        stream = RngStream(cfg.seed, (DECAY_ID, i_n))
        s_obs = model.simulate_summary(theta0, stream.spawn(0).generator())
        rule = BandwidthRule.fixed(cfg.eps_scale / math.sqrt(n))
        trace = iis_adapt(model, kernel, s_obs, cfg.iis, stream.spawn(2), cfg.workers)
        # one more round at the target eps so the proposal matches pi_ABC at eps_n
        try:
            refit = is_abc(model, kernel, s_obs, trace.proposal, rule, cfg.iis.N0,
                           stream.spawn(4), cfg.workers)
            q_iis = update_proposal(refit, cfg.iis.df, cfg.iis.inflation, cfg.iis.beta)
        except (EmptyAcceptanceError, ContractViolation):
            q_iis = trace.proposal
        for name, proposal, N, sub in (("prior", ProposalSpec.prior(), cfg.N, 1),
                                       ("iis", q_iis, cfg.N_iis, 3)):
            try:
                sample = is_abc(model, kernel, s_obs, proposal, rule, N, stream.spawn(sub),
                                cfg.workers)
                p_acc, e, n_acc = sample.acceptance_rate, ess(sample), sample.n_accepted
            except EmptyAcceptanceError:
                p_acc, e, n_acc = 0.0, 0.0, 0
            table.append({"proposal": name, "n": n, "p_acc_hat": p_acc, "ess": e,
                          "eps": rule.value, "n_acc": n_acc})
    p_prior = [r["p_acc_hat"] for r in table.select(proposal="prior")]
    p_iis = [r["p_acc_hat"] for r in table.select(proposal="iis")]
    slope = loglog_slope(cfg.n_list, p_prior) if min(p_prior) > 0 else float("-inf")
    ratio = p_iis[-1] / p_iis[0] if p_iis[0] > 0 else float("nan")
    return DecayResult(table, slope, ratio)
