"""Command-line front end.

Every command resolves its configuration as: scale defaults (``--desk`` or
``--full``), then the JSON ``--config`` file, then explicit flags. The
resolved configuration, including the seed, is written to ``manifest.json``
next to the CSV output; passing that manifest back as ``--config`` reruns
the command byte-identically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import ContractViolation, EmptyAcceptanceError, Kernel, RngStream
from .diagnostics import estimator_report
from .experiments import (DecayConfig, ExperimentError, GaussianExperimentConfig,
                          SVExperimentConfig, run_acceptance_decay, run_gaussian_experiment,
                          run_sv_experiment)
from .models import GaussianQuantileModel, SVModel, equally_spaced_alphas
from .samplers import (BandwidthRule, IISConfig, ProposalSpec, iis_abc, is_abc,
                       pilot_scaled_kernel)

log = logging.getLogger("scalable_abc")

GAUSSIAN_COLUMNS = ["method", "d", "summary_variant", "eps_or_rate", "coord", "mse",
                    "mse_times_n", "replicates", "seed"]
SV_COLUMNS = ["method", "n", "coord", "mse", "mse_times_n", "ratio_vs_rabc", "replicates",
              "seed"]
DECAY_COLUMNS = ["proposal", "n", "p_acc_hat", "ess", "eps"]


class ConfigError(ValueError):
    pass


@dataclass
class SampleConfig:
    """One-shot ABC run on a single observed summary."""

    model: str = "gaussian"
    n: int = 10_000
    d: int = 2
    truth: tuple | None = None
    s_obs: tuple | None = None
    method: str = "rejection"
    rate: float = 0.01
    eps: float | None = None
    N: int = 100_000
    kernel: str = "uniform"
    standardize: bool = False
    pilot_N: int = 10_000
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.model not in ("gaussian", "sv"):
            raise ContractViolation(f"unknown model {self.model!r}")
        if self.method not in ("rejection", "iis", "iis-t"):
            raise ContractViolation(f"unknown method {self.method!r}")
        if (self.truth is None) == (self.s_obs is None):
            raise ContractViolation("give exactly one of truth or s_obs")
        if self.N < 1:
            raise ContractViolation("N must be >= 1")
        self.build_model()
        self.rule()
        Kernel(self.kernel)
        if self.method != "rejection":
            IISConfig(N=self.N, N0=max(1, self.N // 10))

    def build_model(self):
        if self.model == "gaussian":
            return GaussianQuantileModel(equally_spaced_alphas(self.d), self.n)
        return SVModel(self.n)

    def rule(self) -> BandwidthRule:
        return BandwidthRule.fixed(self.eps) if self.eps is not None \
            else BandwidthRule.rate(self.rate)


# ---------------------------------------------------------------------------
# config plumbing


def _to_json(value):
    if dataclasses.is_dataclass(value):
        return {k: _to_json(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, dict):
        return {k: _to_json(v) for k, v in value.items()}
    if isinstance(value, (tuple, list)):
        return [_to_json(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def _from_json(value):
    if isinstance(value, list):
        return tuple(_from_json(v) for v in value)
    return value


def _apply(cfg, values: dict):
    names = {f.name for f in dataclasses.fields(cfg)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, val in values.items():
        if key == "iis" and isinstance(val, dict):
            val = IISConfig(**{k: _from_json(v) for k, v in val.items()})
        setattr(cfg, key, _from_json(val))
    return cfg


def _load_file(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    # a manifest from a previous run carries the resolved config under "config"
    return data.get("config", data) if "command" in data else data


def _entropy_seed() -> int:
    return int(np.random.SeedSequence().entropy) & ((1 << 64) - 1)


def resolve_config(command: str, args) -> object:
    scale = "full" if getattr(args, "full", False) else "desk"
    factories = {
        "run-gaussian": (GaussianExperimentConfig, GaussianExperimentConfig.full),
        "run-sv": (SVExperimentConfig, SVExperimentConfig.full),
        "decay": (DecayConfig, DecayConfig),
        "sample": (SampleConfig, SampleConfig),
    }
    desk, full = factories[command]
    cfg = _apply(full() if scale == "full" else desk(), _load_file(args.config))
    overrides = {}
    for key in ("seed", "workers", "replicates"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    for key in vars(args):
        if key.startswith("cfg_") and getattr(args, key) is not None:
            overrides[key[4:]] = getattr(args, key)
    _apply(cfg, overrides)
    if args.seed is None and "seed" not in _load_file(args.config):
        cfg.seed = _entropy_seed()
    if not 0 <= int(cfg.seed) < 1 << 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    try:
        cfg.validate()
    except (ContractViolation, TypeError) as err:
        raise ConfigError(str(err)) from err
    return cfg


# ---------------------------------------------------------------------------
# output


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def write_manifest(out: Path, command: str, cfg, outputs, wall_time: float):
    record = {
        "command": command,
        "config": _to_json(cfg),
        "seed": int(cfg.seed),
        "outputs": list(outputs),
        "versions": {"scalable_abc": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall_time,
    }
    (out / "manifest.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def _run_gaussian(cfg, out: Path) -> list[str]:
    write_csv(out / "gaussian_mse.csv", GAUSSIAN_COLUMNS, run_gaussian_experiment(cfg))
    return ["gaussian_mse.csv"]


def _run_sv(cfg, out: Path) -> list[str]:
    write_csv(out / "sv_mse.csv", SV_COLUMNS, run_sv_experiment(cfg))
    return ["sv_mse.csv"]


def _run_decay(cfg, out: Path) -> list[str]:
    res = run_acceptance_decay(cfg)
    write_csv(out / "decay.csv", DECAY_COLUMNS, res.table)
    log.info("prior log-log slope %.4f, IIS p_acc ratio %.4f", res.prior_slope, res.iis_ratio)
    return ["decay.csv"]


def run_sample(cfg: SampleConfig):
    """Run the configured sampler; returns ``(sample, s_obs)``."""
    model = cfg.build_model()
    stream = RngStream(cfg.seed, (4,))
    if cfg.s_obs is not None:
        s_obs = np.asarray(cfg.s_obs, dtype=float)
        if s_obs.size != model.d:
            raise ContractViolation(f"s_obs has {s_obs.size} entries, model expects {model.d}")
    else:
        s_obs = model.summary(model.simulate_data(np.asarray(cfg.truth, dtype=float),
                                                  stream.spawn(0).generator()))
    kernel = Kernel(cfg.kernel)
    if cfg.standardize:
        kernel = pilot_scaled_kernel(model, kernel, cfg.pilot_N, stream.spawn(1))
    if cfg.method == "rejection":
        sample = is_abc(model, kernel, s_obs, ProposalSpec.prior(), cfg.rule(), cfg.N,
                        stream.spawn(2), cfg.workers)
    else:
        icfg = IISConfig(N=cfg.N, N0=min(1000, max(1, cfg.N // 10)))
        sample, _ = iis_abc(model, kernel, s_obs, icfg, stream.spawn(3),
                            final_mixture=cfg.method == "iis", workers=cfg.workers)
    return sample, s_obs


def _run_sample(cfg, out: Path) -> list[str]:
    sample, _ = run_sample(cfg)
    p = sample.theta.shape[1]
    cols = [f"theta_{j + 1}" for j in range(p)] + ["weight", "distance"]
    rows = [dict(zip(cols, [*t, w, dist]))
            for t, w, dist in zip(sample.theta, sample.weights, sample.distances)]
    write_csv(out / "particles.csv", cols, rows)
    rep = estimator_report(sample)
    row = {"ess": rep.ess, "n_acc": rep.n_acc, "p_acc_hat": rep.p_acc_hat,
           "bandwidth": sample.bandwidth}
    for name in ("h_hat", "sigma_is_hat", "mcv_hat"):
        for j, v in enumerate(getattr(rep, name)):
            row[f"{name}_{j + 1}"] = v
    write_csv(out / "report.csv", list(row), [row])
    return ["particles.csv", "report.csv"]


RUNNERS = {"run-gaussian": _run_gaussian, "run-sv": _run_sv, "decay": _run_decay,
           "sample": _run_sample}


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from err


def _read_s_obs(path: str) -> tuple:
    rows = [r for r in csv.reader(Path(path).read_text(encoding="utf-8").splitlines()) if r]
    for row in rows:
        try:
            return tuple(float(x) for x in row)
        except ValueError:
            continue  # header
    raise argparse.ArgumentTypeError(f"no numeric row in {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scalable-abc",
                                     description="ABC experiments and samplers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, replicates=False):
        p.add_argument("--config", help="JSON config or a previous manifest.json")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (default: fresh entropy)")
        p.add_argument("--workers", type=int, help="worker processes")
        scale = p.add_mutually_exclusive_group()
        scale.add_argument("--desk", action="store_true", help="desk-scale defaults (default)")
        scale.add_argument("--full", action="store_true", help="full-scale defaults")
        if replicates:
            p.add_argument("--replicates", type=int)
        return p

    g = common(sub.add_parser("run-gaussian", help="Gaussian quantile MSE table"), True)
    g.add_argument("--n", dest="cfg_n", type=int)
    g.add_argument("--N", dest="cfg_N", type=int)

    s = common(sub.add_parser("run-sv", help="stochastic volatility MSE table"), True)
    s.add_argument("--n-list", dest="cfg_n_list", type=lambda t: tuple(int(x) for x in
                                                                       _float_list(t)))

    d = common(sub.add_parser("decay", help="acceptance probability versus n"))
    d.add_argument("--N", dest="cfg_N", type=int)

    a = common(sub.add_parser("sample", help="one ABC run on an observed summary"))
    a.add_argument("--model", dest="cfg_model", choices=("gaussian", "sv"))
    a.add_argument("--n", dest="cfg_n", type=int)
    a.add_argument("--d", dest="cfg_d", type=int)
    a.add_argument("--truth", dest="cfg_truth", type=_float_list)
    a.add_argument("--s-obs", dest="cfg_s_obs", type=_read_s_obs, help="CSV file, one row")
    a.add_argument("--method", dest="cfg_method", choices=("rejection", "iis", "iis-t"))
    a.add_argument("--rate", dest="cfg_rate", type=float)
    a.add_argument("--eps", dest="cfg_eps", type=float)
    a.add_argument("--N", dest="cfg_N", type=int)
    a.add_argument("--kernel", dest="cfg_kernel",
                   choices=("uniform", "gaussian", "epanechnikov"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.command, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as err:
        print(f"error: invalid configuration: {err}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    try:
        outputs = RUNNERS[args.command](cfg, out)
    except (ExperimentError, EmptyAcceptanceError, ContractViolation, ArithmeticError,
            np.linalg.LinAlgError) as err:
        print(f"error: {args.command} failed: {err}", file=sys.stderr)
        return 1
    write_manifest(out, args.command, cfg, outputs, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
