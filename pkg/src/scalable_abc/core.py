"""Kernels, weighted samples and the seeded-randomness contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

KERNEL_FAMILIES = ("uniform", "gaussian", "epanechnikov")
_U64 = (1 << 64) - 1


class ContractViolation(ValueError):
    """Raised when an operation's preconditions are violated."""


class DomainError(ValueError):
    """Raised when a parameter lies outside a model's valid domain."""


class EmptyAcceptanceError(RuntimeError):
    """Raised when an ABC run accepts no particle."""


@dataclass(frozen=True, eq=False)
class Kernel:
    """Smoothing kernel with maximum value 1, radial in the Lambda-norm.

    Parameters
    ----------
    family : {'uniform', 'gaussian', 'epanechnikov'}
    lam : array_like, optional
        Diagonal of the positive-definite scaling matrix Lambda. ``None``
        means the identity in whatever dimension the kernel is applied to.
    """

    family: str = "uniform"
    lam: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ContractViolation(f"unknown kernel family {self.family!r}")
        if self.lam is not None:
            lam = np.asarray(self.lam, dtype=float).reshape(-1)
            if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam <= 0):
                raise ContractViolation("kernel lambda entries must be finite and > 0")
            lam.setflags(write=False)
            object.__setattr__(self, "lam", lam)

    @classmethod
    def identity(cls, family: str, d: int) -> "Kernel":
        return cls(family, np.ones(d))

    def with_lambda(self, lam) -> "Kernel":
        return Kernel(self.family, lam)

    def __eq__(self, other):
        if not isinstance(other, Kernel) or other.family != self.family:
            return False
        if self.lam is None or other.lam is None:
            return self.lam is other.lam
        return np.array_equal(self.lam, other.lam)

    def __hash__(self):
        return hash((self.family, None if self.lam is None else self.lam.tobytes()))


def _squared_norm(k: Kernel, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if k.lam is None:
        return np.einsum("...i,...i->...", v, v)
    if v.shape[-1] != k.lam.size:
        raise ContractViolation(
            f"summary dimension {v.shape[-1]} does not match kernel dimension {k.lam.size}")
    return np.einsum("...i,i,...i->...", v, k.lam, v)


def lambda_norm(k: Kernel, v) -> np.ndarray | float:
    """``sqrt(v^T Lambda v)``, vectorised over leading axes of ``v``."""
    out = np.sqrt(_squared_norm(k, v))
    return float(out) if out.ndim == 0 else out


def _profile(family: str, r2):
    if family == "uniform":
        return np.where(r2 <= 1.0, 1.0, 0.0)
    if family == "gaussian":
        return np.exp(-0.5 * r2)
    return np.maximum(0.0, 1.0 - r2)


def kernel_eval(k: Kernel, v):
    """Evaluate ``K(v)``; equals 1 at the origin and never exceeds 1."""
    out = _profile(k.family, _squared_norm(k, v))
    return float(out) if np.ndim(out) == 0 else out


def kernel_from_distance(k: Kernel, dist):
    """Kernel value given the Lambda-norm ``dist`` already computed."""
    dist = np.asarray(dist, dtype=float)
    out = _profile(k.family, dist * dist)
    return float(out) if out.ndim == 0 else out


def scaled_kernel_eval(k: Kernel, eps: float, x):
    """``K_eps(x) = K(x / eps)``."""
    if not eps > 0:
        raise ContractViolation(f"bandwidth must be positive, got {eps}")
    return kernel_eval(k, np.asarray(x, dtype=float) / eps)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream keyed by a seed and an integer path.

    Two streams with identical ``(seed, key)`` yield identical draws; any
    difference in the key gives an independent stream (``SeedSequence``
    spawn keys).
    """

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _U64)
        object.__setattr__(self, "key", tuple(int(i) & _U64 for i in self.key))

    @property
    def stream_id(self) -> int | None:
        return self.key[-1] if self.key else None

    def spawn(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))


def derive_stream(seed: int, stream_id: int) -> RngStream:
    return RngStream(seed, (stream_id,))


def as_stream(seed) -> RngStream:
    return seed if isinstance(seed, RngStream) else RngStream(seed)


class WeightedParticle(NamedTuple):
    theta: np.ndarray
    weight: float
    distance: float
    accepted: bool = True


@dataclass(eq=False)
class PosteriorSample:
    """Accepted particles of one ABC run, stored column-wise.

    ``theta`` has shape ``(n_acc, p)``; ``weights`` are prior/proposal
    density ratios and ``distances`` are Lambda-norm distances to the
    observed summary.
    """

    theta: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    n_proposed: int
    bandwidth: float
    seed: int
    kernel: Kernel
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.distances = np.asarray(self.distances, dtype=float).reshape(-1)
        m = self.theta.shape[0]
        if m == 0:
            raise EmptyAcceptanceError("posterior sample has no accepted particles")
        if self.weights.size != m or self.distances.size != m:
            raise ContractViolation("theta, weights and distances must align")
        if self.n_proposed < m:
            raise ContractViolation("n_proposed smaller than the number of accepted particles")
        if np.any(self.weights < 0) or np.any(self.distances < 0):
            raise ContractViolation("weights and distances must be nonnegative")

    @property
    def n_accepted(self) -> int:
        return self.theta.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed

    @property
    def particles(self) -> list[WeightedParticle]:
        return [WeightedParticle(t, float(w), float(dd), True)
                for t, w, dd in zip(self.theta, self.weights, self.distances)]
