"""Rejection, importance-sampling and iterative ABC with summary dimension reduction."""

from .core import (ContractViolation, DomainError, EmptyAcceptanceError, Kernel,
                   PosteriorSample, RngStream, WeightedParticle, derive_stream,
                   kernel_eval, lambda_norm, scaled_kernel_eval)
from .models import (BoxPrior, GaussianQuantileModel, Model, SVModel, lag1_autocorrelation,
                     prior_density, prior_sample, sample_quantile)
from .samplers import (BandwidthRule, IISConfig, ProposalSpec, iis_abc, is_abc,
                       rejection_abc, select_bandwidth, update_proposal)

__version__ = "0.1.0"
