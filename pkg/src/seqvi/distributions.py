"""Diagonal-Gaussian and Bernoulli building blocks.

Log-densities, closed-form KL, and reparameterized sampling.  All functions
are shape-polymorphic over a leading batch axis: inputs of shape [d] yield
scalars, inputs of shape [B, d] yield per-row values of shape [B].  The
feature axis is always the trailing one.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import AutodiffError, Tensor, as_tensor

__all__ = [
    "DiagGaussian",
    "BernoulliVec",
    "gaussian_log_prob",
    "gaussian_kl",
    "gaussian_rsample",
    "bernoulli_log_prob",
]

LOG_2PI = math.log(2.0 * math.pi)


class DiagGaussian:
    """Gaussian with diagonal covariance: a mean and a log-variance vector."""

    __slots__ = ("mean", "log_var")

    def __init__(self, mean, log_var):
        mean, log_var = as_tensor(mean), as_tensor(log_var)
        if mean.shape != log_var.shape:
            raise AutodiffError(
                f"mean/log_var shapes differ: {mean.shape} vs {log_var.shape}"
            )
        self.mean = mean
        self.log_var = log_var

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]

    def __repr__(self) -> str:
        return f"DiagGaussian(shape={self.mean.shape})"


class BernoulliVec:
    """Vector of independent Bernoullis parameterized by logits."""

    __slots__ = ("logits",)

    def __init__(self, logits):
        self.logits = as_tensor(logits)

    @property
    def dim(self) -> int:
        return self.logits.shape[-1]


def _sum_last(t: Tensor) -> Tensor:
    return t.sum(axis=-1)


def gaussian_log_prob(x, g: DiagGaussian) -> Tensor:
    """log N(x; mean, diag exp(log_var)), summed over the feature axis."""
    x = as_tensor(x)
    if x.shape[-1:] != g.mean.shape[-1:]:
        raise AutodiffError(f"x shape {x.shape} incompatible with {g.mean.shape}")
    diff = x - g.mean
    quad = diff * diff * (-g.log_var).exp()
    terms = -0.5 * (LOG_2PI + g.log_var + quad)
    return _sum_last(terms)


def gaussian_kl(q: DiagGaussian, p: DiagGaussian) -> Tensor:
    """Closed-form KL(q || p) for diagonal Gaussians, summed over features."""
    lq, lp = q.log_var, p.log_var
    dmu = q.mean - p.mean
    terms = 0.5 * ((lq - lp).exp() + dmu * dmu * (-lp).exp() - 1.0 + lp - lq)
    return _sum_last(terms)


def gaussian_rsample(g: DiagGaussian, eps) -> Tensor:
    """Reparameterized draw z = mean + exp(log_var / 2) * eps.

    `eps` is externally supplied standard-normal noise; gradients flow to the
    mean and log-variance, never into eps.
    """
    eps = Tensor(np.asarray(eps, dtype=np.float64)) if not isinstance(eps, Tensor) else eps.detach()
    if eps.shape != g.mean.shape:
        raise AutodiffError(f"eps shape {eps.shape} != mean shape {g.mean.shape}")
    return g.mean + (0.5 * g.log_var).exp() * eps


def bernoulli_log_prob(x, b: BernoulliVec) -> Tensor:
    """Bernoulli log-likelihood of binary x, computed in stable logit form.

    log sigma(l) = -softplus(-l) and log(1 - sigma(l)) = -softplus(l), so the
    result stays finite for logits far into either saturation regime.
    """
    x = as_tensor(x)
    xd = x.data
    if not np.all((xd == 0.0) | (xd == 1.0)):
        raise AutodiffError("bernoulli_log_prob requires x entries in {0, 1}")
    l = b.logits
    terms = -(x * (-l).softplus() + (1.0 - x) * l.softplus())
    return _sum_last(terms)
