"""Training bounds and gradient estimators.

Two quantities are distinguished throughout the toolkit:

* the *per-sample bound realization* used for training: the masked
  reconstruction sum minus the closed-form KL terms evaluated at the sampled
  conditioning states.  The importance-weighted update multiplies each
  sample's realization by its detached normalized weight, so with K = 1 the
  update degenerates bit-exactly to the plain bound's gradient;
* the *true log importance ratio* log p(x, z) - log q(z | x), used for
  marginal-likelihood estimation (see metrics), where unbiasedness matters.

KL annealing scales the KL portion during training only; reported values and
likelihood estimates are never annealed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import AutodiffError, Tensor, matmul
from .distributions import gaussian_kl, gaussian_log_prob, gaussian_rsample
from .generative import GenerativeModel, joint_log_prob
from .inference import InferenceNet, PosteriorRollout

__all__ = [
    "BoundConfig",
    "LogWeights",
    "anneal_coef",
    "normalize_weights",
    "dkf_bound",
    "log_weight",
    "iwdkf_loss",
    "bound_grid",
]

BOUND_KINDS = ("dkf", "iwdkf")


@dataclass
class BoundConfig:
    """Which bound to train, with how many importance samples."""

    kind: str = "dkf"
    K: int = 1
    anneal_total_updates: int = 0
    L: int = 1
    phi_grads: bool = True

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"bound kind must be one of {BOUND_KINDS}")
        if self.L != 1:
            raise ValueError("only L = 1 inner samples are supported")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.kind == "dkf" and self.K != 1:
            raise ValueError("the plain bound uses a single sample (K = 1)")


@dataclass
class LogWeights:
    """Per-datapoint log weights and their normalized (detached) form."""

    logw: np.ndarray
    tilde: np.ndarray = field(init=False)

    def __post_init__(self):
        lw = np.asarray(self.logw, dtype=np.float64)
        self.logw = lw
        m = lw.max(axis=0, keepdims=True)
        w = np.exp(lw - (m + np.log(np.exp(lw - m).sum(axis=0, keepdims=True))))
        self.tilde = w


def anneal_coef(update_index: int, total: int) -> float:
    """Linear KL warm-up: min(1, update/total); 1 when annealing is off."""
    if update_index < 0:
        raise ValueError("update index must be non-negative")
    if total < 0:
        raise ValueError("total updates must be non-negative")
    if total == 0:
        return 1.0
    return min(1.0, update_index / total)


def normalize_weights(logw) -> LogWeights:
    """Self-normalized weights per datapoint, detached from the graph.

    Accepts a [K] vector or a [K, B] grid (normalization over axis 0);
    computed via the shifted softmax so arbitrarily large log weights stay
    finite.
    """
    values = logw.data if isinstance(logw, Tensor) else np.asarray(logw, float)
    return LogWeights(values)


def _tile_rows(t: Tensor, K: int, B: int) -> Tensor:
    """Stack K graph-connected copies of a [B, d] tensor into [K*B, d]."""
    if K == 1:
        return t
    tile = np.tile(np.eye(B), (K, 1))
    return reduce("sum", None) if False else __import__("seqvi.autodiff", fromlist=["matmul"]).matmul(tile, t)


def bound_grid(model: GenerativeModel, infnet: InferenceNet, xs, mask,
               eps_stack) -> tuple[Tensor, Tensor]:
    """Reconstruction and KL sums for K stacked rollouts.

    `xs` is [B, T, d] (or [T, d]); `eps_stack` is [K, B, T, n_z] (or
    [K, T, n_z]).  Returns (recon, kl) tensors of shape [K, B], where
    recon[k, i] = masked sum_t log p(x_t | z_t^(k)) and kl[k, i] is the
    matching closed-form KL sum.  The observation encoding is computed once
    and shared by all K rollouts.
    """
    from .autodiff import matmul

    xs = np.asarray(xs, dtype=np.float64)
    eps_stack = np.asarray(eps_stack, dtype=np.float64)
    if xs.ndim == 2:
        xs = xs[None]
        if eps_stack.ndim == 3:
            eps_stack = eps_stack[:, None]
        if mask is not None:
            mask = np.asarray(mask, dtype=np.float64)[None]
    B, T, _ = xs.shape
    if mask is None:
        mask = np.ones((B, T))
    mask = np.asarray(mask, dtype=np.float64).reshape(B, T)
    K = eps_stack.shape[0]
    n_z = infnet.n_z
    if eps_stack.shape != (K, B, T, n_z):
        raise AutodiffError(f"eps stack shape {eps_stack.shape} != {(K, B, T, n_z)}")

    hs = infnet.encode(xs, mask)
    if K > 1:
        tile = np.tile(np.eye(B), (K, 1))
        hs = [matmul(tile, h) for h in hs]
        xs_kb = np.concatenate([xs] * K, axis=0)
        mask_kb = np.concatenate([mask] * K, axis=0)
    else:
        xs_kb, mask_kb = xs, mask
    eps_kb = eps_stack.reshape(K * B, T, n_z)

    prior = model.prior((K * B,))
    z_prev = Tensor(np.zeros((K * B, n_z)))
    recon = None
    kl = None
    for t in range(T):
        q_t = infnet.step(z_prev, hs[t])
        z_t = gaussian_rsample(q_t, eps_kb[:, t, :])
        p_t = prior if t == 0 else model.transition(z_prev)
        m_t = mask_kb[:, t]
        r_term = model.log_emission(xs_kb[:, t, :], z_t) * m_t
        k_term = gaussian_kl(q_t, p_t) * m_t
        recon = r_term if recon is None else recon + r_term
        kl = k_term if kl is None else kl + k_term
        z_prev = z_t
    return recon.reshape((K, B)), kl.reshape((K, B))


def dkf_bound(xs, mask, model: GenerativeModel, infnet: InferenceNet,
              anneal: float, eps) -> Tensor:
    """Single-sample bound: recon - anneal * KL, per sequence.

    `eps` is one rollout's noise, [T, n_z] or [B, T, n_z]; the result is a
    scalar for a single sequence or a [B] tensor for a batch.
    """
    if not 0.0 <= anneal <= 1.0:
        raise ValueError(f"anneal coefficient {anneal} outside [0, 1]")
    eps = np.asarray(eps, dtype=np.float64)
    single = np.asarray(xs).ndim == 2
    recon, kl = bound_grid(model, infnet, xs, mask, eps[None])
    bound = recon - anneal * kl
    return bound.reshape(()) if single else bound.reshape((bound.shape[-1],))


def log_weight(xs, mask, ro: PosteriorRollout, model: GenerativeModel,
               infnet: InferenceNet) -> Tensor:
    """True log importance ratio log p(x, z) - log q(z | x) at a rollout."""
    if ro.length == 0:
        raise AutodiffError("empty rollout")
    if ro.z_samples[0].shape[-1] != model.n_z or infnet.n_z != model.n_z:
        raise AutodiffError("rollout/model width mismatch")
    return joint_log_prob(model, xs, ro.z_samples, mask) - ro.log_q()


def iwdkf_loss(xs, mask, model: GenerativeModel, infnet: InferenceNet,
               K: int, eps_bank, anneal: float = 1.0):
    """Importance-weighted training loss over K rollouts per datapoint.

    Returns (loss, info): the loss is the negated weighted bound
    -mean_i sum_k tilde[k, i] * logw[k, i] with the normalized weights
    detached, so its gradient is the weighted sum of per-sample bound
    gradients.  `info` carries detached arrays for logging: the [K, B] bound
    realizations (un-annealed), KL sums, and the normalized weights.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 <= anneal <= 1.0:
        raise ValueError(f"anneal coefficient {anneal} outside [0, 1]")
    eps_bank = np.asarray(eps_bank, dtype=np.float64)
    recon, kl = bound_grid(model, infnet, xs, mask, eps_bank)
    logw = recon - anneal * kl
    B = logw.shape[1]
    weights = normalize_weights(logw)
    loss = -(Tensor(weights.tilde) * logw).sum() / float(B)
    info = {
        "bound": recon.data - kl.data,
        "kl": kl.data.copy(),
        "tilde": weights.tilde,
        "logw": weights.logw,
    }
    return loss, info
