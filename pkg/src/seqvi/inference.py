"""Structured inference network: backward GRU encoder plus combiner.

The encoder runs right-to-left so the hidden state at step t summarizes
x_{t:T}; the combiner maps (z_{t-1}, h_t) to the per-step posterior Gaussian.
The posterior rollout draws the latent trajectory with externally supplied
standard-normal noise (reparameterization), keeping the whole chain
differentiable with respect to the variational parameters.
"""

from __future__ import annotations

import numpy as np

from .autodiff import AutodiffError, Tensor, as_tensor
from .distributions import DiagGaussian, gaussian_log_prob, gaussian_rsample
from .layers import Linear, collect_params, ensure_rows, load_params, restore_rows

__all__ = ["GRUEncoder", "Combiner", "InferenceNet", "PosteriorRollout", "rollout"]


class GRUEncoder:
    """Single GRU cell applied backward in time.

    Gate convention: h_t = u * h_next + (1 - u) * c with update gate u,
    reset gate r, and candidate c = tanh(x W_c + (r * h_next) U_c + b_c).
    Masked steps propagate the incoming hidden state unchanged, so trailing
    padding never alters the encoding of the valid prefix.
    """

    def __init__(self, d_x: int, n_h: int, rng: np.random.Generator):
        self.d_x = d_x
        self.n_h = n_h
        self.x_update = Linear(d_x, n_h, rng)
        self.h_update = Linear(n_h, n_h, rng)
        self.x_reset = Linear(d_x, n_h, rng)
        self.h_reset = Linear(n_h, n_h, rng)
        self.x_cand = Linear(d_x, n_h, rng)
        self.h_cand = Linear(n_h, n_h, rng)

    def cell(self, x_t: Tensor, h_next: Tensor) -> Tensor:
        u = (self.x_update(x_t) + self.h_update(h_next)).sigmoid()
        r = (self.x_reset(x_t) + self.h_reset(h_next)).sigmoid()
        c = (self.x_cand(x_t) + self.h_cand(r * h_next)).tanh()
        return u * h_next + (1.0 - u) * c

    def encode(self, xs, mask=None) -> list[Tensor]:
        """Hidden states h_1..h_T computed right-to-left over [B, T, d_x]."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 2:
            xs = xs[None, :, :]
            squeeze = True
        elif xs.ndim == 3:
            squeeze = False
        else:
            raise AutodiffError(f"encode expects [T, d] or [B, T, d], got {xs.shape}")
        B, T, d = xs.shape
        if d != self.d_x:
            raise AutodiffError(f"input width {d} != {self.d_x}")
        if T < 1:
            raise AutodiffError("empty sequence")
        if mask is None:
            mask = np.ones((B, T))
        else:
            mask = np.asarray(mask, dtype=np.float64).reshape(B, T)

        h = Tensor(np.zeros((B, self.n_h)))
        hs: list[Tensor] = [None] * T
        for t in range(T - 1, -1, -1):
            h_new = self.cell(Tensor(xs[:, t, :]), h)
            m = mask[:, t:t + 1]
            h = h_new * m + h * (1.0 - m) if not np.all(m == 1.0) else h_new
            hs[t] = h
        if squeeze:
            hs = [ht.reshape((self.n_h,)) for ht in hs]
        return hs

    def _parts(self):
        return {"x_update": self.x_update, "h_update": self.h_update,
                "x_reset": self.x_reset, "h_reset": self.h_reset,
                "x_cand": self.x_cand, "h_cand": self.h_cand}

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


class Combiner:
    """(z_{t-1}, h_t) -> posterior Gaussian over z_t.

    c = (tanh(W_z z_prev + b_z) + P h_t) / 2 with P a linear projection of
    the hidden state down to the latent width (the identity is not assumed
    even when n_h == n_z would allow it to be skipped), then linear mean and
    log-variance heads on c.
    """

    def __init__(self, n_z: int, n_h: int, rng: np.random.Generator):
        self.n_z = n_z
        self.n_h = n_h
        self.z_mix = Linear(n_z, n_z, rng)
        self.h_proj = Linear(n_h, n_z, rng) if n_h != n_z else None
        self.mean_head = Linear(n_z, n_z, rng)
        self.log_var_head = Linear(n_z, n_z, rng)

    def __call__(self, z_prev, h_t) -> DiagGaussian:
        z, was_vec = ensure_rows(z_prev)
        h, _ = ensure_rows(h_t)
        if z.shape[-1] != self.n_z or h.shape[-1] != self.n_h:
            raise AutodiffError(
                f"combiner widths ({z.shape[-1]}, {h.shape[-1]}) != ({self.n_z}, {self.n_h})"
            )
        h_z = self.h_proj(h) if self.h_proj is not None else h
        c = 0.5 * (self.z_mix(z).tanh() + h_z)
        mean = self.mean_head(c)
        log_var = self.log_var_head(c)
        return DiagGaussian(restore_rows(mean, was_vec),
                            restore_rows(log_var, was_vec))

    def _parts(self):
        parts = {"z_mix": self.z_mix, "mean_head": self.mean_head,
                 "log_var_head": self.log_var_head}
        if self.h_proj is not None:
            parts["h_proj"] = self.h_proj
        return parts

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


class PosteriorRollout:
    """Sampled latent trajectory plus the per-step posterior parameters."""

    __slots__ = ("z_samples", "q_params", "eps_used", "mask")

    def __init__(self, z_samples: list[Tensor], q_params: list[DiagGaussian],
                 eps_used: np.ndarray, mask: np.ndarray):
        self.z_samples = z_samples
        self.q_params = q_params
        self.eps_used = eps_used
        self.mask = mask

    @property
    def length(self) -> int:
        return len(self.z_samples)

    def log_q(self) -> Tensor:
        """Masked sum_t log q(z_t | z_{t-1}, x) at the sampled trajectory."""
        batched = self.z_samples[0].ndim > 1
        total = None
        for t, (z_t, q_t) in enumerate(zip(self.z_samples, self.q_params)):
            m = self.mask[:, t] if batched else self.mask[t]
            term = gaussian_log_prob(z_t, q_t) * m
            total = term if total is None else total + term
        return total


class InferenceNet:
    """Backward GRU encoder plus combiner; the variational model q_phi."""

    def __init__(self, encoder: GRUEncoder, combiner: Combiner):
        if encoder.n_h != combiner.n_h:
            raise AutodiffError("encoder/combiner hidden widths disagree")
        self.encoder = encoder
        self.combiner = combiner
        self.n_z = combiner.n_z

    def encode(self, xs, mask=None) -> list[Tensor]:
        return self.encoder.encode(xs, mask)

    def step(self, z_prev, h_t) -> DiagGaussian:
        return self.combiner(z_prev, h_t)

    def _parts(self):
        return {"encoder": self.encoder, "combiner": self.combiner}

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


def rollout(infnet: InferenceNet, xs, mask, eps, hs=None) -> PosteriorRollout:
    """Draw z_1:T from the posterior via reparameterized ancestral sampling.

    `eps` has shape [T, n_z] (or [B, T, n_z] for a batch); the first combiner
    call conditions on a zero state.  Pass precomputed hidden states `hs` to
    share one encoding across several rollouts of the same observations.
    """
    xs = np.asarray(xs, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    batched = xs.ndim == 3
    B = xs.shape[0] if batched else 1
    T = xs.shape[1] if batched else xs.shape[0]
    if mask is None:
        mask = np.ones((B, T) if batched else (T,))
    mask = np.asarray(mask, dtype=np.float64)
    if eps.shape != ((B, T, infnet.n_z) if batched else (T, infnet.n_z)):
        raise AutodiffError(f"eps shape {eps.shape} does not match rollout")
    if hs is None:
        hs = infnet.encode(xs, mask)

    z_prev = Tensor(np.zeros((B, infnet.n_z) if batched else (infnet.n_z,)))
    z_samples: list[Tensor] = []
    q_params: list[DiagGaussian] = []
    for t in range(T):
        q_t = infnet.step(z_prev, hs[t])
        e_t = eps[:, t, :] if batched else eps[t]
        z_t = gaussian_rsample(q_t, e_t)
        z_samples.append(z_t)
        q_params.append(q_t)
        z_prev = z_t
    return PosteriorRollout(z_samples, q_params, eps, mask)
