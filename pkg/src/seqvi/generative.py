"""Generative state-space families: initial prior, transition, emission.

Two concrete instantiations are provided:

* a physics-parameterized Lorenz transition (learnable sigma/rho/beta, fixed
  process noise) with an identity-mean Gaussian emission, and
* a learned gated-MLP transition with a Bernoulli MLP emission for binary
  sequence data.

Note on the Lorenz defaults used throughout: the drift is evaluated with
sigma = 28, rho = 10 exactly as configured by the experiments here, which
swaps the classical textbook convention (sigma = 10, rho = 28).  With these
values the system relaxes toward a fixed point instead of the strange
attractor; the discretized dynamics are kept verbatim rather than
"corrected".
"""

from __future__ import annotations

import numpy as np

from .autodiff import AutodiffError, Tensor, as_tensor, matmul
from .distributions import (
    BernoulliVec,
    DiagGaussian,
    bernoulli_log_prob,
    gaussian_log_prob,
)
from .layers import Linear, as_param, collect_params, ensure_rows, load_params, restore_rows

__all__ = [
    "GatedTransition",
    "LorenzTransition",
    "GaussianEmission",
    "BernoulliEmission",
    "GenerativeModel",
    "lorenz_drift",
    "transition_forward",
    "emission_forward",
    "initial_prior",
    "joint_log_prob",
]

# Column selectors: z @ _COL[i] picks component i as a [B, 1] matrix, and
# f_i @ _ROW[i] places it back into column i of a [B, 3] matrix.  This keeps
# the drift inside the plain matmul/elementwise op set.
_COL = [np.eye(3)[:, i:i + 1] for i in range(3)]
_ROW = [np.eye(3)[i:i + 1, :] for i in range(3)]


def lorenz_drift(z, sigma, rho, beta) -> Tensor:
    """Drift field (sigma (z2 - z1), z1 (rho - z3), z1 z2 - beta z3).

    Differentiable with respect to both the state and the three parameters.
    """
    z, was_vec = ensure_rows(z)
    if z.shape[-1] != 3:
        raise AutodiffError(f"Lorenz state must have 3 components, got {z.shape}")
    sigma, rho, beta = as_tensor(sigma), as_tensor(rho), as_tensor(beta)
    z1 = matmul(z, _COL[0])
    z2 = matmul(z, _COL[1])
    z3 = matmul(z, _COL[2])
    f1 = sigma * (z2 - z1)
    f2 = z1 * (rho - z3)
    f3 = z1 * z2 - beta * z3
    out = matmul(f1, _ROW[0]) + matmul(f2, _ROW[1]) + matmul(f3, _ROW[2])
    return restore_rows(out, was_vec)


class LorenzTransition:
    """Euler-discretized Lorenz step: mean = z + Ts * f(z), fixed noise."""

    n_z = 3

    def __init__(self, sigma: float, rho: float, beta: float,
                 ts: float = 0.01, noise_var: float = 0.1):
        self.sigma = Tensor(float(sigma), requires_grad=True)
        self.rho = Tensor(float(rho), requires_grad=True)
        self.beta = Tensor(float(beta), requires_grad=True)
        self.ts = float(ts)
        self.log_noise_var = float(np.log(noise_var))

    def __call__(self, z_prev) -> DiagGaussian:
        z, was_vec = ensure_rows(z_prev)
        if z.shape[-1] != 3:
            raise AutodiffError(f"state width {z.shape[-1]} != 3")
        mean = z + self.ts * lorenz_drift(z, self.sigma, self.rho, self.beta)
        log_var = Tensor(np.full(mean.shape, self.log_noise_var))
        return DiagGaussian(restore_rows(mean, was_vec),
                            restore_rows(log_var, was_vec))

    def theta(self) -> tuple[float, float, float]:
        return (self.sigma.item(), self.rho.item(), self.beta.item())

    def params(self):
        return {"sigma": self.sigma, "rho": self.rho, "beta": self.beta}

    def load(self, mapping):
        self.sigma = as_param(mapping["sigma"])
        self.rho = as_param(mapping["rho"])
        self.beta = as_param(mapping["beta"])


class GatedTransition:
    """Gated MLP transition: mean = (1 - g) * (W z + b) + g * h(z).

    The gate g and the proposed mean h are one-hidden-layer tanh MLPs of
    width n_z; the log-variance head is linear in h(z).  The linear skip is
    initialized to the identity so the map starts near a random walk.
    """

    def __init__(self, n_z: int, rng: np.random.Generator):
        self.n_z = n_z
        self.gate_hidden = Linear(n_z, n_z, rng)
        self.gate_out = Linear(n_z, n_z, rng)
        self.prop_hidden = Linear(n_z, n_z, rng)
        self.prop_out = Linear(n_z, n_z, rng)
        self.skip = Linear(n_z, n_z, identity=True)
        self.log_var_out = Linear(n_z, n_z, rng)

    def __call__(self, z_prev) -> DiagGaussian:
        z, was_vec = ensure_rows(z_prev)
        if z.shape[-1] != self.n_z:
            raise AutodiffError(f"state width {z.shape[-1]} != {self.n_z}")
        g = self.gate_out(self.gate_hidden(z).tanh()).sigmoid()
        h = self.prop_out(self.prop_hidden(z).tanh())
        mean = (1.0 - g) * self.skip(z) + g * h
        log_var = self.log_var_out(h)
        return DiagGaussian(restore_rows(mean, was_vec),
                            restore_rows(log_var, was_vec))

    def _parts(self):
        return {"gate_hidden": self.gate_hidden, "gate_out": self.gate_out,
                "prop_hidden": self.prop_hidden, "prop_out": self.prop_out,
                "skip": self.skip, "log_var_out": self.log_var_out}

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


class GaussianEmission:
    """Identity-mean Gaussian emission x = z + noise with fixed variance."""

    def __init__(self, n_z: int, noise_var: float = 0.1):
        self.n_z = n_z
        self.log_noise_var = float(np.log(noise_var))

    def __call__(self, z) -> DiagGaussian:
        z = as_tensor(z)
        if z.shape[-1] != self.n_z:
            raise AutodiffError(f"state width {z.shape[-1]} != {self.n_z}")
        return DiagGaussian(z, Tensor(np.full(z.shape, self.log_noise_var)))

    def params(self):
        return {}

    def load(self, mapping):
        pass


class BernoulliEmission:
    """MLP from latent state to per-channel Bernoulli logits."""

    def __init__(self, n_z: int, d_x: int, hidden: int, rng: np.random.Generator):
        self.n_z = n_z
        self.d_x = d_x
        self.hidden_layer = Linear(n_z, hidden, rng)
        self.logits_out = Linear(hidden, d_x, rng)

    def __call__(self, z) -> BernoulliVec:
        z, was_vec = ensure_rows(z)
        if z.shape[-1] != self.n_z:
            raise AutodiffError(f"state width {z.shape[-1]} != {self.n_z}")
        logits = self.logits_out(self.hidden_layer(z).tanh())
        return BernoulliVec(restore_rows(logits, was_vec))

    def _parts(self):
        return {"hidden_layer": self.hidden_layer, "logits_out": self.logits_out}

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


def initial_prior(n_z: int) -> DiagGaussian:
    """Standard-normal prior over the first latent state."""
    return DiagGaussian(Tensor(np.zeros(n_z)), Tensor(np.zeros(n_z)))


def transition_forward(model, z_prev) -> DiagGaussian:
    return model.transition(z_prev)


def emission_forward(model, z):
    return model.emission(z)


class GenerativeModel:
    """Transition + emission pair with a standard-normal initial prior."""

    def __init__(self, transition, emission, n_z: int):
        self.transition = transition
        self.emission = emission
        self.n_z = n_z

    def prior(self, shape=None) -> DiagGaussian:
        if shape is None:
            return initial_prior(self.n_z)
        zeros = np.zeros(tuple(shape) + (self.n_z,))
        return DiagGaussian(Tensor(zeros), Tensor(zeros.copy()))

    def log_emission(self, x, z) -> Tensor:
        dist = self.emission(z)
        if isinstance(dist, BernoulliVec):
            return bernoulli_log_prob(x, dist)
        return gaussian_log_prob(x, dist)

    def _parts(self):
        return {"transition": self.transition, "emission": self.emission}

    def params(self):
        return collect_params(self._parts())

    def load(self, mapping):
        load_params(self._parts(), mapping)


def joint_log_prob(model: GenerativeModel, xs, zs, mask=None) -> Tensor:
    """Masked log p(x_1:T, z_1:T) under the model.

    log p0(z_1) + sum_t log p(x_t | z_t) + sum_{t>=2} log p0(z_t | z_{t-1}),
    with each step-t term multiplied by mask_t.  `xs` is a [T, d] or
    [B, T, d] constant array; `zs` is a list of T state tensors ([d] or
    [B, d]); the result is a scalar or a [B] tensor.
    """
    xs = np.asarray(xs, dtype=np.float64)
    batched = xs.ndim == 3
    T = xs.shape[1] if batched else xs.shape[0]
    if len(zs) != T:
        raise AutodiffError(f"got {len(zs)} states for {T} observations")
    if mask is None:
        mask = np.ones(xs.shape[:-1])
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != xs.shape[:-1]:
        raise AutodiffError(f"mask shape {mask.shape} != {xs.shape[:-1]}")

    def step_x(t):
        return xs[:, t, :] if batched else xs[t]

    def step_m(t):
        return mask[:, t] if batched else mask[t]

    prior = model.prior(zs[0].shape[:-1] if zs[0].ndim > 1 else None)
    total = gaussian_log_prob(zs[0], prior) * step_m(0)
    for t in range(T):
        total = total + model.log_emission(step_x(t), zs[t]) * step_m(t)
        if t >= 1:
            trans = model.transition(zs[t - 1])
            total = total + gaussian_log_prob(zs[t], trans) * step_m(t)
    return total
