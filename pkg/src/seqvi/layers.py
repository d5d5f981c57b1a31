"""Tiny parameter-container helpers shared by the model components.

All forward code operates on row matrices [B, d]; single vectors [d] are
promoted to one-row matrices and squeezed back, so every component is
shape-polymorphic over an optional batch axis.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, matmul

__all__ = ["Linear", "as_param", "ensure_rows", "restore_rows",
           "collect_params", "load_params"]


def as_param(value) -> Tensor:
    """Fresh requires-grad leaf holding `value` (used when loading weights)."""
    data = value.data if isinstance(value, Tensor) else value
    return Tensor(data, requires_grad=True)


def ensure_rows(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 1:
        return x.reshape((1, x.shape[0])), True
    return x, False


def restore_rows(t: Tensor, was_vector: bool) -> Tensor:
    if was_vector:
        return t.reshape((t.shape[-1],))
    return t


class Linear:
    """Affine map x -> x @ w + b with named, replaceable parameters."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None,
                 zero: bool = False, identity: bool = False):
        if identity:
            if n_in != n_out:
                raise ValueError("identity init needs square weights")
            w = np.eye(n_in)
        elif zero or rng is None:
            w = np.zeros((n_in, n_out))
        else:
            std = np.sqrt(2.0 / (n_in + n_out))
            w = rng.normal(0.0, std, size=(n_in, n_out))
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.w) + self.b

    def params(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}

    def load(self, mapping: dict[str, Tensor]) -> None:
        self.w = as_param(mapping["w"])
        self.b = as_param(mapping["b"])


def collect_params(parts: dict[str, object]) -> dict[str, Tensor]:
    """Flatten {prefix: component} into {"prefix.name": Tensor}."""
    out: dict[str, Tensor] = {}
    for prefix, part in parts.items():
        if isinstance(part, Tensor):
            out[prefix] = part
        else:
            for name, tensor in part.params().items():
                out[f"{prefix}.{name}"] = tensor
    return out


def load_params(parts: dict[str, object], mapping: dict[str, Tensor],
                setter=None) -> None:
    """Inverse of collect_params; `setter(prefix, tensor)` handles bare tensors."""
    for prefix, part in parts.items():
        if isinstance(part, Tensor):
            setter(prefix, as_param(mapping[prefix]))
        else:
            sub = {
                name[len(prefix) + 1:]: tensor
                for name, tensor in mapping.items()
                if name.startswith(prefix + ".")
            }
            part.load(sub)
