"""Sequential variational inference for deep state-space models.

Implements the deep Kalman filter training objective, its importance-weighted
variant, the structured RNN+combiner inference network, the Lorenz-attractor
state/parameter-estimation experiment, and an exact linear-Gaussian oracle for
validating bound properties.
"""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, stop_gradient  # noqa: F401
