"""Self-supervised monocular depth with a camera-height scale anchor.

The package bundles a small numpy autodiff engine, differentiable view
synthesis, the photometric/smoothness objective, a ground-plane scale loss,
a toy attention depth network, a synthetic-scene harness, and evaluation
tooling behind the ``scaledepth`` CLI.
"""

from .autodiff import Tensor, gradient_check, no_grad

__all__ = ["Tensor", "gradient_check", "no_grad"]
__version__ = "0.1.0"
