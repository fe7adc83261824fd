"""
Tensor engine: dense float tensors, differentiable ops, gradient checking.
"""

from engine.tensor import Graph, Tensor, backward, default_dtype, precision

__all__ = ["Graph", "Tensor", "backward", "default_dtype", "precision"]
