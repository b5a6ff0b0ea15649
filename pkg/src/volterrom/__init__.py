"""Reduced-order models of parameter-dependent nonlinear systems built from
diagonal Volterra kernels, identified from step responses and interpolated
across the parameter space with Gaussian processes or neural networks."""

from ._backend import NAME as BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
