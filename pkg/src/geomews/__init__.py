"""Committor geometry, separatrix width indicators and passage times for
bistable stochastic differential equations."""
from importlib.metadata import PackageNotFoundError, version

from .kernels import BACKEND

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["BACKEND", "__version__"]
